//! Market snapshot model: rate and dividend curves, forwards, implied
//! volatility quotes, the smoothed call-price surface and the Black pricer.

mod black;
mod curve;
mod forward;
mod snapshot;
mod surface;

pub use black::{black_call, black_put, implied_vol};
pub use curve::{DiscountCurve, RateCurve};
pub use forward::{BasketLeg, Carry, ForwardCurve};
pub use snapshot::{
    load_snapshot, save_snapshot, AssetFile, AssetQuote, CurvePoint, IndexComposition,
    MarketSnapshot, SnapshotFile, WeightFile, SPOT_RECONCILE_TOLERANCE,
};
pub use surface::{
    call_surface, CallPoint, CallSurface, SmoothingParams, VarianceJet, VolQuotes, VolSurface,
};
