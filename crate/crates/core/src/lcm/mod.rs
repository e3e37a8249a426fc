//! Local correlation Monte Carlo: each step picks the family member whose
//! basket variance equals the index local variance at the current state.

mod cov;
mod engine;
mod pricing;

pub use cov::{
    check_bounds, cov_terms, cov_terms_scaled, scaled_vols, solve_u_star, solve_u_star_general,
    BoundStatus, BoundsReport, CovTerms, UStar,
};
pub use engine::{
    simulate, BoundsPolicy, CorrelationMode, LcmModel, PathCube, PathSummary, SimulationConfig,
    StepRecord,
};
pub use pricing::{
    average_correlation, correlation_by_strike, price_european, write_correlation_csv,
    CorrelationRow, Payoff, PriceDiagnostics, PriceResult,
};
