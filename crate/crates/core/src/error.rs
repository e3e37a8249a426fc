use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("negative weight {weight} for asset {id}")]
    NegativeWeight { id: String, weight: f64 },

    #[error("composition references unknown asset {0}")]
    UnresolvedAsset(String),

    #[error(
        "index spot {index} does not match basket spot {basket} (relative gap {relative:.3e})"
    )]
    SpotMismatch {
        index: f64,
        basket: f64,
        relative: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("price {price} outside no-arbitrage bounds [{lower}, {upper}]")]
    PriceOutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("matrix is not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },

    #[error("diagonal entry {i} is {value}, expected 1")]
    NonUnitDiagonal { i: usize, value: f64 },

    #[error("off-diagonal entry ({i}, {j}) = {value} outside [-1, 1]")]
    EntryOutOfRange { i: usize, j: usize, value: f64 },

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error(
        "dispersion bound violated on path {path} at t={time:.4}: target {target:.6e} outside [{lower:.6e}, {upper:.6e}]"
    )]
    BoundViolation {
        path: usize,
        time: f64,
        target: f64,
        lower: f64,
        upper: f64,
    },

    #[error("non-finite path value for asset {asset} on path {path} at t={time:.4}")]
    PathBlowUp {
        path: usize,
        asset: usize,
        time: f64,
    },

    #[error("maturity {0} is not on the simulation date grid")]
    MaturityOffGrid(f64),

    #[error("unknown payoff: {0}")]
    UnknownPayoff(String),

    #[error("calibration failed: {0}")]
    Calibration(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Schema(_) => "schema",
            Error::NegativeWeight { .. } => "negative_weight",
            Error::UnresolvedAsset(_) => "unresolved_asset",
            Error::SpotMismatch { .. } => "spot_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::NonFinite(_) => "non_finite",
            Error::PriceOutOfBounds { .. } => "price_out_of_bounds",
            Error::ProbabilityOutOfRange(_) => "probability_out_of_range",
            Error::Asymmetric { .. } => "asymmetric",
            Error::NonUnitDiagonal { .. } => "non_unit_diagonal",
            Error::EntryOutOfRange { .. } => "entry_out_of_range",
            Error::NotPositiveSemidefinite { .. } => "not_psd",
            Error::Dimension { .. } => "dimension",
            Error::BoundViolation { .. } => "bound_violation",
            Error::PathBlowUp { .. } => "path_blow_up",
            Error::MaturityOffGrid(_) => "maturity_off_grid",
            Error::UnknownPayoff(_) => "unknown_payoff",
            Error::Calibration(_) => "calibration",
        }
    }
}

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what))
    }
}
