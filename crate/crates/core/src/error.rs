use thiserror::Error;

pub type Result<T> = std::result::Result<T, LobError>;

#[derive(Debug, Error)]
pub enum LobError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("unstable regime: kℓ_ℓ = {k_ll} ≥ ζ_c = {zeta_c}")]
    Unstable { k_ll: f64, zeta_c: f64 },

    #[error("singular linear system at row {row}")]
    Singular { row: usize },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("impact diverges: requested volume {requested} ≥ available revealed volume {available}")]
    ImpactDivergence { requested: f64, available: f64 },

    #[error("liquidity crisis: {0}")]
    LiquidityCrisis(String),

    #[error("price left the simulation domain at step {step}")]
    DomainOverflow { step: u64 },

    #[error("degenerate book: {0}")]
    DegenerateBook(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(LobError::InvalidParameter { name, value, reason: "must be finite and strictly positive".into() })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(LobError::InvalidParameter { name, value, reason: "must be finite and non-negative".into() })
    }
}
