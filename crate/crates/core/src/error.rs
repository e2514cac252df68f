use thiserror::Error;

use crate::market::Regime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid market parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("invalid price `{field}`: {reason}")]
    InvalidPrices { field: &'static str, reason: String },

    #[error("bundle price for retailer 1 supplied without mixed bundling")]
    UnexpectedBundlePrice,

    #[error("mixed bundling requires a bundle price for retailer 1")]
    MissingBundlePrice,

    /// Gradient requested exactly on the boundary between two price-ordering regimes.
    #[error("prices sit on the regime kink (r1 bundle-equivalent {r1_price} vs r2 bundle {r2_price})")]
    AmbiguousKink { r1_price: f64, r2_price: f64 },

    #[error("degenerate parameters: {0}")]
    DegenerateParams(String),

    #[error("regime {regime:?} profit of {retailer} is not strictly concave")]
    SingularSystem { retailer: &'static str, regime: Regime },

    #[error("unknown condition set `{0}` (expected one of A-F)")]
    UnknownSet(String),

    #[error("unknown parameter name `{0}`")]
    UnknownParameter(String),

    #[error("invalid sweep specification: {0}")]
    InvalidSweep(String),

    #[error("config error: {0}")]
    Config(String),
}
