//! Equilibrium engine for a two-retailer pricing game over two complementary
//! items, where retailer 1 may sell a mixed bundle and either retailer may
//! offer a price-matching guarantee on the bundle.
//!
//! The crate computes closed-form equilibria, checks them against an
//! independent best-response oracle, selects among subgames, and runs
//! parameter sweeps.

pub mod closed_form;
pub mod conditions;
pub mod error;
pub mod market;
pub mod oracle;
pub mod policy;
pub mod profit;
pub mod sweep;

pub use closed_form::{EquilibriumResult, TheoremId};
pub use conditions::{ConditionReport, ConditionSetId, HessianReport};
pub use error::{Error, Result};
pub use market::{DemandProfile, EffectivePrices, MarketParams, PriceVector, Regime, Scenario};
pub use profit::ProfitPair;
