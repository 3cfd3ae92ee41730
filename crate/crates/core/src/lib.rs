//! Numerical laboratory for Paris Metro Pricing: multi-class congestion
//! equilibria, welfare and profit evaluation, monopoly price search and
//! duopoly best responses.

pub mod congestion;
pub mod duopoly;
pub mod equilibrium;
pub mod error;
pub mod monopoly;
pub mod population;
mod search;

pub use congestion::CongestionModel;
pub use duopoly::{DuopolyScenario, ProviderStrategy, ResponseMode};
pub use equilibrium::{Equilibrium, MarketScenario};
pub use error::{PmpError, Result};
pub use population::TypeDistribution;
