//! Simulation and verification of a fund manager's joint fund and private
//! wealth problem under high-water-mark performance fees or proportional
//! management fees.

pub mod cli;
pub mod closed_form;
pub mod config;
pub mod error;
pub mod fund;
pub mod hjb;
pub mod market;
pub mod montecarlo;
pub mod optimizer;
pub mod paths;
pub mod policies;
pub mod wealth;
pub mod welfare;

pub use error::{Error, Origin, Result};
pub use market::{validate, FeeScheme, MarketParams, PreferenceParams, SimConfig, ValidatedScenario};
pub use montecarlo::{simulate_terminal, EsrTarget, PolicyPair};
pub use welfare::EsrEstimate;
