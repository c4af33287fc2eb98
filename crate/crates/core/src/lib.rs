//! Nash equilibria of demand-response consumption games in which consumers
//! trade their electricity bill against the discomfort of deviating from a
//! preferred load profile.
//!
//! The crate computes equilibria under daily- and hourly-proportional billing
//! by best-response dynamics, compares them with centralized optima, and
//! reports the price of anarchy and price of efficiency as functions of the
//! preference factor `alpha`.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod game;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use game::{best_response_dynamics, potential, verify_equilibrium, BrdConfig, EquilibriumReport, PlayerOrder};
pub use metrics::EfficiencyRecord;
pub use model::{ConsumerSpec, CostModel, GameInstance, HorizonGrid, LoadMatrix, Mechanism};
