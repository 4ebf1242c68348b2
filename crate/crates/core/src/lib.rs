//! Quantitative modeling of historical power allocation.
//!
//! Entities (nations, factions) carry uncertain measurements. The library
//! turns them into power indices, allocates shares with the Shapley value,
//! compares the result with observed outcomes, and propagates measurement
//! uncertainty through everything by seeded Monte Carlo.

pub mod allocation;
pub mod causal;
pub mod conflict;
pub mod error;
pub mod inference;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod transforms;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scenario::{load_scenario, load_shipped, Scenario};
