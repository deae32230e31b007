//! Strongly budget-balanced mechanisms for multi-sided markets.
//!
//! Agents belong to categories; a deal takes `recipe[g]` agents from each
//! category `g`. Buyers have positive values and sellers negative ones, so a
//! deal's gain from trade is simply the sum of its members' values.

pub mod ascending;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod market;
pub mod mcafee;
pub mod mechanism;
pub mod money;
pub mod reduction;
pub mod sim;
pub mod verify;

pub use ascending::{clock, run_ascending, AscendingResult};
pub use engine::{build_table, expected_gft, finalize, optimal_gft, ProcurementSetTable, TraderPools};
pub use error::{Error, Result};
pub use market::{Agent, Market, Outcome, ProcurementSet, Recipe};
pub use mcafee::{run_mcafee, run_mcafee_market, McAfeeResult};
pub use mechanism::Mechanism;
pub use money::Money;
pub use reduction::{reduce, run_reduction, ReductionResult};
pub use sim::{run_experiment, ExperimentSpec, ExperimentTable};
