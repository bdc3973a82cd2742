//! Cournot duopoly benchmarks, Pareto bargaining solutions and repeated-game
//! Q-learning experiments with cost-asymmetric firms.

pub mod analysis;
pub mod bargaining;
pub mod error;
pub mod experiment;
pub mod io;
pub mod market;
pub mod par;
pub mod qlearning;
pub mod search;

pub use error::{Error, Result};
pub use market::{BenchmarkLabel, BenchmarkPoint, Firm, MarketParams, Outcome};
