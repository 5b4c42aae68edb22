//! Base-stock competition between a manufacturer selling direct and the
//! retailers it supplies, under stochastic demand with one-pass stock-out
//! substitution.
//!
//! The crate is `no_std` (it needs `alloc`). Enable `parallel` to spread
//! row-level work over a rayon pool; results do not depend on it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod demand;
pub mod error;
mod exec;
pub mod market;
pub mod nash;
pub mod oracle;
pub mod profit;
pub mod sim;
pub mod stackelberg;
pub mod stats;

pub use demand::{composite_demand, DemandModel, Dependence, Marginal, SampleSet, StockVector};
pub use error::{ConfigError, DemandError, SolveError};
pub use market::{Condition, ConditionReport, MarketConfig};
pub use profit::{grad_manufacturer, hessian_fd, profit_manufacturer, profit_retailer, Hessian, ProfitEstimate};
pub use nash::{
    best_response_manufacturer, best_response_retailer, nash_solve, uniqueness_diagnostic, EquilibriumReport,
    NashOptions, Uniqueness,
};
pub use oracle::{exact_profit, grid_nash, grid_stackelberg, DiscreteScenario};
pub use sim::{deviation_test, simulate, SimTrace};
pub use stackelberg::{
    compare_games, curvature_check, follower_equilibrium, follower_slope, stackelberg_solve, GameComparison,
    StackelbergOptions, StackelbergReport,
};
