//! Marginal-price arbitrage and routing solvers for constant-product AMM
//! curves.
//!
//! A market is a set of [`Curve`]s over a [`TokenSet`]. Every curve
//! responds to a price vector with the trade that moves its marginal price
//! to the matching pairwise price; solving the market means finding the
//! price vector at which all non-target token flows balance. The profit is
//! whatever comes out in the target token.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curves;
pub mod error;
pub mod full;
pub mod market;
pub mod oracle;
pub mod pair;
pub mod scengen;
pub mod tim;

pub use curves::{
    marginal_price, prf, prf_derivative, regularize_limit_order, state_from_price, Curve,
    CurveDelta, Direction, LeveredParams, LIMIT_ORDER_EPS0,
};
pub use error::{Error, Result};
pub use full::{
    curve_block, jacobian_first, jacobian_sum_first, newton_solve, newton_step, optimize_full,
    optimize_full_from, FullResult, FullStatus, Jacobian, JacobianPath, Merit, NewtonOptions,
    NewtonOutcome, NewtonStep, RootProblem, SolverConfig,
};
pub use market::{
    verify_circularity, FlowVector, Market, PairwisePrices, PriceVector, RoutingSpec, TokenSet,
};
pub use nalgebra::{DMatrix, DVector};
pub use oracle::{
    grid_profit_oracle, verify_alignment, verify_cof, Certificate, CofTolerances, Constraint,
    GridOracleResult, GridSpec, TokenMatrix, Violation,
};
pub use pair::{
    bisect, find_bracket, optimize_pair, Bisection, Bracket, BracketSearch, PairConfig, PairResult,
    PairStatus,
};
pub use scengen::{
    benchmark, generate, generate_desk, levered_curve_usd, time_call, unlevered_curve_usd,
    BenchMode, BenchReport, BenchRow, BenchSettings, ScenarioSpec,
};
pub use tim::{TimRow, TradeInstructionMatrix};
