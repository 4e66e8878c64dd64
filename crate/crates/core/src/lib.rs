//! Primal-dual momentum solvers for nonconvex-concave saddle problems
//! `min_x max_y L(x, y) - h(y)` where `L(., y)` satisfies a PL condition
//! and `L(x, .)` is affine.

// `!(a < b)` checks double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod metrics;
pub mod problem;
pub mod problems;
pub mod prox;
pub mod schedule;
pub mod solvers;

pub use error::{Error, Result};
pub use problem::{IterateState, ProblemConstants, ProblemInstance, SaddleOracle, Vector};
pub use prox::ProxSpec;
pub use schedule::{make_schedule, Schedule, ScheduleRules};
pub use solvers::{run, RunConfig, RunOutput, SolverKind};
