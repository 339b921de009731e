//! Random dual coordinate incremental aggregated gradient (RDCIAG) solver for
//! separable composite convex problems
//!
//! ```text
//! min_x  Σᵢ fᵢ(xᵢ) + Σⱼ gⱼ(𝒜ⱼx)
//! ```
//!
//! solved through the Fenchel–Rockafellar dual with simulated stale gradients.

// `!(x > 0.0)` rejects NaN together with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod applications;
pub mod diagnostics;
pub mod error;
pub mod functions;
pub mod problem;
pub mod spaces;

pub use algorithms::{
    deterministic_candidate, dual_pg_step, piag_step, random_dbcd_step, rdciag_step, run, sparse_kaczmarz_step,
    DelaySchedule, GradientTable, KaczmarzState, Method, RngSpec, RunOptions, SolverState, StopRule,
};
pub use diagnostics::{RateReport, Trace, TraceField, TraceMeta, TraceRow};
pub use error::{Error, Result};
pub use functions::{project_set, ComponentKind, ConvexSet, SeparableComponent, Utility};
pub use problem::{solve_z0, CompositeProblem, ProblemConstants, ReferenceSolution};
pub use spaces::{embed_block, operator_block_norm, BlockLayout, BlockOperator, BlockVector, DenseMatrix};
