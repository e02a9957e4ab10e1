//! Stationary joint queue-length distribution of the non-preemptive
//! multi-server priority queue with `K` levels.
//!
//! Two independent solvers are provided: fixed-point iteration on the
//! truncated balance equations ([`fpi`]) and inversion of the closed-form
//! multivariate PGF ([`pgf`], [`inversion`]). [`diagnostics`] measures their
//! accuracy and [`simulator`] cross-checks marginals by Monte Carlo.
//!
//! Axis 0 of every joint array is the highest priority level.

// `!(x > 0.0)` is how the parameter checks reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod fpi;
pub mod inversion;
pub mod io;
pub mod memory;
pub mod model;
pub mod pgf;
pub mod pmf;
pub mod simulator;

pub use error::{Error, Result};
pub use inversion::{MixtureScheme, SchemeOptions};
pub use memory::MemoryLimit;
pub use model::{ErlangQuantities, ModelParams};
pub use pgf::{PgfEvaluator, ProductForm, C64};
pub use pmf::{full_pmf, JointPmf, PmfKind};
