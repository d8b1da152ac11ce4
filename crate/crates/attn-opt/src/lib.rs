//! Optimal dynamic allocation of attention across correlated Gaussian
//! information sources.
//!
//! An agent learns about `ω = α′θ` by splitting a unit flow of attention
//! across sources that each reveal one attribute of `θ ~ N(μ, Σ)`. When the
//! prior satisfies one of the sufficient conditions in [`assumptions`], the
//! variance-minimizing allocation is a finite sequence of stages with nested
//! supports and constant mixtures, computed by [`stages::solve_stages`] and
//! checked against the direct convex minimizer in [`oracle`].

pub mod assumptions;
pub mod binary_choice;
pub mod cli;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod manipulation;
pub mod news;
pub mod oracle;
pub mod sim;
pub mod stages;

pub use assumptions::{classify, AssumptionReport, TriState, Verdict};
pub use error::{Error, Result};
pub use gaussian::{AttentionVector, PosteriorState, Problem};
pub use oracle::{constrained_t_optimal, monotonicity_scan, t_optimal, OracleResult};
pub use stages::{k2_closed_form, solve_stages, transformed_weights, Stage, StagePath};
