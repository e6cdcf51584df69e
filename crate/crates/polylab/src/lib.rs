//! Monte Carlo laboratory for a Brownian directed polymer in a mollified
//! Gaussian space-time environment.
//!
//! The polymer weight of a path `W` on `[0, T]` is `exp(H)` with
//!
//! ```text
//! H = beta * sum_j pair(W_j, j)  -  (beta^2 / 2) * sum_j dt * local_v0(W_j)
//! ```
//!
//! where `pair` couples the path to an i.i.d. Gaussian cell field through a
//! compactly supported mollifier and `local_v0` is the discrete squared
//! kernel norm at the path position. The per-step compensator makes the
//! weight exactly mean one over the environment at any lattice spacing.
//!
//! Modules:
//! - [`kernels`]: mollifier, covariance table, discrete kernel norms
//! - [`noise`]: stateless counter-based Gaussian cell field
//! - [`polymer`]: paths, Hamiltonians, partition estimates, endpoint ensembles
//! - [`hermite`]: exact integer coefficient tables for the polynomials
//!   `I_n(T, x)` that are martingales under the polymer filtration
//! - [`analysis`]: Green potential quadrature, moment bounds, collision decay
//! - [`config`] / [`experiments`] / [`report`]: CLI layer
//!
//! Estimator reductions run over explicit seed lists in fixed-size chunks
//! (see [`exec`]); results are byte-identical across thread counts.

// Validation guards use negated comparisons so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod analysis;
pub mod config;
pub mod exec;
pub mod experiments;
pub mod hermite;
pub mod kernels;
pub mod noise;
pub mod polymer;
pub mod report;
pub mod rng;
pub mod stats;

/// Hard cap on the ambient dimension; keeps per-step buffers on the stack.
pub const MAX_DIM: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature failed to converge: {0}")]
    QuadratureDiverged(String),

    #[error("lattice spacing h = {h} too coarse for kernel radius K = {k} (need h <= K/2)")]
    GridTooCoarse { h: f64, k: f64 },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("empty seed list")]
    EmptySeeds,

    #[error("multi-index order {order} exceeds cap {cap}")]
    OrderCapExceeded { order: u32, cap: u32 },

    #[error("tail bound {tail:.3e} exceeds 1% of estimate {estimate:.3e}; increase t_max")]
    TailBoundTooLarge { tail: f64, estimate: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Stable machine-readable tag for the CLI error channel.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::QuadratureDiverged(_) => "quadrature_diverged",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::GeometryMismatch(_) => "geometry_mismatch",
            Error::EmptySeeds => "empty_seeds",
            Error::OrderCapExceeded { .. } => "order_cap_exceeded",
            Error::TailBoundTooLarge { .. } => "tail_bound_too_large",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
