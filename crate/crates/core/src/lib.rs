//! Worst-case optimal recovery of smooth graph signals from noisy partial labels.
//!
//! Given a weighted undirected graph, noisy observations of a signal on a
//! subset of vertices, a smoothness budget `eps` on the Dirichlet energy
//! `‖L^{1/2} f‖₂` and a noise budget `eta` on `‖e‖₂`, this crate
//!
//! * computes the Tikhonov regularization estimate for any trade-off
//!   parameter `tau ∈ (0,1)` ([`recovery`]),
//! * selects `tau` with a certified globally optimal worst-case error by
//!   reducing a two-variable semidefinite program to one-dimensional
//!   eigenvalue minimization ([`select::solve_global`]),
//! * selects a locally near-optimal `tau` (worst-case error within a factor
//!   of two of the best possible at the observed data) by bisection on a
//!   norm-balance equation ([`select::solve_local`]),
//! * certifies upper bounds on the local worst-case error of any estimate
//!   via a small semidefinite relaxation ([`lwce`]),
//! * and reproduces the accompanying semi-synthetic experiment protocol
//!   ([`experiments`]).
//!
//! All linear algebra is dense and deterministic; the intended regime is a
//! few thousand vertices at most.

pub mod experiments;
pub mod graph;
pub mod io;
pub mod lwce;
pub mod recovery;
pub mod sampling;
pub mod select;
pub mod spectral;

pub use graph::{
    build_clique_union, build_laplacian, connected_components, validate_observability,
    ComponentStructure, Graph, GraphError, LaplacianBundle,
};
pub use recovery::{
    apply_qoi, harmonic_interpolate, limit_tau_zero, regularize, regularizer_matrix, ModelParams,
    Observation, QuantityOfInterest, RecoveryError,
};
pub use select::{solve_global, solve_local, GlobalSolution, LocalSolution, SelectError};
