//! Block majorization-minimization on matrix manifolds.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`]: dense kernels (one-sided Jacobi SVD, thin QR, soft
//!   thresholding, power iteration). Everything downstream is built on these.
//! * [`manifolds`]: embedded-submanifold geometry for Euclidean blocks, the
//!   unit sphere, the Stiefel manifold, and fixed-rank matrices, with
//!   metric-projection retractions and constraint projections.
//! * [`surrogates`]: prox-linear tangent-space surrogates, exact and inexact
//!   subproblem solvers, and optimality-gap certificates.
//! * [`solvers`]: the block MM driver and the baseline iterations (inexact
//!   RGD, NIHT, block projected gradient, Stiefel proximal gradient).
//! * [`problems`]: matrix recovery from Gaussian measurements, 3-way CP
//!   decomposition, and sparse NMF, all as block-structured instances.
//! * [`verify`]: independent checkers (finite differences, descent audits,
//!   rate fits, gap soundness) used by the test suites and the CLI.

pub mod linalg;
pub mod manifolds;
pub mod problems;
pub mod solvers;
pub mod surrogates;
pub mod tensor;
pub mod verify;

pub use linalg::Matrix;
