//! Barrier-potential certificates for the smallest eigenvalue of streaming
//! Gram matrices, together with evaluators for the closed-form lower bounds
//! on `λ_min(n⁻¹ Σ X_k X_kᵀ)` and Monte Carlo machinery that checks them
//! against exact eigensolves.
//!
//! Module map:
//! - [`linalg`]: dense symmetric primitives (shifted Cholesky solves, the
//!   `Q`/`q` functionals, rank-one updates, reference eigensolver, matrix files).
//! - [`barrier`]: the streaming tracker that certifies `λ_min(A_n) ≥ l_n`.
//! - [`ensembles`]: isotropic random-vector generators, including the
//!   discrete Kashin construction.
//! - [`moments`]: the moment functionals `c(a)`, `C(a)`, `L(α)`, `M(α)`, `K`.
//! - [`bounds`]: theorem and corollary evaluators.
//! - [`checks`]: statistical verification suites for the step lemma, the
//!   increment-moment lemma and the martingale tail lemma.
//! - [`harness`]: seeded Monte Carlo campaigns and report emission.

pub mod barrier;
pub mod bounds;
pub mod checks;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod moments;
pub mod quadrature;
pub mod seed;

pub use error::{Error, Result};
