//! Streaming lower-barrier tracker.
//!
//! The tracker absorbs vectors `x_1, x_2, …` one at a time into
//! `A_k = Σ_{j≤k} x_j x_jᵀ` and raises a shift `l_k` while keeping
//! `A_k - l_k·I ≻ 0` and the potential `tr (A_k - l_k·I)⁻¹ ≤ φ`. Starting from
//! `A_0 = 0`, `l_0 = -p/φ` (potential exactly `φ`), each vector `v` moves the
//! shift by
//!
//! ```text
//!     Δ = q(l, v) / (1 + 3φ·q(l, v) + Q(l, v))
//! ```
//!
//! which preserves both conditions, so `λ_min(A_n) ≥ l_n` at every step.
//!
//! Each step refactorizes `A_k - l_k·I` from scratch (`O(p³)`).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{rank_one_update_in_place, shifted_factorize, ShiftedFactorization, SymMatrix, Vector};

/// Absolute slack allowed on the potential cap before a step is rejected.
pub const TRACE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BarrierState {
    phi: f64,
    matrix: SymMatrix,
    shift: f64,
    deltas: Vec<f64>,
    factor: ShiftedFactorization,
    verify: bool,
}

impl BarrierState {
    /// Fresh tracker with `A = 0` and `l = -p/φ`.
    pub fn new(p: usize, phi: f64) -> Result<Self> {
        if p == 0 {
            return Err(invalid("dimension p must be at least 1"));
        }
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(invalid(format!("phi must be positive and finite, got {phi}")));
        }
        let matrix = SymMatrix::zeros(p)?;
        let shift = -(p as f64) / phi;
        let factor = shifted_factorize(&matrix, shift)?;
        Ok(Self {
            phi,
            matrix,
            shift,
            deltas: Vec::new(),
            factor,
            verify: false,
        })
    }

    /// Enables re-verification of the entry invariants (fresh factorization
    /// and potential cap) before every step.
    pub fn with_verification(mut self, verify: bool) -> Self {
        self.verify = verify;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Current `A_k`.
    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    /// Current shift `l_k`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn steps(&self) -> usize {
        self.deltas.len()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// `tr (A_k - l_k·I)⁻¹`.
    pub fn potential(&self) -> f64 {
        self.factor.inverse_trace()
    }

    pub fn factorization(&self) -> &ShiftedFactorization {
        &self.factor
    }

    /// Re-derives both invariants from scratch.
    pub fn check_invariants(&self) -> Result<()> {
        let step = self.steps();
        let fresh = shifted_factorize(&self.matrix, self.shift).map_err(|e| Error::InvariantViolation {
            step,
            reason: format!("A - l·I is not positive definite: {e}"),
        })?;
        let potential = fresh.inverse_trace();
        if potential > self.phi + TRACE_SLACK {
            return Err(Error::InvariantViolation {
                step,
                reason: format!("potential {potential} exceeds cap {}", self.phi),
            });
        }
        Ok(())
    }

    /// Absorbs `v`, returning the realized increment `Δ`. On error the state
    /// is left untouched.
    pub fn step(&mut self, v: &Vector) -> Result<f64> {
        let p = self.dim();
        if v.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: v.dim(),
            });
        }
        if self.verify {
            self.check_invariants()?;
        }
        let delta = barrier_increment(&self.factor, self.phi, v)?;
        let step = self.steps() + 1;

        let mut matrix = self.matrix.clone();
        rank_one_update_in_place(&mut matrix, v)?;
        let shift = self.shift + delta;
        let factor = shifted_factorize(&matrix, shift).map_err(|e| Error::InvariantViolation {
            step,
            reason: format!("A_k - l_k·I lost positive definiteness: {e}"),
        })?;
        let potential = factor.inverse_trace();
        if potential > self.phi + TRACE_SLACK {
            return Err(Error::InvariantViolation {
                step,
                reason: format!("potential {potential} exceeds cap {} after update", self.phi),
            });
        }

        self.matrix = matrix;
        self.shift = shift;
        self.factor = factor;
        self.deltas.push(delta);
        Ok(delta)
    }
}

/// Safe shift increment for absorbing `v` at the factorized state `A - l·I`
/// under potential cap `phi`.
pub fn barrier_increment(f: &ShiftedFactorization, phi: f64, v: &Vector) -> Result<f64> {
    let (big, small) = f.big_and_small_q(v)?;
    Ok(small / (1.0 + 3.0 * phi * small + big))
}

pub fn barrier_new(p: usize, phi: f64) -> Result<BarrierState> {
    BarrierState::new(p, phi)
}

/// Value-style step: consumes the state and returns the successor with `Δ`.
pub fn barrier_step(mut state: BarrierState, v: &Vector) -> Result<(BarrierState, f64)> {
    let delta = state.step(v)?;
    Ok((state, delta))
}

/// Outcome of running the tracker over a whole stream.
#[derive(Debug, Clone)]
pub struct CertifiedBound {
    /// Final shift `l_n`, a certified lower bound on `λ_min(A_n)`.
    pub l_n: f64,
    /// `l_n / n`, the matching bound on `λ_min(n⁻¹ A_n)`.
    pub l_n_over_n: f64,
    pub state: BarrierState,
}

impl CertifiedBound {
    pub fn deltas(&self) -> &[f64] {
        self.state.deltas()
    }

    pub fn n(&self) -> usize {
        self.state.steps()
    }
}

pub fn certify_stream<I>(p: usize, phi: f64, vectors: I, verify: bool) -> Result<CertifiedBound>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Vector>,
{
    let mut state = BarrierState::new(p, phi)?.with_verification(verify);
    for v in vectors {
        state.step(std::borrow::Borrow::borrow(&v))?;
    }
    let n = state.steps();
    if n == 0 {
        return Err(invalid("stream must contain at least one vector"));
    }
    Ok(CertifiedBound {
        l_n: state.shift(),
        l_n_over_n: state.shift() / n as f64,
        state,
    })
}

/// How the potential cap `φ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PhiMode {
    /// `φ = √y / (2√L₂)`.
    Theorem2L2 { l2: f64, y: f64 },
    /// `φ = 1/4`.
    Theorem2Kp,
    /// `φ = 1 / (5a)`.
    Theorem1 { a: f64 },
    /// Caller-supplied cap.
    Fixed { phi: f64 },
}

pub fn choose_phi(mode: PhiMode) -> Result<f64> {
    match mode {
        PhiMode::Theorem2L2 { l2, y } => {
            if !(l2 > 0.0) || !l2.is_finite() {
                return Err(invalid(format!("L2 must be positive and finite, got {l2}")));
            }
            if !(y > 0.0 && y < 1.0) {
                return Err(invalid(format!("y must lie in (0, 1), got {y}")));
            }
            Ok(y.sqrt() / (2.0 * l2.sqrt()))
        }
        PhiMode::Theorem2Kp => Ok(0.25),
        PhiMode::Theorem1 { a } => {
            if !(a > 0.0) || !a.is_finite() {
                return Err(invalid(format!("a must be positive, got {a}")));
            }
            Ok(1.0 / (5.0 * a))
        }
        PhiMode::Fixed { phi } => {
            if !(phi > 0.0) || !phi.is_finite() {
                return Err(invalid(format!("phi must be positive, got {phi}")));
            }
            Ok(phi)
        }
    }
}
