//! Randomized verification suites for the three lemmas behind the bounds:
//! the one-step barrier increment, the moment inequalities for `Δ`, and the
//! sub-Gaussian lower tail of nonnegative martingale sums.
//!
//! Every suite returns a [`VerificationReport`]; failures are recorded in the
//! report rather than raised.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{barrier_increment, BarrierState};
use crate::ensembles::{haar_orthogonal, Ensemble, EnsembleSpec, Family};
use crate::error::{invalid, Error, Result};
use crate::linalg::{rank_one_update, shifted_factorize, SymMatrix, Vector};
use crate::moments::{exact_moments, ExactMoments};
use crate::quadrature::{integrate_half_line, normal_expectation, DEFAULT_TOLERANCE};
use crate::seed::rng_for;

/// Multiple of the standard error allowed on every statistical comparison.
pub const SIGMA_SLACK: f64 = 3.0;

/// Float slack on the post-step potential cap, relative to `max(1, φ)`.
pub const LEMMA1_TRACE_SLACK: f64 = 1e-8;

/// Tolerance for matching the isotropic Gaussian `E Δ` against quadrature.
pub const QUADRATURE_MATCH_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One comparison `observed <= threshold + slack` or
/// `observed >= threshold - slack`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub slack: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, observed: f64, threshold: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            threshold,
            slack,
            relation: Relation::AtMost,
            pass: observed <= threshold + slack,
        }
    }

    pub fn at_least(name: impl Into<String>, observed: f64, threshold: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            threshold,
            slack,
            relation: Relation::AtLeast,
            pass: observed >= threshold - slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub trials: usize,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>, trials: usize) -> Self {
        Self {
            suite: suite.into(),
            trials,
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Appends the checks of `other`, prefixing their names with `label`.
    pub fn absorb(&mut self, label: &str, other: VerificationReport) {
        self.checks.extend(other.checks.into_iter().map(|mut c| {
            c.name = format!("{label}: {}", c.name);
            c
        }));
    }
}

/// `3·√(π(1-π)/trials)`, the binomial allowance around a nominal rate.
pub fn binomial_slack(nominal: f64, trials: usize) -> f64 {
    SIGMA_SLACK * (nominal * (1.0 - nominal) / trials as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Lemma 1: one barrier step
// ---------------------------------------------------------------------------

/// A state `(A, l, φ)` with `A - l·I ≻ 0` and `tr(A - l·I)⁻¹ ≤ φ`, plus the
/// vector to absorb.
#[derive(Debug, Clone)]
pub struct Lemma1Instance {
    pub a: SymMatrix,
    pub shift: f64,
    pub phi: f64,
    pub v: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Outcome {
    pub delta: f64,
    pub phi: f64,
    pub potential_before: f64,
    /// `tr(A + vvᵀ - (l + Δ)I)⁻¹`, or `None` when the shifted update is not
    /// positive definite.
    pub potential_after: Option<f64>,
}

impl Lemma1Outcome {
    pub fn positive_definite(&self) -> bool {
        self.potential_after.is_some()
    }

    /// Amount by which the new potential exceeds `φ`, relative to `max(1, φ)`.
    pub fn cap_excess(&self) -> f64 {
        self.potential_after
            .map_or(f64::INFINITY, |t| (t - self.phi) / self.phi.max(1.0))
    }
}

/// Random instance: `p ∈ 1..=20`, log-uniform spectrum in a Haar basis, a
/// shift strictly below `λ_min`, `φ` at or above the current potential, and a
/// random vector of log-uniform length.
pub fn random_lemma1_instance<R: Rng + ?Sized>(rng: &mut R) -> Result<Lemma1Instance> {
    let p = rng.random_range(1..=20usize);
    let q = haar_orthogonal(p, rng);
    let eigs: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0f64..3.0).exp()).collect();
    let lambda_min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eigs)) * q.transpose();
    let a = SymMatrix::from_matrix((&m + m.transpose()) * 0.5)?;
    let gap = lambda_min * 10f64.powf(rng.random_range(-1.5..1.0));
    let shift = lambda_min - gap;
    let potential = shifted_factorize(&a, shift)?.inverse_trace();
    let phi = if rng.random_bool(0.25) {
        potential
    } else {
        potential * (1.0 + rng.random::<f64>())
    };
    let norm = rng.random_range(-3.0f64..3.0).exp();
    let dir: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v = Vector::new(dir.into_iter().map(|x| norm * x / len).collect());
    Ok(Lemma1Instance { a, shift, phi, v })
}

pub fn lemma1_check(inst: &Lemma1Instance) -> Result<Lemma1Outcome> {
    let before = shifted_factorize(&inst.a, inst.shift)?;
    let delta = barrier_increment(&before, inst.phi, &inst.v)?;
    let updated = rank_one_update(&inst.a, &inst.v)?;
    let potential_after = match shifted_factorize(&updated, inst.shift + delta) {
        Ok(f) => Some(f.inverse_trace()),
        Err(Error::NotPositiveDefinite { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Lemma1Outcome {
        delta,
        phi: inst.phi,
        potential_before: before.inverse_trace(),
        potential_after,
    })
}

pub fn lemma1_suite(trials: usize, seed: u64) -> Result<VerificationReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            lemma1_check(&random_lemma1_instance(&mut rng)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let not_pd = outcomes.iter().filter(|o| !o.positive_definite()).count();
    let max_excess = outcomes.iter().map(Lemma1Outcome::cap_excess).fold(f64::NEG_INFINITY, f64::max);
    let max_growth = outcomes
        .iter()
        .map(|o| {
            o.potential_after
                .map_or(f64::INFINITY, |t| (t - o.potential_before) / o.potential_before.max(1.0))
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let min_delta = outcomes.iter().map(|o| o.delta).fold(f64::INFINITY, f64::min);
    let max_scaled_delta = outcomes.iter().map(|o| 3.0 * o.phi * o.delta).fold(0.0, f64::max);

    let mut report = VerificationReport::new("lemma1", trials);
    report.checks.push(Check::at_most("shifted update not positive definite (count)", not_pd as f64, 0.0, 0.0));
    report.checks.push(Check::at_most("max (potential after - phi) / max(1, phi)", max_excess, 0.0, LEMMA1_TRACE_SLACK));
    report.checks.push(Check::at_most(
        "max potential growth / max(1, potential before)",
        max_growth,
        0.0,
        LEMMA1_TRACE_SLACK,
    ));
    report.checks.push(Check::at_least("min delta", min_delta, 0.0, 0.0));
    // Strict `Δ < 1/(3φ)` holds exactly; in floats it can only tie.
    report.checks.push(Check::at_most("max 3*phi*delta", max_scaled_delta, 1.0, 0.0));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Lemma 2: moments of Δ for a commuting pair
// ---------------------------------------------------------------------------

/// Positive definite `A = Σ aᵢ vᵢvᵢᵀ`, `B = Σ bᵢ vᵢvᵢᵀ` sharing the orthonormal
/// basis `{vᵢ}`, with `tr A = 1` and `tr B ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutingPair {
    basis: DMatrix<f64>,
    a_eigs: Vec<f64>,
    b_eigs: Vec<f64>,
}

const TRACE_TOLERANCE: f64 = 1e-10;

impl CommutingPair {
    pub fn new(basis: DMatrix<f64>, a_eigs: Vec<f64>, b_eigs: Vec<f64>) -> Result<Self> {
        let p = basis.nrows();
        if basis.ncols() != p || a_eigs.len() != p || b_eigs.len() != p || p == 0 {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: a_eigs.len().max(b_eigs.len()),
            });
        }
        let gram = basis.transpose() * &basis;
        if (gram - DMatrix::identity(p, p)).amax() > 1e-10 {
            return Err(invalid("basis is not orthonormal"));
        }
        if a_eigs.iter().chain(&b_eigs).any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(invalid("eigenvalues must be positive and finite"));
        }
        let tr_a: f64 = a_eigs.iter().sum();
        let tr_b: f64 = b_eigs.iter().sum();
        if (tr_a - 1.0).abs() > TRACE_TOLERANCE {
            return Err(invalid(format!("tr A must equal 1, got {tr_a}")));
        }
        if tr_b > 1.0 + TRACE_TOLERANCE {
            return Err(invalid(format!("tr B must not exceed 1, got {tr_b}")));
        }
        Ok(Self { basis, a_eigs, b_eigs })
    }

    /// `A = B = I/p`.
    pub fn isotropic(p: usize) -> Result<Self> {
        let w = vec![1.0 / p as f64; p];
        Self::new(DMatrix::identity(p, p), w.clone(), w)
    }

    /// Haar basis, log-uniform spectra; `tr B` uniform in `[0.2, 1]`.
    pub fn random<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<Self> {
        let basis = haar_orthogonal(p, rng);
        let a = log_uniform_weights(p, 1.0, rng);
        let tr_b = rng.random_range(0.2..=1.0);
        let b = log_uniform_weights(p, tr_b, rng);
        Self::new(basis, a, b)
    }

    pub fn dim(&self) -> usize {
        self.a_eigs.len()
    }

    fn compose(&self, eigs: &[f64]) -> SymMatrix {
        let m = &self.basis * DMatrix::from_diagonal(&DVector::from_column_slice(eigs)) * self.basis.transpose();
        SymMatrix::from_matrix((&m + m.transpose()) * 0.5).expect("symmetrized")
    }

    pub fn a(&self) -> SymMatrix {
        self.compose(&self.a_eigs)
    }

    pub fn b(&self) -> SymMatrix {
        self.compose(&self.b_eigs)
    }

    /// `(xᵀAx, xᵀBx)`.
    pub fn quadratic_forms(&self, x: &[f64]) -> (f64, f64) {
        let y = self.basis.tr_mul(&DVector::from_column_slice(x));
        y.iter()
            .zip(self.a_eigs.iter().zip(&self.b_eigs))
            .fold((0.0, 0.0), |(sa, sb), (yi, (ai, bi))| (sa + ai * yi * yi, sb + bi * yi * yi))
    }
}

fn log_uniform_weights<R: Rng + ?Sized>(p: usize, total: f64, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0f64..2.0).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| total * x / s).collect()
}

/// `Δ = xa / (1 + (xa + xb/3)/b)` from the two quadratic forms.
pub fn lemma2_delta(xa: f64, xb: f64, b: f64) -> f64 {
    xa / (1.0 + (xa + xb / 3.0) / b)
}

pub fn lemma2_delta_sample(x: &Vector, pair: &CommutingPair, b: f64) -> Result<f64> {
    if x.dim() != pair.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            actual: x.dim(),
        });
    }
    if !(b > 0.0) {
        return Err(invalid(format!("b must be positive, got {b}")));
    }
    let (xa, xb) = pair.quadratic_forms(x.as_slice());
    Ok(lemma2_delta(xa, xb, b))
}

/// `E Δ` for a Gaussian vector and `A = B = I/p`, where `XᵀAX ~ χ²_p / p`.
pub fn gaussian_isotropic_delta_mean(p: usize, b: f64) -> f64 {
    let k = 4.0 / (3.0 * b);
    let h = |s: f64| s / (1.0 + k * s);
    if p == 1 {
        return normal_expectation(|g| h(g * g), &[0.0]);
    }
    let shape = 0.5 * p as f64;
    let log_norm = shape * shape.ln() - statrs::function::gamma::ln_gamma(shape);
    let density = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (log_norm + (shape - 1.0) * s.ln() - shape * s).exp()
        }
    };
    integrate_half_line(|s| h(s) * density(s), &[1.0], DEFAULT_TOLERANCE)
}

/// Reference moment values entering the Lemma 2 inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Reference {
    pub c_a: f64,
    pub big_c_a: f64,
    pub big_c_b: f64,
    pub k: f64,
    /// `L(2)`, when finite.
    pub l2: Option<f64>,
}

impl Lemma2Reference {
    pub fn from_exact(ex: &ExactMoments, a: f64, b: f64) -> Self {
        let l2 = ex.l(2.0).value;
        Self {
            c_a: ex.c(a).value,
            big_c_a: ex.big_c(a).value,
            big_c_b: ex.big_c(b).value,
            k: ex.k().value,
            l2: l2.is_finite().then_some(l2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Config {
    pub ensemble: EnsembleSpec,
    pub samples: usize,
    pub a: f64,
    pub b: f64,
    /// Pair 0 is always `A = B = I/p`; the rest are random.
    pub pairs: usize,
    pub seed: u64,
}

/// Running sums for a mean estimate with one control variate of known mean.
#[derive(Debug, Default, Clone, Copy)]
struct ControlVariate {
    n: f64,
    sy: f64,
    sc: f64,
    syy: f64,
    scc: f64,
    syc: f64,
}

impl ControlVariate {
    /// `c` must already be centred at its known mean.
    fn push(&mut self, y: f64, c: f64) {
        self.n += 1.0;
        self.sy += y;
        self.sc += c;
        self.syy += y * y;
        self.scc += c * c;
        self.syc += y * c;
    }

    /// `(estimate, standard error)`.
    fn estimate(&self) -> (f64, f64) {
        let n = self.n;
        let (my, mc) = (self.sy / n, self.sc / n);
        let vyy = (self.syy - n * my * my).max(0.0);
        let vcc = (self.scc - n * mc * mc).max(0.0);
        let vyc = self.syc - n * my * mc;
        let beta = if vcc > 0.0 { vyc / vcc } else { 0.0 };
        let resid = (vyy - beta * vyc).max(0.0) / (n - 2.0).max(1.0);
        (my - beta * mc, (resid / n).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Estimate {
    pub mean: f64,
    pub mean_se: f64,
    pub second: f64,
    pub second_se: f64,
}

/// Monte Carlo `E Δ` and `E Δ²`, using `XᵀAX` (mean `tr A = 1` under
/// isotropy) as a control variate.
pub fn lemma2_estimate(sampler_ensemble: &Ensemble, pair: &CommutingPair, b: f64, samples: usize, seed: u64, stream: u64) -> Lemma2Estimate {
    let mut sampler = sampler_ensemble.sampler_with_rng(rng_for(seed, stream));
    let mut x = vec![0.0; pair.dim()];
    let (mut first, mut second) = (ControlVariate::default(), ControlVariate::default());
    for _ in 0..samples {
        sampler.fill(&mut x);
        let (xa, xb) = pair.quadratic_forms(&x);
        let d = lemma2_delta(xa, xb, b);
        first.push(d, xa - 1.0);
        second.push(d * d, xa - 1.0);
    }
    let (mean, mean_se) = first.estimate();
    let (second, second_se) = second.estimate();
    Lemma2Estimate {
        mean,
        mean_se,
        second,
        second_se,
    }
}

pub fn lemma2_verify(cfg: &Lemma2Config, reference: &Lemma2Reference) -> Result<VerificationReport> {
    if cfg.samples < 1000 {
        return Err(invalid("lemma 2 verification needs at least 1000 samples"));
    }
    if !(cfg.a > 0.0 && cfg.b > 0.0) {
        return Err(invalid("a and b must be positive"));
    }
    if cfg.pairs == 0 {
        return Err(invalid("need at least one (A, B) pair"));
    }
    let ensemble = Ensemble::new(cfg.ensemble)?;
    let p = cfg.ensemble.p;
    let pairs = (0..cfg.pairs)
        .map(|i| {
            if i == 0 {
                CommutingPair::isotropic(p)
            } else {
                CommutingPair::random(p, &mut rng_for(cfg.seed ^ 0x5041_4952, i as u64))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<Lemma2Estimate> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| lemma2_estimate(&ensemble, pair, cfg.b, cfg.samples, cfg.seed, i as u64))
        .collect();

    let b = cfg.b;
    let truncated = reference.c_a - 5.0 * reference.big_c_a / (3.0 * b);
    let small_ball = reference.k * reference.k / (1.0 + 4.0 / (3.0 * b));
    let mut report = VerificationReport::new("lemma2", cfg.samples);
    for (i, est) in estimates.iter().enumerate() {
        let ms = SIGMA_SLACK * est.mean_se;
        let ss = SIGMA_SLACK * est.second_se;
        report.checks.push(Check::at_least(format!("pair {i}: E[delta] >= c(a) - 5C(a)/(3b)"), est.mean, truncated, ms));
        report.checks.push(Check::at_most(format!("pair {i}: E[delta^2] <= C(b)"), est.second, reference.big_c_b, ss));
        report.checks.push(Check::at_least(format!("pair {i}: E[delta] >= K^2/(1+4/(3b))"), est.mean, small_ball, ms));
        if let Some(l2) = reference.l2 {
            report.checks.push(Check::at_least(format!("pair {i}: E[delta] >= 1 - 4L(2)/(3b)"), est.mean, 1.0 - 4.0 * l2 / (3.0 * b), ms));
            report.checks.push(Check::at_most(format!("pair {i}: E[delta^2] <= L(2)"), est.second, l2, ss));
        }
    }
    if matches!(cfg.ensemble.family, Family::Gaussian) {
        let oracle = gaussian_isotropic_delta_mean(p, b);
        report.checks.push(Check::at_most(
            "pair 0: |E[delta] - quadrature|",
            (estimates[0].mean - oracle).abs(),
            QUADRATURE_MATCH_TOLERANCE,
            0.0,
        ));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Lemma 3: lower tail of nonnegative martingale sums
// ---------------------------------------------------------------------------

/// Generators of nonnegative `D_k` with `E(D_k² | F_{k-1}) ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MartingaleSpec {
    /// `D_k ≡ 1`.
    Deterministic { n: usize },
    /// `D_k` i.i.d. uniform on `[0, √3]`.
    UniformScaled { n: usize },
    /// `D_k = Δ_k / √C(2a)` from a barrier run with `φ = 1/(5a)` over a
    /// finite-support ensemble, so `E(Δ_k | F_{k-1})` is an exact average.
    /// `c_2a` defaults to the closed form when one exists.
    BarrierDerived {
        ensemble: EnsembleSpec,
        n: usize,
        a: f64,
        #[serde(default)]
        c_2a: Option<f64>,
    },
}

impl MartingaleSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Deterministic { .. } => "deterministic",
            Self::UniformScaled { .. } => "uniform_scaled",
            Self::BarrierDerived { .. } => "barrier_derived",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Self::Deterministic { n } | Self::UniformScaled { n } | Self::BarrierDerived { n, .. } => n,
        }
    }
}

/// Realized `Z` and the largest conditional second moment of `D_k` on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingalePath {
    pub z: f64,
    pub max_conditional_second: f64,
}

struct BarrierSetup {
    ensemble: Ensemble,
    support: Vec<Vector>,
    phi: f64,
    scale: f64,
}

fn barrier_setup(ensemble: EnsembleSpec, a: f64, c_2a: Option<f64>) -> Result<BarrierSetup> {
    if !(a > 0.0) {
        return Err(invalid(format!("a must be positive, got {a}")));
    }
    let ensemble = Ensemble::new(ensemble)?;
    let support = ensemble
        .finite_support()
        .ok_or_else(|| invalid("barrier-derived martingales need a finite-support ensemble"))?;
    let c_2a = match c_2a {
        Some(c) => c,
        None => {
            let ex = exact_moments(ensemble.spec())?;
            if !ex.is_complete() {
                return Err(Error::NotAvailable(ensemble.spec().to_string()));
            }
            ex.big_c(2.0 * a).value
        }
    };
    let support = support
        .column_iter()
        .map(|c| Vector::new(c.iter().copied().collect()))
        .collect();
    Ok(BarrierSetup {
        ensemble,
        support,
        phi: 1.0 / (5.0 * a),
        scale: c_2a.sqrt(),
    })
}

fn barrier_path(setup: &BarrierSetup, n: usize, seed: u64, trial: u64) -> Result<MartingalePath> {
    let mut sampler = setup.ensemble.sampler_with_rng(rng_for(seed, trial));
    let mut state = BarrierState::new(setup.ensemble.dim(), setup.phi)?;
    let m = setup.support.len() as f64;
    let (mut sum, mut max_second) = (0.0, 0.0f64);
    for _ in 0..n {
        let (mut mean, mut second) = (0.0, 0.0);
        for s in &setup.support {
            let d = barrier_increment(state.factorization(), setup.phi, s)? / setup.scale;
            mean += d;
            second += d * d;
        }
        max_second = max_second.max(second / m);
        let d = state.step(&sampler.next_vector())? / setup.scale;
        sum += d - mean / m;
    }
    Ok(MartingalePath {
        z: sum / (n as f64).sqrt(),
        max_conditional_second: max_second,
    })
}

/// Simulates `trials` independent paths of `Z = n^{-1/2} Σ (D_k - E(D_k|F_{k-1}))`.
pub fn simulate_martingale(spec: &MartingaleSpec, trials: usize, seed: u64) -> Result<Vec<MartingalePath>> {
    let n = spec.n();
    if n == 0 {
        return Err(invalid("path length n must be at least 1"));
    }
    let sqrt3 = 3f64.sqrt();
    match *spec {
        MartingaleSpec::Deterministic { .. } => Ok(vec![
            MartingalePath {
                z: 0.0,
                max_conditional_second: 1.0,
            };
            trials
        ]),
        MartingaleSpec::UniformScaled { .. } => Ok((0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(seed, i as u64);
                let sum: f64 = (0..n).map(|_| rng.random_range(0.0..sqrt3) - 0.5 * sqrt3).sum();
                MartingalePath {
                    z: sum / (n as f64).sqrt(),
                    max_conditional_second: 1.0,
                }
            })
            .collect()),
        MartingaleSpec::BarrierDerived { ensemble, a, c_2a, .. } => {
            let setup = barrier_setup(ensemble, a, c_2a)?;
            (0..trials)
                .into_par_iter()
                .map(|i| barrier_path(&setup, n, seed, i as u64))
                .collect()
        }
    }
}

pub fn lemma3_tail_check(spec: &MartingaleSpec, trials: usize, t_grid: &[f64], seed: u64) -> Result<VerificationReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("every t must be positive"));
    }
    let paths = simulate_martingale(spec, trials, seed)?;
    let count = trials as f64;
    let mut report = VerificationReport::new("lemma3", trials);
    for &t in t_grid {
        let freq = paths.iter().filter(|p| p.z < -t).count() as f64 / count;
        let nominal = (-0.5 * t * t).exp();
        report.checks.push(Check::at_most(
            format!("P(Z < -{t}) <= exp(-t^2/2)"),
            freq,
            nominal,
            binomial_slack(nominal, trials),
        ));
    }
    let mean = paths.iter().map(|p| p.z).sum::<f64>() / count;
    let var = paths.iter().map(|p| (p.z - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    report.checks.push(Check::at_most("|mean Z|", mean.abs(), 0.0, SIGMA_SLACK * (var / count).sqrt()));
    let max_second = paths.iter().map(|p| p.max_conditional_second).fold(0.0, f64::max);
    report.checks.push(Check::at_most("max E[D^2 | past]", max_second, 1.0, 1e-12));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Default suites
// ---------------------------------------------------------------------------

pub const LEMMA3_T_GRID: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

/// The three generators used by the default Lemma 3 suite.
pub fn default_martingales() -> [MartingaleSpec; 3] {
    [
        MartingaleSpec::Deterministic { n: 40 },
        MartingaleSpec::UniformScaled { n: 40 },
        MartingaleSpec::BarrierDerived {
            ensemble: EnsembleSpec {
                family: Family::SparseCoordinate,
                p: 5,
                seed: 0,
            },
            n: 40,
            a: 1.0,
            c_2a: None,
        },
    ]
}

/// Runs a named suite with its default parameters.
pub fn run_suite(name: &str, trials: usize, seed: u64) -> Result<VerificationReport> {
    match name {
        "lemma1" => lemma1_suite(trials, seed),
        "lemma2" => {
            let mut report = VerificationReport::new("lemma2", trials);
            for ensemble in [EnsembleSpec::gaussian(5), EnsembleSpec::new(Family::StudentT { nu: 8.0 }, 5, 0)?] {
                let cfg = Lemma2Config {
                    ensemble,
                    samples: trials,
                    a: 0.2,
                    b: 4.0 / 3.0,
                    pairs: 4,
                    seed,
                };
                let reference = Lemma2Reference::from_exact(&exact_moments(&ensemble)?, cfg.a, cfg.b);
                report.absorb(&ensemble.to_string(), lemma2_verify(&cfg, &reference)?);
            }
            Ok(report)
        }
        "lemma3" => {
            let mut report = VerificationReport::new("lemma3", trials);
            for spec in default_martingales() {
                report.absorb(spec.label(), lemma3_tail_check(&spec, trials, &LEMMA3_T_GRID, seed)?);
            }
            Ok(report)
        }
        other => Err(invalid(format!("unknown suite '{other}' (expected lemma1, lemma2 or lemma3)"))),
    }
}
