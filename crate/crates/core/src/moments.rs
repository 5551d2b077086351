//! Moment functionals of an isotropic vector `X`, taken over unit directions `v`:
//!
//! ```text
//!     c(a) = inf E min{(X,v)², a}          C(a) = sup E (X,v)² min{(X,v)², a}
//!     L(α) = sup E |(X,v)|^{2+α}           K    = inf E |(X,v)|
//!     M(α) = inf { M : P(|(X,v)| > t) ≤ M t^{-(2+α)} for all t > 0, v }
//! ```
//!
//! Gaussian and sparse-coordinate vectors have closed forms (quadrature or
//! algebra). Everything else is estimated by searching a pool of candidate
//! directions over an empirical sample; those values carry `mc_estimate`
//! tags with bootstrap standard errors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::ensembles::{Ensemble, EnsembleSpec, Family};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_half_line, normal_expectation, DEFAULT_TOLERANCE};
use crate::seed::rng_for;

/// Number of log-spaced points in the empirical tail grid for `M(α)`.
const TAIL_GRID_POINTS: usize = 200;
const TAIL_GRID_LOW_QUANTILE: f64 = 0.5;
const TAIL_GRID_HIGH_QUANTILE: f64 = 0.9999;

/// A bootstrap 95% interval wider than this fraction of the value marks the
/// estimate unstable.
const UNSTABLE_RELATIVE_WIDTH: f64 = 0.2;

const SEARCH_STREAM: u64 = 0x5345_4152_4348;
const BOOTSTRAP_STREAM: u64 = 0x424f_4f54;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quality {
    Exact,
    /// Exact along coordinate directions; the extremum over all directions
    /// is not established.
    DirectionUnverified,
    McEstimate { samples: usize, directions: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    #[serde(with = "finite_or_null")]
    pub value: f64,
    pub std_error: Option<f64>,
    pub quality: Quality,
    #[serde(default)]
    pub unstable: bool,
}

impl MomentValue {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: None,
            quality: Quality::Exact,
            unstable: false,
        }
    }

    fn tagged(value: f64, quality: Quality) -> Self {
        Self {
            value,
            std_error: None,
            quality,
            unstable: false,
        }
    }

    /// Standard error, zero for exact values.
    pub fn se(&self) -> f64 {
        self.std_error.unwrap_or(0.0)
    }
}

/// Serializes non-finite values as `null` and reads `null` back as `+∞`.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridValue {
    pub at: f64,
    #[serde(flatten)]
    pub value: MomentValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    pub ensemble: EnsembleSpec,
    pub c: Vec<GridValue>,
    #[serde(rename = "C")]
    pub big_c: Vec<GridValue>,
    #[serde(rename = "L")]
    pub l: Vec<GridValue>,
    #[serde(rename = "M")]
    pub m: Vec<GridValue>,
    #[serde(rename = "K")]
    pub k: MomentValue,
}

fn lookup(grid: &[GridValue], at: f64) -> Option<&MomentValue> {
    grid.iter().find(|g| g.at == at).map(|g| &g.value)
}

impl MomentProfile {
    pub fn c_at(&self, a: f64) -> Option<&MomentValue> {
        lookup(&self.c, a)
    }

    pub fn big_c_at(&self, a: f64) -> Option<&MomentValue> {
        lookup(&self.big_c, a)
    }

    pub fn l_at(&self, alpha: f64) -> Option<&MomentValue> {
        lookup(&self.l, alpha)
    }

    pub fn m_at(&self, alpha: f64) -> Option<&MomentValue> {
        lookup(&self.m, alpha)
    }

    /// Fails with `EstimateUnstable` naming the first unstable estimate.
    pub fn require_stable(&self) -> Result<()> {
        let named = self
            .c
            .iter()
            .map(|g| (format!("c({})", g.at), g.value))
            .chain(self.big_c.iter().map(|g| (format!("C({})", g.at), g.value)))
            .chain(self.l.iter().map(|g| (format!("L({})", g.at), g.value)))
            .chain(self.m.iter().map(|g| (format!("M({})", g.at), g.value)))
            .chain(std::iter::once(("K".to_string(), self.k)));
        for (name, v) in named {
            if v.unstable {
                return Err(Error::EstimateUnstable {
                    name,
                    value: v.value,
                    std_error: v.se(),
                });
            }
        }
        Ok(())
    }
}

/// Monte Carlo budget for profile estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub samples: usize,
    pub seed: u64,
    pub bootstrap: usize,
    pub search: Option<SearchBudget>,
}

impl McBudget {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            bootstrap: 200,
            search: None,
        }
    }
}

/// Candidate-direction budget for the inf/sup search over the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub random_directions: usize,
    pub sign_patterns: usize,
    pub refine_steps: usize,
}

impl SearchBudget {
    pub fn default_for(p: usize) -> Self {
        Self {
            random_directions: 2 * p,
            sign_patterns: 64,
            refine_steps: 100,
        }
    }
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Families with analytically available functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactMoments {
    Gaussian,
    /// Coordinate-direction values of unit-variance Student t coordinates.
    StudentT { nu: f64 },
    SparseCoordinate { p: usize },
}

pub fn exact_moments(spec: &EnsembleSpec) -> Result<ExactMoments> {
    spec.validate()?;
    match spec.family {
        Family::Gaussian => Ok(ExactMoments::Gaussian),
        Family::StudentT { nu } => Ok(ExactMoments::StudentT { nu }),
        Family::SparseCoordinate => Ok(ExactMoments::SparseCoordinate { p: spec.p }),
        _ => Err(Error::NotAvailable(spec.to_string())),
    }
}

impl ExactMoments {
    fn quality(&self) -> Quality {
        match self {
            Self::StudentT { .. } => Quality::DirectionUnverified,
            _ => Quality::Exact,
        }
    }

    /// Whether every functional here is the true inf/sup over directions.
    pub fn is_complete(&self) -> bool {
        self.quality() == Quality::Exact
    }

    /// `E h(X_1)` for an even `h` along a coordinate (Gaussian or Student t).
    fn coordinate_expectation<F: Fn(f64) -> f64>(&self, h: F, breaks: &[f64]) -> f64 {
        match *self {
            Self::Gaussian => {
                let mut b: Vec<f64> = breaks.iter().flat_map(|&x| [-x, x]).collect();
                b.push(0.0);
                normal_expectation(h, &b)
            }
            Self::StudentT { nu } => {
                let scale = ((nu - 2.0) / nu).sqrt();
                let log_norm = ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * (nu * std::f64::consts::PI).ln();
                let density = |t: f64| (log_norm - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()).exp();
                let b: Vec<f64> = breaks.iter().map(|&x| x / scale).collect();
                2.0 * integrate_half_line(|t| h(scale * t) * density(t), &b, 0.5 * DEFAULT_TOLERANCE)
            }
            Self::SparseCoordinate { .. } => unreachable!("sparse values are algebraic"),
        }
    }

    pub fn c(&self, a: f64) -> MomentValue {
        let v = match *self {
            Self::SparseCoordinate { p } => (a / p as f64).min(1.0),
            _ => self.coordinate_expectation(|x| (x * x).min(a), &[a.sqrt()]),
        };
        MomentValue::tagged(v, self.quality())
    }

    pub fn big_c(&self, a: f64) -> MomentValue {
        let v = match *self {
            Self::SparseCoordinate { p } => a.min(p as f64),
            _ => self.coordinate_expectation(|x| x * x * (x * x).min(a), &[a.sqrt()]),
        };
        MomentValue::tagged(v, self.quality())
    }

    pub fn l(&self, alpha: f64) -> MomentValue {
        let v = match *self {
            Self::SparseCoordinate { p } => (p as f64).powf(0.5 * alpha),
            Self::StudentT { nu } if alpha >= nu - 2.0 => f64::INFINITY,
            _ => self.coordinate_expectation(|x| x.abs().powf(2.0 + alpha), &[]),
        };
        let quality = if v.is_infinite() { Quality::Exact } else { self.quality() };
        MomentValue::tagged(v, quality)
    }

    pub fn m(&self, alpha: f64) -> MomentValue {
        let power = 2.0 + alpha;
        let v = match *self {
            Self::SparseCoordinate { p } => (p as f64).powf(0.5 * alpha),
            Self::Gaussian => maximize_log(|t| power * t.ln() + erfc(t / std::f64::consts::SQRT_2).ln(), 1e-3, 12.0),
            Self::StudentT { nu } if power > nu => f64::INFINITY,
            Self::StudentT { nu } => {
                let scale = ((nu - 2.0) / nu).sqrt();
                let t_dist = StudentsT::new(0.0, 1.0, nu).expect("nu validated");
                maximize_log(|t| power * t.ln() + (2.0 * t_dist.sf(t / scale)).ln(), 1e-3, 1e6)
            }
        };
        let quality = if v.is_infinite() { Quality::Exact } else { self.quality() };
        MomentValue::tagged(v, quality)
    }

    pub fn k(&self) -> MomentValue {
        let v = match *self {
            Self::SparseCoordinate { p } => 1.0 / (p as f64).sqrt(),
            _ => self.coordinate_expectation(f64::abs, &[]),
        };
        MomentValue::tagged(v, self.quality())
    }
}

/// `exp(max_t h(t))` for a unimodal log-objective `h` on `[lo, hi]`: coarse
/// log grid, then golden-section refinement around the best grid point.
fn maximize_log<F: Fn(f64) -> f64>(h: F, lo: f64, hi: f64) -> f64 {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let steps = 2000;
    let at = |i: usize| llo + (lhi - llo) * i as f64 / steps as f64;
    let g = |u: f64| {
        let v = h(u.exp());
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let best = (0..=steps)
        .max_by(|&i, &j| g(at(i)).total_cmp(&g(at(j))))
        .unwrap_or(0);
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(steps)));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..200 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = g(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = g(x1);
        }
    }
    g(at(best)).max(f1).max(f2).exp()
}

// ---------------------------------------------------------------------------
// Proposition-style relations between the functionals
// ---------------------------------------------------------------------------

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {x}")))
    }
}

/// `c(a) ≥ 1 - L(α) / a^{α/2}` (not clamped; may be negative).
pub fn prop1_c_lower_from_l(a: f64, alpha: f64, l: f64) -> Result<f64> {
    check_positive("a", a)?;
    check_positive("alpha", alpha)?;
    check_positive("L", l)?;
    Ok(1.0 - l * a.powf(-0.5 * alpha))
}

/// `c(a) ≥ 1 - (2/α) M(α) / a^{α/2}`.
pub fn prop1_c_lower_from_m(a: f64, alpha: f64, m: f64) -> Result<f64> {
    check_positive("a", a)?;
    check_positive("alpha", alpha)?;
    check_positive("M", m)?;
    Ok(1.0 - 2.0 / alpha * m * a.powf(-0.5 * alpha))
}

/// Upper bounds on `C(a)` from `L(α)` and from `M(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub l_branch: Option<f64>,
    pub m_branch: Option<f64>,
}

impl BoundPair {
    /// The tighter of the available branches.
    pub fn best(&self) -> f64 {
        self.l_branch
            .unwrap_or(f64::INFINITY)
            .min(self.m_branch.unwrap_or(f64::INFINITY))
    }
}

pub fn prop1_c_upper(a: f64, alpha: f64, l: Option<f64>, m: Option<f64>) -> Result<BoundPair> {
    check_positive("a", a)?;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(invalid(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if l.is_none() && m.is_none() {
        return Err(invalid("at least one of L, M is required"));
    }
    let factor = a.powf(1.0 - 0.5 * alpha);
    let l_branch = l
        .map(|l| check_positive("L", l).map(|_| factor * l))
        .transpose()?;
    let m_branch = m
        .map(|m| {
            check_positive("M", m)?;
            let tail = if alpha < 2.0 {
                2.0 * m * factor / (1.0 - 0.5 * alpha)
            } else {
                2.0 * m * a.max(1.0).ln() + 1.0
            };
            Ok::<_, Error>((1.0 + 2.0 / alpha) * m * factor + tail)
        })
        .transpose()?;
    Ok(BoundPair { l_branch, m_branch })
}

// ---------------------------------------------------------------------------
// Direction search
// ---------------------------------------------------------------------------

/// Empirical distribution: the columns of `points`, equally weighted.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    points: DMatrix<f64>,
    /// True when the columns are the full support of the law, so each
    /// per-direction expectation is exact.
    exact: bool,
}

impl WeightedSample {
    pub fn uniform(points: DMatrix<f64>) -> Self {
        Self { points, exact: true }
    }

    pub fn drawn(points: DMatrix<f64>) -> Self {
        Self { points, exact: false }
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn project(&self, v: &DVector<f64>) -> Vec<f64> {
        self.points.tr_mul(v).data.into()
    }
}

/// A functional of the scalar projection `s = (X, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `E min(s², a)`, giving `c(a)`.
    TruncSecond { a: f64 },
    /// `E s² min(s², a)`, giving `C(a)`.
    TruncFourth { a: f64 },
    /// `E |s|^{2+α}`, giving `L(α)`.
    AbsPower { alpha: f64 },
    /// `E |s|`, giving `K`.
    AbsMean,
    /// `sup_t t^{2+α} P(|s| ≥ t)` over the empirical tail grid, giving `M(α)`.
    Tail { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Inf,
    Sup,
}

impl Extremum {
    fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Self::Inf => candidate < incumbent,
            Self::Sup => candidate > incumbent,
        }
    }
}

impl Functional {
    fn point(&self, s: f64) -> f64 {
        let s2 = s * s;
        match *self {
            Self::TruncSecond { a } => s2.min(a),
            Self::TruncFourth { a } => s2 * s2.min(a),
            Self::AbsPower { alpha } => s.abs().powf(2.0 + alpha),
            Self::AbsMean => s.abs(),
            Self::Tail { .. } => unreachable!("tail functional is not a pointwise mean"),
        }
    }

    /// Derivative of the pointwise integrand, `None` for the tail functional.
    fn slope(&self, s: f64) -> Option<f64> {
        let s2 = s * s;
        Some(match *self {
            Self::TruncSecond { a } => {
                if s2 < a {
                    2.0 * s
                } else {
                    0.0
                }
            }
            Self::TruncFourth { a } => {
                if s2 < a {
                    4.0 * s2 * s
                } else {
                    2.0 * a * s
                }
            }
            Self::AbsPower { alpha } => (2.0 + alpha) * s.abs().powf(1.0 + alpha) * s.signum(),
            Self::AbsMean => s.signum(),
            Self::Tail { .. } => return None,
        })
    }

    pub fn evaluate(&self, s: &[f64]) -> f64 {
        match *self {
            Self::Tail { alpha } => {
                let tail = TailTable::new(s);
                tail.sup(alpha, &tail.counts_unweighted())
            }
            _ => s.iter().map(|&x| self.point(x)).sum::<f64>() / s.len() as f64,
        }
    }
}

/// Empirical tail of `|s|` on the log grid between its median and its
/// 0.9999-quantile.
struct TailTable {
    grid: Vec<f64>,
    /// For each sample, how many grid points are `≤ |s_i|`.
    bucket: Vec<usize>,
}

impl TailTable {
    fn new(s: &[f64]) -> Self {
        let mut abs: Vec<f64> = s.iter().map(|x| x.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let quantile = |q: f64| abs[((q * (abs.len() - 1) as f64).round() as usize).min(abs.len() - 1)];
        let lo = quantile(TAIL_GRID_LOW_QUANTILE);
        let hi = quantile(TAIL_GRID_HIGH_QUANTILE);
        let grid: Vec<f64> = if lo > 0.0 && hi > lo {
            let (llo, lhi) = (lo.ln(), hi.ln());
            (0..TAIL_GRID_POINTS)
                .map(|i| (llo + (lhi - llo) * i as f64 / (TAIL_GRID_POINTS - 1) as f64).exp())
                .collect()
        } else if hi > 0.0 {
            vec![hi]
        } else {
            Vec::new()
        };
        let bucket = s
            .iter()
            .map(|x| grid.partition_point(|&t| t <= x.abs()))
            .collect();
        Self { grid, bucket }
    }

    fn counts_unweighted(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.grid.len() + 1];
        for &b in &self.bucket {
            counts[b] += 1.0;
        }
        counts
    }

    fn counts_weighted(&self, weights: &[u32]) -> Vec<f64> {
        let mut counts = vec![0.0; self.grid.len() + 1];
        for (&b, &w) in self.bucket.iter().zip(weights) {
            counts[b] += w as f64;
        }
        counts
    }

    /// `max_j t_j^{2+α} · #{|s| ≥ t_j} / total` from per-bucket counts.
    fn sup(&self, alpha: f64, counts: &[f64]) -> f64 {
        let total: f64 = counts.iter().sum();
        let mut above = 0.0;
        let mut best = 0.0_f64;
        for j in (0..self.grid.len()).rev() {
            above += counts[j + 1];
            best = best.max(self.grid[j].powf(2.0 + alpha) * above / total);
        }
        best
    }
}

fn unit_directions(p: usize, budget: &SearchBudget, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = (0..p)
        .map(|i| {
            let mut e = DVector::zeros(p);
            e[i] = 1.0;
            e
        })
        .collect();
    for _ in 0..budget.random_directions {
        let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            dirs.push(g / norm);
        }
    }
    let scale = 1.0 / (p as f64).sqrt();
    if p >= 2 {
        // Patterns up to a global sign flip: enumerate when few, else sample.
        let distinct = if p - 1 < 63 { 1u64 << (p - 1) } else { u64::MAX };
        if distinct <= budget.sign_patterns as u64 {
            for bits in 0..distinct {
                dirs.push(DVector::from_fn(p, |i, _| {
                    if i > 0 && (bits >> (i - 1)) & 1 == 1 {
                        -scale
                    } else {
                        scale
                    }
                }));
            }
        } else {
            for _ in 0..budget.sign_patterns {
                dirs.push(DVector::from_fn(p, |_, _| {
                    if rng.random::<bool>() {
                        scale
                    } else {
                        -scale
                    }
                }));
            }
        }
    }
    dirs
}

/// Projected (sub)gradient walk on the sphere from `start`; returns the best
/// direction visited and its value.
fn refine(
    sample: &WeightedSample,
    functional: &Functional,
    extremum: Extremum,
    start: &DVector<f64>,
    start_value: f64,
    steps: usize,
) -> (DVector<f64>, f64) {
    let mut best = (start.clone(), start_value);
    let mut v = start.clone();
    let m = sample.len() as f64;
    let sign = match extremum {
        Extremum::Inf => -1.0,
        Extremum::Sup => 1.0,
    };
    for k in 0..steps {
        let s = sample.project(&v);
        let slopes: Vec<f64> = match s.iter().map(|&x| functional.slope(x)).collect::<Option<Vec<_>>>() {
            Some(sl) => sl,
            None => break,
        };
        let grad = &sample.points * DVector::from_vec(slopes) / m;
        let tangent = &grad - &v * grad.dot(&v);
        let tnorm = tangent.norm();
        if !(tnorm > 1e-14) || !tnorm.is_finite() {
            break;
        }
        let eta = 0.2 / ((k + 1) as f64).sqrt();
        v += tangent * (sign * eta / tnorm);
        let norm = v.norm();
        v /= norm;
        let value = functional.evaluate(&sample.project(&v));
        if extremum.better(value, best.1) {
            best = (v.clone(), value);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub value: f64,
    pub direction: DVector<f64>,
    /// Candidate directions examined (excluding refinement iterates).
    pub directions: usize,
}

/// Single-functional inf/sup search: basis vectors, random directions and
/// sign patterns, then refinement from the best candidate.
pub fn search_extremum(
    sample: &WeightedSample,
    functional: &Functional,
    extremum: Extremum,
    budget: &SearchBudget,
    rng: &mut ChaCha8Rng,
) -> SearchResult {
    let dirs = unit_directions(sample.dim(), budget, rng);
    let mut best_idx = 0;
    let mut best_val = f64::NAN;
    for (i, d) in dirs.iter().enumerate() {
        let v = functional.evaluate(&sample.project(d));
        if i == 0 || extremum.better(v, best_val) {
            best_idx = i;
            best_val = v;
        }
    }
    let (direction, value) = refine(sample, functional, extremum, &dirs[best_idx], best_val, budget.refine_steps);
    SearchResult {
        value,
        direction,
        directions: dirs.len(),
    }
}

/// Shared pool of directions with cached projections. Every functional's
/// final value is its extremum over the whole pool, so pointwise relations
/// between functionals (e.g. `C(a) ≤ L(2)`) carry over to the estimates.
struct DirectionPool<'s> {
    sample: &'s WeightedSample,
    dirs: Vec<DVector<f64>>,
    proj: Vec<Vec<f64>>,
}

impl<'s> DirectionPool<'s> {
    fn new(sample: &'s WeightedSample, dirs: Vec<DVector<f64>>) -> Self {
        let proj = dirs.iter().map(|d| sample.project(d)).collect();
        Self { sample, dirs, proj }
    }

    fn push(&mut self, d: DVector<f64>) {
        self.proj.push(self.sample.project(&d));
        self.dirs.push(d);
    }

    fn extremum(&self, functional: &Functional, extremum: Extremum) -> (usize, f64) {
        let mut best = (0, functional.evaluate(&self.proj[0]));
        for (i, s) in self.proj.iter().enumerate().skip(1) {
            let v = functional.evaluate(s);
            if extremum.better(v, best.1) {
                best = (i, v);
            }
        }
        best
    }
}

fn bootstrap_se(
    functional: &Functional,
    s: &[f64],
    resamples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    if resamples < 2 {
        return 0.0;
    }
    let m = s.len();
    let tail = match functional {
        Functional::Tail { .. } => Some(TailTable::new(s)),
        _ => None,
    };
    let points: Vec<f64> = match functional {
        Functional::Tail { .. } => Vec::new(),
        f => s.iter().map(|&x| f.point(x)).collect(),
    };
    let mut weights = vec![0u32; m];
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            weights.iter_mut().for_each(|w| *w = 0);
            for _ in 0..m {
                weights[rng.random_range(0..m)] += 1;
            }
            match (functional, &tail) {
                (Functional::Tail { alpha }, Some(t)) => t.sup(*alpha, &t.counts_weighted(&weights)),
                _ => {
                    points
                        .iter()
                        .zip(&weights)
                        .map(|(&x, &w)| x * w as f64)
                        .sum::<f64>()
                        / m as f64
                }
            }
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let var = stats.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (stats.len() - 1) as f64;
    var.sqrt()
}

fn empirical_sample(ensemble: &Ensemble, budget: &McBudget) -> Result<WeightedSample> {
    if let Some(support) = ensemble.finite_support() {
        return Ok(WeightedSample::uniform(support));
    }
    if budget.samples == 0 {
        return Err(invalid("budget.samples must be at least 1"));
    }
    let mut sampler = ensemble.sampler(budget.seed);
    let mut points = DMatrix::zeros(ensemble.dim(), budget.samples);
    for j in 0..budget.samples {
        sampler.fill(points.column_mut(j).as_mut_slice());
    }
    Ok(WeightedSample::drawn(points))
}

struct Job {
    functional: Functional,
    extremum: Extremum,
    /// Analytic override (infinite moments of Student t coordinates).
    known: Option<MomentValue>,
}

fn estimate_all(
    ensemble: &Ensemble,
    jobs: &[Job],
    budget: &McBudget,
) -> Result<Vec<MomentValue>> {
    let p = ensemble.dim();
    let sample = empirical_sample(ensemble, budget)?;
    let search = budget.search.unwrap_or_else(|| SearchBudget::default_for(p));
    let mut rng = rng_for(budget.seed, SEARCH_STREAM);
    let mut pool = DirectionPool::new(&sample, unit_directions(p, &search, &mut rng));
    let candidates = pool.dirs.len();

    for job in jobs.iter().filter(|j| j.known.is_none()) {
        let (idx, value) = pool.extremum(&job.functional, job.extremum);
        let start = pool.dirs[idx].clone();
        let (dir, _) = refine(&sample, &job.functional, job.extremum, &start, value, search.refine_steps);
        pool.push(dir);
    }

    let quality = Quality::McEstimate {
        samples: sample.len(),
        directions: candidates,
        seed: budget.seed,
    };
    let mut boot_rng = rng_for(budget.seed, BOOTSTRAP_STREAM);
    Ok(jobs
        .iter()
        .map(|job| {
            if let Some(known) = job.known {
                return known;
            }
            let (idx, value) = pool.extremum(&job.functional, job.extremum);
            let se = if sample.is_exact() {
                0.0
            } else {
                bootstrap_se(&job.functional, &pool.proj[idx], budget.bootstrap, &mut boot_rng)
            };
            MomentValue {
                value,
                std_error: Some(se),
                quality,
                unstable: 2.0 * 1.96 * se > UNSTABLE_RELATIVE_WIDTH * value.abs(),
            }
        })
        .collect())
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} must be nonempty")));
    }
    if let Some(bad) = grid.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(invalid(format!("{name} entries must be positive and finite, got {bad}")));
    }
    Ok(())
}

/// All five functionals on the requested grids.
pub fn compute_profile(
    spec: &EnsembleSpec,
    a_grid: &[f64],
    alpha_list: &[f64],
    budget: &McBudget,
) -> Result<MomentProfile> {
    check_grid("a_grid", a_grid)?;
    check_grid("alpha_list", alpha_list)?;
    if budget.samples == 0 {
        return Err(invalid("budget.samples must be at least 1"));
    }
    let at = |grid: &[f64], values: Vec<MomentValue>| -> Vec<GridValue> {
        grid.iter().zip(values).map(|(&at, value)| GridValue { at, value }).collect()
    };

    if let Ok(exact) = exact_moments(spec) {
        if exact.is_complete() {
            return Ok(MomentProfile {
                ensemble: *spec,
                c: at(a_grid, a_grid.iter().map(|&a| exact.c(a)).collect()),
                big_c: at(a_grid, a_grid.iter().map(|&a| exact.big_c(a)).collect()),
                l: at(alpha_list, alpha_list.iter().map(|&x| exact.l(x)).collect()),
                m: at(alpha_list, alpha_list.iter().map(|&x| exact.m(x)).collect()),
                k: exact.k(),
            });
        }
    }

    let infinite = |v: MomentValue| if v.value.is_infinite() { Some(v) } else { None };
    let student = match spec.family {
        Family::StudentT { nu } => Some(ExactMoments::StudentT { nu }),
        _ => None,
    };
    let mut jobs = Vec::new();
    for &a in a_grid {
        jobs.push(Job { functional: Functional::TruncSecond { a }, extremum: Extremum::Inf, known: None });
    }
    for &a in a_grid {
        jobs.push(Job { functional: Functional::TruncFourth { a }, extremum: Extremum::Sup, known: None });
    }
    for &alpha in alpha_list {
        jobs.push(Job {
            functional: Functional::AbsPower { alpha },
            extremum: Extremum::Sup,
            known: student.and_then(|s| infinite(s.l(alpha))),
        });
    }
    for &alpha in alpha_list {
        jobs.push(Job {
            functional: Functional::Tail { alpha },
            extremum: Extremum::Sup,
            known: student.and_then(|s| infinite(s.m(alpha))),
        });
    }
    jobs.push(Job { functional: Functional::AbsMean, extremum: Extremum::Inf, known: None });

    let ensemble = Ensemble::new(*spec)?;
    let mut values = estimate_all(&ensemble, &jobs, budget)?.into_iter();
    let na = a_grid.len();
    let nl = alpha_list.len();
    let c = at(a_grid, values.by_ref().take(na).collect());
    let big_c = at(a_grid, values.by_ref().take(na).collect());
    let l = at(alpha_list, values.by_ref().take(nl).collect());
    let m = at(alpha_list, values.by_ref().take(nl).collect());
    let k = values.next().expect("K job present");
    Ok(MomentProfile { ensemble: *spec, c, big_c, l, m, k })
}

/// Smallest empirical `E|(X, v)|` found by the direction search: an upper
/// estimate of the true infimum `K`.
pub fn estimate_kp(spec: &EnsembleSpec, budget: &McBudget) -> Result<MomentValue> {
    let ensemble = Ensemble::new(*spec)?;
    let jobs = [Job { functional: Functional::AbsMean, extremum: Extremum::Inf, known: None }];
    Ok(estimate_all(&ensemble, &jobs, budget)?[0])
}
