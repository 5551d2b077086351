//! Closed-form lower bounds on `λ_min(n⁻¹ Σ X_k X_kᵀ)` for isotropic `X` in
//! `ℝ^p` with aspect ratio `y ≥ p/n`.
//!
//! Each high-probability bound is parameterized by a deviation `t ≥ 0` and
//! holds with probability at least `1 - exp(-t²/2)`. Bounds are reported even
//! when they are vacuous (`≤ 0`).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::moments::ExactMoments;

/// Which side of the statement a bound speaks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundEvent {
    /// `λ_min ≥ lower_bound` except with probability `failure_probability`.
    Tail,
    /// `E λ_min ≥ lower_bound`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub lower_bound: f64,
    pub failure_probability: f64,
    pub vacuous: bool,
    pub event: BoundEvent,
    /// Smallest admissible sample size, for sample-size statements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_n: Option<u64>,
}

impl BoundResult {
    fn tail(lower_bound: f64, failure_probability: f64) -> Self {
        Self {
            lower_bound,
            failure_probability,
            vacuous: lower_bound <= 0.0,
            event: BoundEvent::Tail,
            min_n: None,
        }
    }
}

/// Sub-Gaussian lower-tail allowance `exp(-t²/2)`.
pub fn gaussian_tail(t: f64) -> f64 {
    (-0.5 * t * t).exp()
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

fn check_y(y: f64) -> Result<()> {
    require(y > 0.0 && y < 1.0, || format!("y must lie in (0, 1), got {y}"))
}

fn check_t(t: f64) -> Result<()> {
    require(t >= 0.0 && !t.is_nan(), || format!("t must be nonnegative, got {t}"))
}

fn check_n(n: u64) -> Result<()> {
    require(n >= 1, || "n must be at least 1".into())
}

/// Inputs of the truncated-moment bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm1Inputs {
    /// `c(a)`
    pub c_a: f64,
    /// `C(a)`
    pub big_c_a: f64,
    /// `C(2a)`
    pub big_c_2a: f64,
    pub a: f64,
    pub y: f64,
    pub n: u64,
    pub t: f64,
}

/// `c(a) - C(a)/a - 5ay - √C(2a) · t/√n`.
pub fn thm1_bound(inp: &Thm1Inputs) -> Result<BoundResult> {
    require(inp.a > 0.0, || format!("a must be positive, got {}", inp.a))?;
    check_y(inp.y)?;
    check_n(inp.n)?;
    check_t(inp.t)?;
    require(inp.c_a >= 0.0 && inp.big_c_a >= 0.0 && inp.big_c_2a >= 0.0, || {
        "moment inputs must be nonnegative".into()
    })?;
    let lb = inp.c_a - inp.big_c_a / inp.a - 5.0 * inp.a * inp.y
        - inp.big_c_2a.sqrt() * inp.t / (inp.n as f64).sqrt();
    Ok(BoundResult::tail(lb, gaussian_tail(inp.t)))
}

/// `1 - 4√(L₂ y) - √L₂ · t/√n`.
pub fn thm2_l2_bound(l2: f64, y: f64, n: u64, t: f64) -> Result<BoundResult> {
    require(l2 >= 1.0 && l2.is_finite(), || {
        format!("L2 must be finite and at least 1, got {l2}")
    })?;
    check_y(y)?;
    check_n(n)?;
    check_t(t)?;
    let c = l2.sqrt();
    Ok(BoundResult::tail(1.0 - 4.0 * c * y.sqrt() - c * t / (n as f64).sqrt(), gaussian_tail(t)))
}

/// Constants of the small-ball (`K`) bounds. The starred constants are the
/// ones of the fixed-confidence corollary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c0_star: f64,
    pub c1_star: f64,
    pub c2_star: f64,
}

impl KpConstants {
    /// Derives the starred constants: `C0* = C0/2`, `C1* = C0²/(8 C1²)`, `C2* = C2`.
    pub fn from_base(c0: f64, c1: f64, c2: f64) -> Self {
        Self {
            c0,
            c1,
            c2,
            c0_star: c0 / 2.0,
            c1_star: c0 * c0 / (8.0 * c1 * c1),
            c2_star: c2,
        }
    }
}

impl Default for KpConstants {
    /// `φ = 1/4` gives `λ ≥ K²/4 + √(4/3)·Z/√n` whenever `y ≤ K²/16`.
    fn default() -> Self {
        Self::from_base(0.25, (4.0_f64 / 3.0).sqrt(), 1.0 / 16.0)
    }
}

fn check_k(k: f64) -> Result<()> {
    require(k > 0.0 && k <= 1.0, || format!("K must lie in (0, 1], got {k}"))
}

/// `C0 K² - C1 t/√n`, valid when `y ≤ C2 K²`.
pub fn thm2_kp_bound(k: f64, y: f64, n: u64, t: f64, constants: &KpConstants) -> Result<BoundResult> {
    check_k(k)?;
    check_y(y)?;
    check_n(n)?;
    check_t(t)?;
    if y > constants.c2 * k * k {
        return Err(Error::PreconditionViolated(format!(
            "y = {y} exceeds C2·K² = {}",
            constants.c2 * k * k
        )));
    }
    Ok(BoundResult::tail(
        constants.c0 * k * k - constants.c1 * t / (n as f64).sqrt(),
        gaussian_tail(t),
    ))
}

/// `C_α` of the moment-only bound: `9 L^{2/(2+α)}` for `α < 2`,
/// `(4 + √2)√L` for `α = 2`.
pub fn cor1_constant(alpha: f64, l: f64) -> f64 {
    if alpha < 2.0 {
        9.0 * l.powf(2.0 / (2.0 + alpha))
    } else {
        (4.0 + std::f64::consts::SQRT_2) * l.sqrt()
    }
}

/// `1 - C_α y^{α/(2+α)}` with failure probability `exp(-p)`, `p = y·n`.
pub fn cor1_bound(alpha: f64, l: f64, y: f64, n: u64) -> Result<BoundResult> {
    require(alpha > 0.0 && alpha <= 2.0, || format!("alpha must lie in (0, 2], got {alpha}"))?;
    require(l >= 1.0 && l.is_finite(), || format!("L must be finite and at least 1, got {l}"))?;
    check_y(y)?;
    check_n(n)?;
    let lb = 1.0 - cor1_constant(alpha, l) * y.powf(alpha / (2.0 + alpha));
    Ok(BoundResult::tail(lb, (-(y * n as f64)).exp()))
}

/// Smallest integer `n ≥ x`, ignoring float noise around exact integers.
fn ceil_robust(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Smallest `n` for which `E λ_min ≥ 1 - ε`: with `alpha ∈ (0, 2)` the
/// aspect ratio must satisfy `p/n ≤ ε^{1+2/α} / (10 (4L)^{2/α})`; without it,
/// `n ≥ 16 L ε⁻² p`.
pub fn cor2_min_n(alpha: Option<f64>, l: f64, eps: f64, p: u64) -> Result<u64> {
    require(eps > 0.0 && eps < 1.0, || format!("epsilon must lie in (0, 1), got {eps}"))?;
    require(l > 0.0 && l.is_finite(), || format!("L must be positive and finite, got {l}"))?;
    require(p >= 1, || "p must be at least 1".into())?;
    let n = match alpha {
        Some(alpha) => {
            require(alpha > 0.0 && alpha < 2.0, || format!("alpha must lie in (0, 2), got {alpha}"))?;
            let y = eps.powf(1.0 + 2.0 / alpha) / (10.0 * (4.0 * l).powf(2.0 / alpha));
            p as f64 / y
        }
        None => 16.0 * l * p as f64 / (eps * eps),
    };
    Ok(ceil_robust(n))
}

/// `C0* K²` with failure probability `exp(-C1* K⁴ n)`, valid when `p/n ≤ C2* K²`.
pub fn cor3_bound(k: f64, n: u64, p: u64, constants: &KpConstants) -> Result<BoundResult> {
    check_k(k)?;
    check_n(n)?;
    require(p >= 1 && p <= n, || format!("need 1 <= p <= n, got p = {p}, n = {n}"))?;
    let ratio = p as f64 / n as f64;
    if ratio > constants.c2_star * k * k {
        return Err(Error::PreconditionViolated(format!(
            "p/n = {ratio} exceeds C2*·K² = {}",
            constants.c2_star * k * k
        )));
    }
    Ok(BoundResult::tail(
        constants.c0_star * k * k,
        (-constants.c1_star * k.powi(4) * n as f64).exp(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Thm1,
    Thm2L2,
    Thm2Kp,
    Cor1,
    Cor2Alpha,
    Cor2L2,
    Cor3,
}

impl BoundKind {
    /// Whether the bound is indexed by a deviation `t`.
    pub fn uses_t(self) -> bool {
        matches!(self, Self::Thm1 | Self::Thm2L2 | Self::Thm2Kp)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Thm1 => "thm1",
            Self::Thm2L2 => "thm2-l2",
            Self::Thm2Kp => "thm2-kp",
            Self::Cor1 => "cor1",
            Self::Cor2Alpha => "cor2-alpha",
            Self::Cor2L2 => "cor2-l2",
            Self::Cor3 => "cor3",
        })
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "thm1" => Self::Thm1,
            "thm2-l2" => Self::Thm2L2,
            "thm2-kp" => Self::Thm2Kp,
            "cor1" => Self::Cor1,
            "cor2" | "cor2-l2" => Self::Cor2L2,
            "cor2-alpha" => Self::Cor2Alpha,
            "cor3" => Self::Cor3,
            other => return Err(invalid(format!("unknown bound kind '{other}'"))),
        })
    }
}

/// A bound with named real parameters: `a`, `alpha`, `y`, `n`, `p`, `t`, `L`,
/// `c_a`, `C_a`, `C_2a`, `K`, `eps`, and optional constant overrides
/// `C0`, `C1`, `C2`, `C0_star`, `C1_star`, `C2_star`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub kind: BoundKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Parses `k=v,k=v,...`.
pub fn parse_params(s: &str) -> Result<BTreeMap<String, f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value, got '{kv}'")))?;
            let v = v
                .trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("bad value for {k}: {e}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn as_count(name: &str, x: f64) -> Result<u64> {
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(invalid(format!("{name} must be a nonnegative integer, got {x}")))
    }
}

impl BoundSpec {
    pub fn new(kind: BoundKind) -> Self {
        Self {
            kind,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| invalid(format!("{} needs parameter '{key}'", self.kind)))
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn constants(&self) -> KpConstants {
        let base = KpConstants::from_base(
            self.get_or("C0", KpConstants::default().c0),
            self.get_or("C1", KpConstants::default().c1),
            self.get_or("C2", KpConstants::default().c2),
        );
        KpConstants {
            c0_star: self.get_or("C0_star", base.c0_star),
            c1_star: self.get_or("C1_star", base.c1_star),
            c2_star: self.get_or("C2_star", base.c2_star),
            ..base
        }
    }

    /// Fills `n`, `p`, `y = p/n` and any moment parameter obtainable from
    /// closed forms, keeping explicitly supplied values.
    pub fn resolve(&self, p: usize, n: usize, exact: Option<&ExactMoments>) -> Result<BoundSpec> {
        let mut out = self.clone();
        let mut fill = |k: &str, v: f64| {
            out.params.entry(k.to_string()).or_insert(v);
        };
        fill("n", n as f64);
        fill("p", p as f64);
        fill("y", p as f64 / n as f64);
        if let Some(ex) = exact {
            match self.kind {
                BoundKind::Thm1 => {
                    let a = self.get("a")?;
                    fill("c_a", ex.c(a).value);
                    fill("C_a", ex.big_c(a).value);
                    fill("C_2a", ex.big_c(2.0 * a).value);
                }
                BoundKind::Thm2L2 | BoundKind::Cor2L2 => fill("L", ex.l(2.0).value),
                BoundKind::Cor1 | BoundKind::Cor2Alpha => {
                    let alpha = self.get("alpha")?;
                    fill("L", ex.l(alpha).value);
                }
                BoundKind::Thm2Kp | BoundKind::Cor3 => fill("K", ex.k().value),
            }
        }
        let y = out.get("y")?;
        if y < p as f64 / n as f64 * (1.0 - 1e-12) {
            return Err(invalid(format!("y = {y} is below p/n = {}", p as f64 / n as f64)));
        }
        Ok(out)
    }

    pub fn evaluate(&self) -> Result<BoundResult> {
        let t = self.get_or("t", 0.0);
        match self.kind {
            BoundKind::Thm1 => thm1_bound(&Thm1Inputs {
                c_a: self.get("c_a")?,
                big_c_a: self.get("C_a")?,
                big_c_2a: self.get("C_2a")?,
                a: self.get("a")?,
                y: self.get("y")?,
                n: as_count("n", self.get("n")?)?,
                t,
            }),
            BoundKind::Thm2L2 => thm2_l2_bound(self.get("L")?, self.get("y")?, as_count("n", self.get("n")?)?, t),
            BoundKind::Thm2Kp => thm2_kp_bound(
                self.get("K")?,
                self.get("y")?,
                as_count("n", self.get("n")?)?,
                t,
                &self.constants(),
            ),
            BoundKind::Cor1 => cor1_bound(
                self.get("alpha")?,
                self.get("L")?,
                self.get("y")?,
                as_count("n", self.get("n")?)?,
            ),
            BoundKind::Cor2Alpha | BoundKind::Cor2L2 => {
                let alpha = match self.kind {
                    BoundKind::Cor2Alpha => Some(self.get("alpha")?),
                    _ => None,
                };
                let eps = self.get("eps")?;
                let p = as_count("p", self.get("p")?)?;
                let min_n = cor2_min_n(alpha, self.get("L")?, eps, p)?;
                if let Some(&n) = self.params.get("n") {
                    let n = as_count("n", n)?;
                    if n < min_n {
                        return Err(Error::PreconditionViolated(format!(
                            "n = {n} is below the required {min_n}"
                        )));
                    }
                }
                Ok(BoundResult {
                    lower_bound: 1.0 - eps,
                    failure_probability: 1.0,
                    vacuous: 1.0 - eps <= 0.0,
                    event: BoundEvent::Mean,
                    min_n: Some(min_n),
                })
            }
            BoundKind::Cor3 => cor3_bound(
                self.get("K")?,
                as_count("n", self.get("n")?)?,
                as_count("p", self.get("p")?)?,
                &self.constants(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn thm1(c_a: f64, big_c_a: f64, big_c_2a: f64, a: f64, y: f64, n: u64, t: f64) -> BoundResult {
        thm1_bound(&Thm1Inputs { c_a, big_c_a, big_c_2a, a, y, n, t }).unwrap()
    }

    #[test]
    fn thm1_examples() {
        let r = thm1(1.0, 0.0, 0.0, 1.0, 0.1, 100, 0.0);
        assert_abs_diff_eq!(r.lower_bound, 0.5, epsilon = 1e-15);
        assert_eq!(r.failure_probability, 1.0);
        assert!(thm1(1.0, 0.0, 0.0, 1.0, 0.1, 100, 40.0).failure_probability < 1e-300);

        let ex = ExactMoments::Gaussian;
        let (c10, cc10, cc20) = (ex.c(10.0).value, ex.big_c(10.0).value, ex.big_c(20.0).value);
        assert_abs_diff_eq!(c10, 0.997_087_887, epsilon = 1e-8);
        assert_abs_diff_eq!(cc10, 2.959_955_616, epsilon = 1e-8);
        assert_abs_diff_eq!(cc20, 2.999_645_657, epsilon = 1e-8);
        let r = thm1(c10, cc10, cc20, 10.0, 0.001, 10_000, 2.146);
        assert_abs_diff_eq!(r.lower_bound, 0.613_924_710, epsilon = 1e-8);
        assert_relative_eq!(r.failure_probability, 0.1, max_relative = 1e-3);
        assert!(!r.vacuous);
    }

    #[test]
    fn thm2_l2_examples() {
        assert_abs_diff_eq!(thm2_l2_bound(1.0, 0.01, 100, 0.0).unwrap().lower_bound, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(thm2_l2_bound(3.0, 1e-14, 100, 0.0).unwrap().lower_bound, 1.0, epsilon = 1e-6);
        let r = thm2_l2_bound(3.0, 0.001, 10_000, 2.146).unwrap();
        assert_abs_diff_eq!(r.lower_bound, 0.7437, epsilon = 1e-4);
        assert!(thm2_l2_bound(0.5, 0.01, 100, 0.0).is_err());
        assert!(thm2_l2_bound(3.0, 1.0, 100, 0.0).is_err());
    }

    #[test]
    fn thm2_kp_examples() {
        let c = KpConstants::default();
        assert_abs_diff_eq!(thm2_kp_bound(1.0, 1.0 / 16.0, 10, 0.0, &c).unwrap().lower_bound, 0.25, epsilon = 1e-15);
        assert!(matches!(
            thm2_kp_bound(1.0, 0.1, 10, 0.0, &c),
            Err(Error::PreconditionViolated(_))
        ));
        let r = thm2_kp_bound(0.5, 0.01, 1_000_000, 1.0, &c).unwrap();
        assert_abs_diff_eq!(r.lower_bound, 0.0625 - 1.154_700_538_4 / 1000.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lower_bound, 0.06135, epsilon = 1e-5);
    }

    #[test]
    fn default_constants_satisfy_derivation() {
        let c = KpConstants::default();
        assert_eq!(c.c0_star, c.c0 / 2.0);
        assert_eq!(c.c1_star, c.c0 * c.c0 / (8.0 * c.c1 * c.c1));
        assert_eq!(c.c2_star, c.c2);
        assert_eq!(c.c0_star, 0.125);
        assert_relative_eq!(c.c1_star, 3.0 / 512.0, max_relative = 1e-15);
        assert_eq!(c.c2_star, 1.0 / 16.0);
    }

    #[test]
    fn cor1_examples() {
        let r = cor1_bound(2.0, 3.0, 0.001, 10_000).unwrap();
        assert_abs_diff_eq!(r.lower_bound, 0.703_451_310, epsilon = 1e-8);
        assert_relative_eq!(r.failure_probability, (-10.0f64).exp(), max_relative = 1e-12);
        assert_abs_diff_eq!(cor1_bound(1.0, 1.0, 1e-6, 10).unwrap().lower_bound, 0.91, epsilon = 1e-12);
        assert_abs_diff_eq!(cor1_bound(0.5, 2.0, 1e-300, 10).unwrap().lower_bound, 1.0, epsilon = 1e-12);
        assert!(cor1_bound(2.5, 3.0, 0.001, 10).is_err());
    }

    #[test]
    fn cor2_examples() {
        assert_eq!(cor2_min_n(None, 3.0, 0.5, 10).unwrap(), 1920);
        assert_eq!(cor2_min_n(None, 1.0, 1.0 - 1e-12, 1).unwrap(), 16);
        assert_eq!(cor2_min_n(Some(1.0), 1.0, 0.5, 1).unwrap(), 1280);
        assert!(cor2_min_n(Some(2.0), 1.0, 0.5, 1).is_err());
        assert!(cor2_min_n(None, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn cor3_examples() {
        let c = KpConstants::default();
        let r = cor3_bound(1.0, 16, 1, &c).unwrap();
        assert_eq!(r.lower_bound, 0.125);
        assert_abs_diff_eq!(r.failure_probability, (-3.0 * 16.0 / 512.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.failure_probability, 0.9105, epsilon = 1e-4);
        assert!(matches!(cor3_bound(1.0, 16, 2, &c), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn spec_round_trip_through_params() {
        let spec = BoundSpec {
            kind: "cor1".parse().unwrap(),
            params: parse_params("alpha=2, L=3,y=0.001,n=10000").unwrap(),
        };
        let r = spec.evaluate().unwrap();
        assert_abs_diff_eq!(r.lower_bound, 0.703_451_310, epsilon = 1e-8);
        assert!(BoundSpec::new(BoundKind::Thm1).evaluate().is_err());
        assert!(parse_params("a=1,b").is_err());
    }

    #[test]
    fn resolve_fills_gaussian_moments() {
        let spec = BoundSpec::new(BoundKind::Thm1).with("a", 10.0).with("t", 2.146);
        let r = spec.resolve(10, 10_000, Some(&ExactMoments::Gaussian)).unwrap().evaluate().unwrap();
        assert_abs_diff_eq!(r.lower_bound, 0.613_924_710, epsilon = 1e-8);

        let cor2 = BoundSpec::new(BoundKind::Cor2L2).with("eps", 0.5);
        let ok = cor2.resolve(10, 1920, Some(&ExactMoments::Gaussian)).unwrap().evaluate().unwrap();
        assert_eq!(ok.min_n, Some(1920));
        assert_eq!(ok.event, BoundEvent::Mean);
        let short = cor2.resolve(10, 1919, Some(&ExactMoments::Gaussian)).unwrap().evaluate();
        assert!(matches!(short, Err(Error::PreconditionViolated(_))));
    }
}
