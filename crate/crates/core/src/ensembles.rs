//! Isotropic random-vector ensembles in `ℝ^p`.
//!
//! Every family satisfies `E XXᵀ = I_p` analytically:
//!
//! | family              | draw                                                  |
//! |---------------------|-------------------------------------------------------|
//! | `gaussian`          | i.i.d. `N(0, 1)` coordinates                          |
//! | `rademacher`        | i.i.d. uniform `±1` coordinates                       |
//! | `student_t`         | i.i.d. `t_ν` coordinates scaled by `√((ν-2)/ν)`       |
//! | `sparse`            | `√p · e_J` with `J` uniform on `{1, …, p}`            |
//! | `kashin`            | uniform over the `N` columns of a [`KashinSystem`]    |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Vector;
use crate::moments::{search_extremum, Extremum, Functional, SearchBudget, WeightedSample};
use crate::seed::rng_for;

pub use crate::moments::{exact_moments, ExactMoments};

/// Largest support enumerated exactly for Rademacher vectors (`2^12` points).
const MAX_ENUMERATED_SUPPORT: usize = 1 << 12;

/// Stream index reserved for building a Kashin system from the ensemble seed.
const KASHIN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Rademacher,
    StudentT { nu: f64 },
    SparseCoordinate,
    KashinDiscrete { n_points: usize, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(flatten)]
    pub family: Family,
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(family: Family, p: usize, seed: u64) -> Result<Self> {
        let spec = Self { family, p, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(p: usize) -> Self {
        Self { family: Family::Gaussian, p, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dim(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(invalid("ensemble dimension p must be at least 1"));
        }
        match self.family {
            Family::StudentT { nu } if !(nu > 2.0) || !nu.is_finite() => {
                Err(invalid(format!("student_t requires finite nu > 2, got {nu}")))
            }
            Family::KashinDiscrete { n_points, delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(invalid(format!("kashin delta must lie in (0, 1), got {delta}")));
                }
                let cap = ((1.0 - delta) * n_points as f64).floor() as usize;
                if self.p > cap {
                    return Err(invalid(format!(
                        "kashin requires p <= floor((1 - delta) N) = {cap}, got p = {}",
                        self.p
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Short family name used in the textual form.
    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Gaussian => "gaussian",
            Family::Rademacher => "rademacher",
            Family::StudentT { .. } => "student_t",
            Family::SparseCoordinate => "sparse",
            Family::KashinDiscrete { .. } => "kashin",
        }
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:p={}", self.family_name(), self.p)?;
        match self.family {
            Family::StudentT { nu } => write!(f, ",nu={nu}")?,
            Family::KashinDiscrete { n_points, delta } => write!(f, ",N={n_points},delta={delta}")?,
            _ => {}
        }
        if self.seed != 0 {
            write!(f, ",seed={}", self.seed)?;
        }
        Ok(())
    }
}

impl FromStr for EnsembleSpec {
    type Err = crate::Error;

    /// Parses `gaussian:p=50`, `student_t:p=50,nu=5`, `kashin:p=32,N=64,delta=0.5`, …
    /// An optional `seed=S` key is accepted by every family.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut p = None;
        let mut nu = None;
        let mut n_points = None;
        let mut delta = None;
        let mut seed = 0u64;
        for kv in rest.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value, got '{kv}'")))?;
            let bad = |e: &dyn fmt::Display| invalid(format!("bad value for {k}: {e}"));
            match k.trim() {
                "p" => p = Some(v.trim().parse::<usize>().map_err(|e| bad(&e))?),
                "nu" => nu = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
                "N" => n_points = Some(v.trim().parse::<usize>().map_err(|e| bad(&e))?),
                "delta" => delta = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
                "seed" => seed = v.trim().parse::<u64>().map_err(|e| bad(&e))?,
                other => return Err(invalid(format!("unknown ensemble key '{other}'"))),
            }
        }
        let p = p.ok_or_else(|| invalid("ensemble spec needs p=<dim>"))?;
        let family = match name.trim() {
            "gaussian" => Family::Gaussian,
            "rademacher" => Family::Rademacher,
            "student_t" => Family::StudentT {
                nu: nu.ok_or_else(|| invalid("student_t needs nu=<dof>"))?,
            },
            "sparse" => Family::SparseCoordinate,
            "kashin" => Family::KashinDiscrete {
                n_points: n_points.ok_or_else(|| invalid("kashin needs N=<points>"))?,
                delta: delta.ok_or_else(|| invalid("kashin needs delta=<fraction>"))?,
            },
            other => return Err(invalid(format!("unknown ensemble family '{other}'"))),
        };
        Self::new(family, p, seed)
    }
}

/// Finite point set whose uniform measure is isotropic in `ℝ^p`.
#[derive(Debug, Clone)]
pub struct KashinSystem {
    /// `p × N`; column `i` is the support point `x^{(i)}`.
    support: DMatrix<f64>,
    /// Realized `min_v (1/N) Σ |(x^{(i)}, v)|` from the direction search.
    k_hat: f64,
}

impl KashinSystem {
    /// Builds the system from the first `p` columns of an orthogonal `N × N`
    /// matrix `c`: row `k` of the support matrix is `√N · c[:, k]ᵀ`.
    pub fn from_orthogonal(c: &DMatrix<f64>, p: usize) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(invalid("orthogonal matrix must be square"));
        }
        if p == 0 || p > n {
            return Err(invalid(format!("need 1 <= p <= N = {n}, got {p}")));
        }
        let scale = (n as f64).sqrt();
        let support = DMatrix::from_fn(p, n, |k, i| scale * c[(i, k)]);
        let sample = WeightedSample::uniform(support.clone());
        let search = SearchBudget::default_for(p);
        let mut rng = rng_for(0x4b41_5348, p as u64);
        let found = search_extremum(&sample, &Functional::AbsMean, Extremum::Inf, &search, &mut rng);
        Ok(Self {
            support,
            k_hat: found.value,
        })
    }

    pub fn n_points(&self) -> usize {
        self.support.ncols()
    }

    pub fn dim(&self) -> usize {
        self.support.nrows()
    }

    pub fn support(&self) -> &DMatrix<f64> {
        &self.support
    }

    pub fn k_hat(&self) -> f64 {
        self.k_hat
    }

    /// `(1/N) Σ x xᵀ`, which equals `I_p` up to rounding.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.support * self.support.transpose() / self.n_points() as f64
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` sign-corrected by `sign(R_ii)`.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn build_kashin(n_points: usize, delta: f64, p: usize, seed: u64) -> Result<KashinSystem> {
    EnsembleSpec::new(Family::KashinDiscrete { n_points, delta }, p, seed)?;
    let mut rng = rng_for(seed, KASHIN_STREAM);
    let c = haar_orthogonal(n_points, &mut rng);
    KashinSystem::from_orthogonal(&c, p)
}

/// An ensemble ready for sampling. Kashin systems are built once here and
/// shared by every stream.
#[derive(Debug, Clone)]
pub struct Ensemble {
    spec: EnsembleSpec,
    kashin: Option<KashinSystem>,
}

impl Ensemble {
    pub fn new(spec: EnsembleSpec) -> Result<Self> {
        spec.validate()?;
        let kashin = match spec.family {
            Family::KashinDiscrete { n_points, delta } => {
                Some(build_kashin(n_points, delta, spec.p, spec.seed)?)
            }
            _ => None,
        };
        Ok(Self { spec, kashin })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.p
    }

    pub fn kashin(&self) -> Option<&KashinSystem> {
        self.kashin.as_ref()
    }

    /// Independent sampler for stream `stream` of this ensemble.
    pub fn sampler(&self, stream: u64) -> Sampler<'_> {
        self.sampler_with_rng(rng_for(self.spec.seed, stream))
    }

    pub fn sampler_with_rng(&self, rng: ChaCha8Rng) -> Sampler<'_> {
        let kind = match self.spec.family {
            Family::Gaussian => Kind::Gaussian,
            Family::Rademacher => Kind::Rademacher,
            Family::StudentT { nu } => Kind::StudentT {
                dist: StudentT::new(nu).expect("nu validated"),
                scale: ((nu - 2.0) / nu).sqrt(),
            },
            Family::SparseCoordinate => Kind::Sparse {
                scale: (self.spec.p as f64).sqrt(),
            },
            Family::KashinDiscrete { .. } => {
                Kind::Kashin(self.kashin.as_ref().expect("kashin system built").support())
            }
        };
        Sampler {
            p: self.spec.p,
            rng,
            kind,
        }
    }

    /// Full support with uniform weights, for families whose distribution is
    /// a small finite point set.
    pub fn finite_support(&self) -> Option<DMatrix<f64>> {
        let p = self.spec.p;
        match self.spec.family {
            Family::SparseCoordinate => Some(DMatrix::identity(p, p) * (p as f64).sqrt()),
            Family::Rademacher if p < usize::BITS as usize && (1usize << p) <= MAX_ENUMERATED_SUPPORT => {
                let count = 1usize << p;
                Some(DMatrix::from_fn(p, count, |i, j| {
                    if (j >> i) & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                }))
            }
            Family::KashinDiscrete { .. } => self.kashin.as_ref().map(|k| k.support().clone()),
            _ => None,
        }
    }

    /// `count` i.i.d. draws as the columns of a `p × count` matrix (stream 0).
    pub fn sample(&self, count: usize) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(invalid("count must be at least 1"));
        }
        let mut sampler = self.sampler(0);
        let mut out = DMatrix::zeros(self.spec.p, count);
        for j in 0..count {
            sampler.fill(out.column_mut(j).as_mut_slice());
        }
        Ok(out)
    }
}

/// `count` i.i.d. draws from `spec`, deterministic in `(spec, count)`.
pub fn sample(spec: &EnsembleSpec, count: usize) -> Result<DMatrix<f64>> {
    Ensemble::new(*spec)?.sample(count)
}

enum Kind<'a> {
    Gaussian,
    Rademacher,
    StudentT { dist: StudentT<f64>, scale: f64 },
    Sparse { scale: f64 },
    Kashin(&'a DMatrix<f64>),
}

/// Stateful stream of isotropic vectors.
pub struct Sampler<'a> {
    p: usize,
    rng: ChaCha8Rng,
    kind: Kind<'a>,
}

impl Sampler<'_> {
    pub fn dim(&self) -> usize {
        self.p
    }

    /// Writes the next draw into `out` (length `p`).
    pub fn fill(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.p);
        let rng = &mut self.rng;
        match &self.kind {
            Kind::Gaussian => out.iter_mut().for_each(|x| *x = rng.sample(StandardNormal)),
            Kind::Rademacher => out
                .iter_mut()
                .for_each(|x| *x = if rng.random::<bool>() { 1.0 } else { -1.0 }),
            Kind::StudentT { dist, scale } => {
                out.iter_mut().for_each(|x| *x = scale * dist.sample(rng))
            }
            Kind::Sparse { scale } => {
                out.fill(0.0);
                out[rng.random_range(0..self.p)] = *scale;
            }
            Kind::Kashin(support) => {
                let i = rng.random_range(0..support.ncols());
                out.copy_from_slice(support.column(i).as_slice());
            }
        }
    }

    pub fn next_vector(&mut self) -> Vector {
        let mut buf = vec![0.0; self.p];
        self.fill(&mut buf);
        Vector::new(buf)
    }
}

impl Iterator for Sampler<'_> {
    type Item = Vector;

    fn next(&mut self) -> Option<Vector> {
        Some(self.next_vector())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn textual_forms_round_trip() {
        for text in [
            "gaussian:p=50",
            "rademacher:p=50",
            "student_t:p=50,nu=5",
            "sparse:p=50",
            "kashin:p=32,N=64,delta=0.5",
            "gaussian:p=3,seed=11",
        ] {
            let spec: EnsembleSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
    }

    #[test]
    fn textual_form_errors() {
        for bad in [
            "gaussian",
            "gaussian:p=0",
            "student_t:p=3",
            "student_t:p=3,nu=2",
            "kashin:p=40,N=64,delta=0.5",
            "kashin:p=4,N=8,delta=1.5",
            "cauchy:p=3",
            "gaussian:p=3,q=1",
        ] {
            assert!(bad.parse::<EnsembleSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn sparse_columns_are_scaled_basis_vectors() {
        let spec: EnsembleSpec = "sparse:p=4".parse().unwrap();
        let m = sample(&spec, 200).unwrap();
        for col in m.column_iter() {
            let nonzero: Vec<f64> = col.iter().copied().filter(|&x| x != 0.0).collect();
            assert_eq!(nonzero, vec![2.0]);
        }
    }

    #[test]
    fn rademacher_has_four_support_points() {
        let spec: EnsembleSpec = "rademacher:p=2".parse().unwrap();
        let m = sample(&spec, 2000).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for col in m.column_iter() {
            assert!(col.iter().all(|&x| x == 1.0 || x == -1.0));
            seen.insert((col[0] as i32, col[1] as i32));
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn haar_matrix_is_orthogonal() {
        let mut rng = rng_for(3, 0);
        let q = haar_orthogonal(16, &mut rng);
        let err = (&q.transpose() * &q - DMatrix::<f64>::identity(16, 16)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn degenerate_kashin_matches_sparse() {
        let sys = KashinSystem::from_orthogonal(&DMatrix::identity(4, 4), 4).unwrap();
        assert_eq!(sys.support(), &(DMatrix::identity(4, 4) * 2.0));
        assert_relative_eq!(sys.k_hat(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kashin_is_exactly_isotropic() {
        let sys = build_kashin(64, 0.5, 32, 5).unwrap();
        let err = (sys.second_moment() - DMatrix::<f64>::identity(32, 32)).abs().max();
        assert!(err < 1e-10, "{err}");
        assert!(sys.k_hat() > 0.0);
        assert!(build_kashin(64, 0.5, 33, 5).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        for text in ["gaussian:p=3", "student_t:p=3,nu=5", "kashin:p=4,N=8,delta=0.5"] {
            let spec: EnsembleSpec = text.parse().unwrap();
            assert_eq!(sample(&spec, 50).unwrap(), sample(&spec, 50).unwrap());
            assert_ne!(
                sample(&spec, 50).unwrap(),
                sample(&spec.with_seed(1), 50).unwrap()
            );
        }
    }
}
