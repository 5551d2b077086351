//! Seeded Monte Carlo campaigns: each trial draws `n` vectors, certifies a
//! lower bound with the barrier tracker, computes the true `λ_min(n⁻¹ A_n)`,
//! and the run tallies how often each theoretical bound is violated.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{certify_stream, choose_phi, PhiMode};
use crate::bounds::{BoundEvent, BoundKind, BoundSpec};
use crate::checks::{binomial_slack, SIGMA_SLACK};
use crate::ensembles::{Ensemble, EnsembleSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::min_eigenvalue;
use crate::moments::exact_moments;
use crate::seed::{derive_seed, rng_for};

pub const TOOL_VERSION: &str = concat!("spectral-barrier ", env!("CARGO_PKG_VERSION"));

pub const MAX_P: usize = 200;
pub const MAX_N: usize = 20_000;
pub const MAX_TRIALS: usize = 1000;

/// Relative float slack in the soundness comparison `l_n ≤ λ_min(A_n)`.
pub const SOUNDNESS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleSpec,
    pub p: usize,
    pub n: usize,
    pub trials: usize,
    pub phi_mode: PhiMode,
    #[serde(default)]
    pub bounds_to_check: Vec<BoundSpec>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Not part of the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    /// Lifts the default caps on `p`, `n` and `trials`.
    #[serde(default)]
    pub allow_large: bool,
    /// Re-verify the barrier invariants before every step.
    #[serde(default)]
    pub verify: bool,
}

impl ExperimentConfig {
    /// Gaussian campaign with `φ = 1/4` and no bounds.
    pub fn new(ensemble: EnsembleSpec, n: usize, trials: usize, seed: u64) -> Self {
        Self {
            p: ensemble.p,
            ensemble,
            n,
            trials,
            phi_mode: PhiMode::Theorem2Kp,
            bounds_to_check: Vec::new(),
            t_grid: Vec::new(),
            seed,
            parallelism: None,
            allow_large: false,
            verify: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.ensemble.p != self.p {
            return Err(invalid(format!(
                "ensemble dimension {} differs from p = {}",
                self.ensemble.p, self.p
            )));
        }
        if self.p == 0 || self.p > self.n {
            return Err(invalid(format!("need 1 <= p <= n, got p = {}, n = {}", self.p, self.n)));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.parallelism == Some(0) {
            return Err(invalid("parallelism must be at least 1"));
        }
        if !self.allow_large && (self.p > MAX_P || self.n > MAX_N || self.trials > MAX_TRIALS) {
            return Err(invalid(format!(
                "p <= {MAX_P}, n <= {MAX_N} and trials <= {MAX_TRIALS} unless allow_large is set"
            )));
        }
        if self.t_grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(invalid("t values must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub lambda_min: f64,
    pub certified_l_n_over_n: f64,
    pub sound: bool,
}

/// Outcome of one bound at one `t` (or once, for bounds without `t`).
///
/// Tail bounds pass when the violation frequency of `λ_min < bound_value` is
/// at most `nominal + 3σ_binomial + 1/trials`. Mean bounds pass when the
/// sample mean of `λ_min` plus three standard errors reaches `bound_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub kind: BoundKind,
    pub t: Option<f64>,
    pub event: BoundEvent,
    pub bound_value: f64,
    pub vacuous: bool,
    pub nominal_failure_prob: Option<f64>,
    pub violations: usize,
    pub empirical_violation_freq: f64,
    pub binomial_3sigma: f64,
    pub allowance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_lambda_min: f64,
    pub std_error_lambda_min: f64,
    pub quantiles: Vec<Quantile>,
    pub mean_certified: f64,
    /// Mean of `λ_min - l_n/n`.
    pub mean_certificate_gap: f64,
    pub min_certificate_gap: f64,
    pub soundness_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub phi: f64,
    pub trials: Vec<TrialRecord>,
    pub bounds: Vec<BoundRecord>,
    pub aggregates: Aggregates,
}

impl ExperimentReport {
    pub fn sound(&self) -> bool {
        self.aggregates.soundness_failures == 0
    }

    pub fn bounds_pass(&self) -> bool {
        self.bounds.iter().all(|b| b.pass)
    }

    pub fn passed(&self) -> bool {
        self.sound() && self.bounds_pass()
    }
}

const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], level: f64) -> f64 {
    let h = level * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Fills `n`, `p`, `y` and the moment parameters the ensemble determines.
fn resolve_bounds(cfg: &ExperimentConfig, ensemble: &Ensemble) -> Result<Vec<BoundSpec>> {
    let exact = exact_moments(&cfg.ensemble).ok().filter(|e| e.is_complete());
    cfg.bounds_to_check
        .iter()
        .map(|spec| {
            let mut spec = spec.clone();
            if let (Some(k), BoundKind::Thm2Kp | BoundKind::Cor3) = (ensemble.kashin(), spec.kind) {
                spec.params.entry("K".into()).or_insert(k.k_hat());
            }
            let spec = spec.resolve(cfg.p, cfg.n, exact.as_ref())?;
            spec.clone().with("t", 0.0).evaluate()?;
            Ok(spec)
        })
        .collect()
}

fn run_trial(cfg: &ExperimentConfig, ensemble: &Ensemble, phi: f64, trial: usize) -> Result<TrialRecord> {
    let seed = derive_seed(cfg.seed, trial as u64);
    let sampler = ensemble.sampler_with_rng(rng_for(cfg.seed, trial as u64));
    let cert = certify_stream(cfg.p, phi, sampler.take(cfg.n), cfg.verify)?;
    let lambda = min_eigenvalue(cert.state.matrix())?;
    Ok(TrialRecord {
        trial,
        seed,
        lambda_min: lambda / cfg.n as f64,
        certified_l_n_over_n: cert.l_n_over_n,
        sound: cert.l_n <= lambda + SOUNDNESS_SLACK * lambda.abs().max(1.0),
    })
}

fn tally(spec: &BoundSpec, t: Option<f64>, lambdas: &[f64]) -> Result<BoundRecord> {
    let spec = match t {
        Some(t) => spec.clone().with("t", t),
        None => spec.clone(),
    };
    let result = spec.evaluate()?;
    let trials = lambdas.len();
    let violations = lambdas.iter().filter(|&&l| l < result.lower_bound).count();
    let freq = violations as f64 / trials as f64;
    let (nominal, sigma, allowance, pass) = match result.event {
        BoundEvent::Tail => {
            let nominal = result.failure_probability;
            let sigma = binomial_slack(nominal, trials);
            let allowance = nominal + sigma + 1.0 / trials as f64;
            (Some(nominal), sigma, allowance, freq <= allowance)
        }
        BoundEvent::Mean => {
            let (mean, se) = mean_and_se(lambdas);
            let slack = SIGMA_SLACK * se;
            (None, slack, slack, mean + slack >= result.lower_bound)
        }
    };
    Ok(BoundRecord {
        kind: spec.kind,
        t,
        event: result.event,
        bound_value: result.lower_bound,
        vacuous: result.vacuous,
        nominal_failure_prob: nominal,
        violations,
        empirical_violation_freq: freq,
        binomial_3sigma: sigma,
        allowance,
        pass,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ensemble = Ensemble::new(cfg.ensemble)?;
    let phi = choose_phi(cfg.phi_mode)?;
    let bounds = resolve_bounds(cfg, &ensemble)?;

    let run = || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| {
                run_trial(cfg, &ensemble, phi, i).map_err(|e| Error::Trial {
                    trial: i,
                    seed: derive_seed(cfg.seed, i as u64),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let trials = match cfg.parallelism {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let lambdas: Vec<f64> = trials.iter().map(|r| r.lambda_min).collect();
    let mut records = Vec::new();
    for spec in &bounds {
        if spec.kind.uses_t() {
            for &t in &cfg.t_grid {
                records.push(tally(spec, Some(t), &lambdas)?);
            }
        } else {
            records.push(tally(spec, None, &lambdas)?);
        }
    }

    let (mean, se) = mean_and_se(&lambdas);
    let mut sorted = lambdas.clone();
    sorted.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = trials.iter().map(|r| r.lambda_min - r.certified_l_n_over_n).collect();
    let aggregates = Aggregates {
        mean_lambda_min: mean,
        std_error_lambda_min: se,
        quantiles: QUANTILE_LEVELS
            .iter()
            .map(|&level| Quantile {
                level,
                value: quantile(&sorted, level),
            })
            .collect(),
        mean_certified: trials.iter().map(|r| r.certified_l_n_over_n).sum::<f64>() / trials.len() as f64,
        mean_certificate_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
        min_certificate_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        soundness_failures: trials.iter().filter(|r| !r.sound).count(),
    };

    Ok(ExperimentReport {
        tool_version: TOOL_VERSION.to_string(),
        config: ExperimentConfig {
            parallelism: None,
            ..cfg.clone()
        },
        phi,
        trials,
        bounds: records,
        aggregates,
    })
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(invalid(format!("unknown report format '{other}'"))),
        }
    }
}

pub fn report_to_json(r: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(r)?;
    s.push('\n');
    Ok(s)
}

/// Path of the per-bound CSV that accompanies the per-trial CSV at `path`.
pub fn bounds_csv_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_bounds.{ext}"),
        None => format!("{stem}_bounds"),
    };
    path.with_file_name(name)
}

fn csv_preamble<W: Write>(w: &mut W, r: &ExperimentReport) -> Result<()> {
    writeln!(w, "# {}", r.tool_version)?;
    writeln!(w, "# config: {}", serde_json::to_string(&r.config)?)?;
    writeln!(w, "# phi: {:?}", r.phi)?;
    Ok(())
}

#[derive(Serialize)]
struct BoundRow<'a> {
    kind: String,
    t: Option<f64>,
    event: &'a BoundEvent,
    bound_value: f64,
    vacuous: bool,
    nominal_failure_prob: Option<f64>,
    violations: usize,
    empirical_violation_freq: f64,
    binomial_3sigma: f64,
    allowance: f64,
    pass: bool,
}

fn write_csv<W: Write, T: Serialize>(w: W, header: &[&str], rows: impl Iterator<Item = T>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes per-trial rows to `trials` and per-(bound, t) rows to `bounds`,
/// each preceded by `#` comment lines with the tool version and config.
pub fn write_report_csv<W1: Write, W2: Write>(r: &ExperimentReport, mut trials: W1, mut bounds: W2) -> Result<()> {
    csv_preamble(&mut trials, r)?;
    write_csv(
        trials,
        &["trial", "seed", "lambda_min", "certified_l_n_over_n", "sound"],
        r.trials.iter(),
    )?;
    csv_preamble(&mut bounds, r)?;
    write_csv(
        bounds,
        &[
            "kind",
            "t",
            "event",
            "bound_value",
            "vacuous",
            "nominal_failure_prob",
            "violations",
            "empirical_violation_freq",
            "binomial_3sigma",
            "allowance",
            "pass",
        ],
        r.bounds.iter().map(|b| BoundRow {
            kind: b.kind.to_string(),
            t: b.t,
            event: &b.event,
            bound_value: b.bound_value,
            vacuous: b.vacuous,
            nominal_failure_prob: b.nominal_failure_prob,
            violations: b.violations,
            empirical_violation_freq: b.empirical_violation_freq,
            binomial_3sigma: b.binomial_3sigma,
            allowance: b.allowance,
            pass: b.pass,
        }),
    )
}

/// JSON goes to `path`; CSV goes to `path` plus [`bounds_csv_path`].
pub fn emit_report(r: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(report_to_json(r)?.as_bytes())?;
            f.flush()?;
        }
        ReportFormat::Csv => {
            let trials = BufWriter::new(File::create(path)?);
            let bounds = BufWriter::new(File::create(bounds_csv_path(path))?);
            write_report_csv(r, trials, bounds)?;
        }
    }
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Aspect ratio: `n = ⌈p/y⌉`.
    Y,
    P,
    /// Fixed `φ`, rerun on the same streams.
    Phi,
    T,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Y => "y",
            Self::P => "p",
            Self::Phi => "phi",
            Self::T => "t",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(Self::Y),
            "p" => Ok(Self::P),
            "phi" => Ok(Self::Phi),
            "t" => Ok(Self::T),
            other => Err(invalid(format!("unknown sweep axis '{other}' (expected y, p, phi or t)"))),
        }
    }
}

fn count_value(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(invalid(format!("{axis} values must be positive integers, got {v}")))
    }
}

/// Keeps a `φ = √y/(2√L₂)` mode in step with the current aspect ratio.
fn retune_phi(cfg: &mut ExperimentConfig) {
    if let PhiMode::Theorem2L2 { l2, .. } = cfg.phi_mode {
        cfg.phi_mode = PhiMode::Theorem2L2 {
            l2,
            y: cfg.p as f64 / cfg.n as f64,
        };
    }
}

/// The config run at one sweep point.
pub fn sweep_point(base: &ExperimentConfig, axis: SweepAxis, index: usize, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    if axis != SweepAxis::Phi {
        cfg.seed = derive_seed(base.seed, index as u64);
    }
    match axis {
        SweepAxis::Y => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(invalid(format!("y must lie in (0, 1], got {value}")));
            }
            cfg.n = (cfg.p as f64 / value).ceil() as usize;
            retune_phi(&mut cfg);
        }
        SweepAxis::P => {
            cfg.p = count_value(axis, value)?;
            cfg.ensemble = cfg.ensemble.with_dim(cfg.p);
            retune_phi(&mut cfg);
        }
        SweepAxis::Phi => cfg.phi_mode = PhiMode::Fixed { phi: value },
        SweepAxis::T => cfg.t_grid = vec![value],
    }
    Ok(cfg)
}

/// Runs one experiment per value, in input order. Seeds derive from
/// `(base.seed, index)` except on the `phi` axis, which reuses the base seed
/// so every `φ` sees the same streams.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<ExperimentReport>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sweep_point(base, axis, i, v)
                .and_then(|cfg| run_experiment(&cfg))
                .map_err(|e| Error::Sweep {
                    axis: axis.to_string(),
                    value: v,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// `(φ, mean certified l_n/n)` of the report with the largest mean certificate.
pub fn best_phi(reports: &[ExperimentReport]) -> Option<(f64, f64)> {
    reports
        .iter()
        .map(|r| (r.phi, r.aggregates.mean_certified))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(p: usize, n: usize, trials: usize, seed: u64) -> ExperimentConfig {
        ExperimentConfig::new(EnsembleSpec::gaussian(p), n, trials, seed)
    }

    #[test]
    fn gaussian_runs_are_sound() {
        let r = run_experiment(&gaussian(10, 200, 50, 7)).unwrap();
        assert_eq!(r.trials.len(), 50);
        assert!(r.trials.iter().all(|t| t.sound));
        assert!(r.aggregates.min_certificate_gap >= 0.0);
    }

    #[test]
    fn one_by_one_case() {
        let r = run_experiment(&gaussian(1, 1, 1, 3)).unwrap();
        let x = crate::ensembles::Ensemble::new(EnsembleSpec::gaussian(1))
            .unwrap()
            .sampler_with_rng(rng_for(3, 0))
            .next_vector();
        let rec = r.trials[0];
        assert!((rec.lambda_min - x.as_slice()[0].powi(2)).abs() < 1e-12);
        assert!(rec.certified_l_n_over_n <= rec.lambda_min);
    }

    #[test]
    fn zero_t_passes_trivially() {
        let mut cfg = gaussian(5, 50, 20, 1);
        cfg.bounds_to_check = vec![BoundSpec::new(BoundKind::Thm2L2)];
        cfg.t_grid = vec![0.0];
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.bounds.len(), 1);
        assert_eq!(r.bounds[0].nominal_failure_prob, Some(1.0));
        assert!(r.bounds[0].pass);
    }

    #[test]
    fn config_validation() {
        let mut cfg = gaussian(10, 5, 1, 0);
        assert!(run_experiment(&cfg).is_err());
        cfg.n = 30_000;
        assert!(cfg.validate().is_err());
        cfg.allow_large = true;
        assert!(cfg.validate().is_ok());
        let mut cfg = gaussian(10, 100, 1, 0);
        cfg.p = 11;
        assert!(cfg.validate().is_err());
        let mut cfg = gaussian(10, 100, 1, 0);
        cfg.bounds_to_check = vec![BoundSpec::new(BoundKind::Cor2L2).with("eps", 0.5)];
        assert!(matches!(run_experiment(&cfg), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.25), 2.0);
        assert_eq!(quantile(&xs, 0.1), 1.4);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn sweep_points() {
        let base = gaussian(10, 100, 1, 4);
        let c = sweep_point(&base, SweepAxis::Y, 2, 0.3).unwrap();
        assert_eq!(c.n, 34);
        assert_ne!(c.seed, base.seed);
        let c = sweep_point(&base, SweepAxis::Phi, 2, 0.7).unwrap();
        assert_eq!(c.seed, base.seed);
        assert_eq!(c.phi_mode, PhiMode::Fixed { phi: 0.7 });
        assert!(sweep_point(&base, SweepAxis::P, 0, 2.5).is_err());
        assert!("q".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn bounds_path_naming() {
        assert_eq!(bounds_csv_path(Path::new("/tmp/run.csv")), PathBuf::from("/tmp/run_bounds.csv"));
        assert_eq!(bounds_csv_path(Path::new("out")), PathBuf::from("out_bounds"));
    }
}
