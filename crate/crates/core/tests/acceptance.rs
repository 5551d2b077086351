//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use spectral_barrier::barrier::PhiMode;
use spectral_barrier::bounds::{BoundKind, BoundSpec};
use spectral_barrier::checks::{
    binomial_slack, default_martingales, lemma1_suite, lemma2_verify, lemma3_tail_check, Lemma2Config,
    Lemma2Reference, VerificationReport, LEMMA3_T_GRID,
};
use spectral_barrier::ensembles::{Ensemble, EnsembleSpec, Family};
use spectral_barrier::harness::{emit_report, report_to_json, run_experiment, ExperimentConfig, ReportFormat};
use spectral_barrier::moments::{
    compute_profile, prop1_c_lower_from_l, prop1_c_lower_from_m, prop1_c_upper, ExactMoments, McBudget,
    MomentValue,
};
use spectral_barrier::Result;

const SEED: u64 = 20_240_917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn describe_failures(report: &VerificationReport) -> String {
    let failed: Vec<String> = report
        .failures()
        .map(|c| format!("{} (observed {:.6}, threshold {:.6}, slack {:.2e})", c.name, c.observed, c.threshold, c.slack))
        .collect();
    if failed.is_empty() {
        format!("{} checks", report.checks.len())
    } else {
        format!("{} of {} checks failed: {}", failed.len(), report.checks.len(), failed.join("; "))
    }
}

/// Lemma 1: 10,000 random single steps keep `A - lI ≻ 0` and the potential cap.
fn lemma1() -> Result<Outcome> {
    let start = Instant::now();
    let report = lemma1_suite(10_000, SEED)?;
    let secs = start.elapsed().as_secs_f64();
    outcome(report.passed() && secs < 60.0, format!("{}; {secs:.1}s (limit 60s)", describe_failures(&report)))
}

/// Certificates are sound on 1000 streams over all five ensembles.
fn soundness() -> Result<Outcome> {
    let start = Instant::now();
    let families = [
        Family::Gaussian,
        Family::Rademacher,
        Family::StudentT { nu: 5.0 },
        Family::SparseCoordinate,
    ];
    let shapes = [
        (2, 50, PhiMode::Fixed { phi: 1.0 }),
        (10, 200, PhiMode::Theorem2Kp),
        (25, 500, PhiMode::Theorem1 { a: 1.0 }),
        (50, 1000, PhiMode::Fixed { phi: 0.05 }),
    ];
    let (mut streams, mut unsound, mut min_gap) = (0, 0, f64::INFINITY);
    for (fi, family) in families.into_iter().map(Some).chain([None]).enumerate() {
        for (si, &(p, n, phi_mode)) in shapes.iter().enumerate() {
            let family = family.unwrap_or(Family::KashinDiscrete { n_points: 2 * p, delta: 0.5 });
            let ensemble = EnsembleSpec::new(family, p, SEED + si as u64)?;
            let mut cfg = ExperimentConfig::new(ensemble, n, 50, SEED ^ ((fi * 16 + si) as u64));
            cfg.phi_mode = phi_mode;
            let r = run_experiment(&cfg)?;
            streams += r.trials.len();
            unsound += r.aggregates.soundness_failures;
            min_gap = min_gap.min(r.aggregates.min_certificate_gap);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        unsound == 0 && streams == 1000 && secs < 600.0,
        format!("{streams} streams, {unsound} unsound, min gap lambda_min - l_n/n = {min_gap:.3e}; {secs:.1}s"),
    )
}

fn gaussian_config(p: usize, n: usize, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(EnsembleSpec::gaussian(p), n, trials, seed)
}

/// Tail bound from truncated moments, Gaussian p=10, n=10⁴, a=10, t=2.146.
fn theorem1_tail() -> Result<Outcome> {
    let mut cfg = gaussian_config(10, 10_000, 1000, SEED + 3);
    cfg.phi_mode = PhiMode::Theorem1 { a: 10.0 };
    cfg.bounds_to_check = vec![BoundSpec::new(BoundKind::Thm1).with("a", 10.0)];
    cfg.t_grid = vec![2.146];
    let r = run_experiment(&cfg)?;
    let b = &r.bounds[0];
    let limit = 0.1 + binomial_slack(0.1, 1000);
    outcome(
        r.sound() && b.pass && b.empirical_violation_freq <= limit,
        format!(
            "bound {:.4}, nominal {:.4}, violations {}/{} (freq {:.4} <= {:.4}); mean lambda_min {:.4}",
            b.bound_value,
            b.nominal_failure_prob.unwrap_or(f64::NAN),
            b.violations,
            r.trials.len(),
            b.empirical_violation_freq,
            limit,
            r.aggregates.mean_lambda_min
        ),
    )
}

/// Moment-only tail bound with α = 2, L = 3.
fn corollary1() -> Result<Outcome> {
    let mut cfg = gaussian_config(10, 10_000, 200, SEED + 4);
    cfg.phi_mode = PhiMode::Theorem2L2 { l2: 3.0, y: 0.001 };
    cfg.bounds_to_check = vec![BoundSpec::new(BoundKind::Cor1).with("alpha", 2.0).with("L", 3.0)];
    let r = run_experiment(&cfg)?;
    let b = &r.bounds[0];
    let nominal = b.nominal_failure_prob.unwrap_or(f64::NAN);
    let limit = nominal + binomial_slack(nominal, 200);
    outcome(
        r.sound() && b.pass && b.empirical_violation_freq <= limit && (b.bound_value - 0.7035).abs() < 1e-4,
        format!(
            "bound {:.5}, violations {}/200 (freq {:.4} <= {:.3e})",
            b.bound_value, b.violations, b.empirical_violation_freq, limit
        ),
    )
}

/// Mean guarantee `E λ_min ≥ 1 - ε` at the smallest admissible n.
fn corollary2() -> Result<Outcome> {
    let mut cfg = gaussian_config(10, 1920, 200, SEED + 5);
    cfg.phi_mode = PhiMode::Theorem2L2 { l2: 3.0, y: 10.0 / 1920.0 };
    cfg.bounds_to_check = vec![BoundSpec::new(BoundKind::Cor2L2).with("eps", 0.5)];
    let r = run_experiment(&cfg)?;
    let mean = r.aggregates.mean_lambda_min;
    outcome(
        r.sound() && r.bounds_pass() && mean >= 0.5,
        format!("min n = 1920, mean lambda_min {mean:.4} (se {:.1e}) >= 0.5", r.aggregates.std_error_lambda_min),
    )
}

/// Moment inequalities for `Δ` over random commuting pairs.
fn lemma2() -> Result<Outcome> {
    let mut total = VerificationReport::new("lemma2", 100_000);
    for (name, family, exact) in [
        ("gaussian", Family::Gaussian, ExactMoments::Gaussian),
        ("student_t(8)", Family::StudentT { nu: 8.0 }, ExactMoments::StudentT { nu: 8.0 }),
    ] {
        for p in [1, 5, 20] {
            for (a, b) in [(0.2, 4.0 / 3.0), (3.0, 20.0)] {
                let cfg = Lemma2Config {
                    ensemble: EnsembleSpec::new(family, p, 0)?,
                    samples: 100_000,
                    a,
                    b,
                    pairs: 4,
                    seed: SEED + p as u64,
                };
                let reference = Lemma2Reference::from_exact(&exact, a, b);
                total.absorb(&format!("{name} p={p} a={a} b={b:.4}"), lemma2_verify(&cfg, &reference)?);
            }
        }
    }
    let oracle = total
        .checks
        .iter()
        .filter(|c| c.name.contains("gaussian p=1") && c.name.contains("quadrature"))
        .map(|c| format!("{:.1e}", c.observed))
        .collect::<Vec<_>>();
    outcome(
        total.passed() && oracle.len() == 2,
        format!("{}; p=1 quadrature gaps [{}] <= 1e-3", describe_failures(&total), oracle.join(", ")),
    )
}

/// Sub-Gaussian lower tail for three nonnegative martingale generators.
fn lemma3() -> Result<Outcome> {
    let mut total = VerificationReport::new("lemma3", 10_000);
    for spec in default_martingales() {
        total.absorb(spec.label(), lemma3_tail_check(&spec, 10_000, &LEMMA3_T_GRID, SEED + 7)?);
    }
    outcome(total.passed(), describe_failures(&total))
}

fn combined_se(parts: &[(f64, &MomentValue)]) -> f64 {
    parts.iter().map(|(w, v)| (w * v.se()).powi(2)).sum::<f64>().sqrt()
}

/// Moment-comparison inequalities on exact Gaussian values and on Student t
/// estimates.
fn proposition1() -> Result<Outcome> {
    let a_grid = [0.5, 1.0, 2.0, 5.0, 10.0, 50.0];
    let alphas = [0.5, 1.0, 2.0];
    let mut checked = 0;
    let mut failures = Vec::new();

    let ex = ExactMoments::Gaussian;
    for &a in &a_grid {
        let (c, cc) = (ex.c(a).value, ex.big_c(a).value);
        for &alpha in &alphas {
            let (l, m) = (ex.l(alpha).value, ex.m(alpha).value);
            let upper = prop1_c_upper(a, alpha, Some(l), Some(m))?;
            let relations = [
                c >= prop1_c_lower_from_l(a, alpha, l)?,
                c >= prop1_c_lower_from_m(a, alpha, m)?,
                cc <= upper.l_branch.unwrap_or(f64::INFINITY),
                cc <= upper.m_branch.unwrap_or(f64::INFINITY),
            ];
            checked += relations.len();
            for (i, ok) in relations.iter().enumerate() {
                if !ok {
                    failures.push(format!("gaussian a={a} alpha={alpha} relation {i}"));
                }
            }
        }
    }

    let spec = EnsembleSpec::new(Family::StudentT { nu: 5.0 }, 5, 0)?;
    let profile = compute_profile(&spec, &a_grid, &alphas, &McBudget::new(20_000, SEED + 8))?;
    for &a in &a_grid {
        let c = profile.c_at(a).expect("grid value");
        let cc = profile.big_c_at(a).expect("grid value");
        for &alpha in &alphas {
            let l = profile.l_at(alpha).expect("alpha value");
            let m = profile.m_at(alpha).expect("alpha value");
            let scale = a.powf(-0.5 * alpha);
            let factor = a.powf(1.0 - 0.5 * alpha);
            let mut test = |name: &str, gap: f64, se: f64| {
                checked += 1;
                if gap < -3.0 * se {
                    failures.push(format!("student_t a={a} alpha={alpha} {name}: gap {gap:.4} se {se:.4}"));
                }
            };
            if l.value.is_finite() {
                let lower = prop1_c_lower_from_l(a, alpha, l.value)?;
                test("c >= 1 - L/a^(alpha/2)", c.value - lower, combined_se(&[(1.0, c), (scale, l)]));
                let upper = prop1_c_upper(a, alpha, Some(l.value), None)?.l_branch.expect("L branch");
                test("C <= L a^(1-alpha/2)", upper - cc.value, combined_se(&[(1.0, cc), (factor, l)]));
            }
            if m.value.is_finite() {
                let lower = prop1_c_lower_from_m(a, alpha, m.value)?;
                test("c >= 1 - 2M/(alpha a^(alpha/2))", c.value - lower, combined_se(&[(1.0, c), (2.0 / alpha * scale, m)]));
                let upper = prop1_c_upper(a, alpha, None, Some(m.value))?.m_branch.expect("M branch");
                let dm = if alpha < 2.0 {
                    (1.0 + 2.0 / alpha) * factor + 2.0 * factor / (1.0 - 0.5 * alpha)
                } else {
                    (1.0 + 2.0 / alpha) * factor + 2.0 * a.max(1.0).ln()
                };
                test("C <= M-branch", upper - cc.value, combined_se(&[(1.0, cc), (dm, m)]));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{checked} relations hold")
    } else {
        format!("{} of {checked} relations failed: {}", failures.len(), failures.join("; "))
    };
    outcome(failures.is_empty(), detail)
}

/// Fixed-confidence small-ball bound on a discrete Kashin-type system.
fn kashin_corollary3() -> Result<Outcome> {
    let spec = EnsembleSpec::new(Family::KashinDiscrete { n_points: 64, delta: 0.5 }, 32, SEED)?;
    let k_hat = Ensemble::new(spec)?.kashin().expect("kashin system").k_hat();
    let n = (16.0 * 32.0 / (k_hat * k_hat)).ceil() as usize;
    let mut cfg = ExperimentConfig::new(spec, n, 200, SEED + 9);
    cfg.phi_mode = PhiMode::Theorem2Kp;
    cfg.bounds_to_check = vec![BoundSpec::new(BoundKind::Cor3)];
    let r = run_experiment(&cfg)?;
    let b = &r.bounds[0];
    let nominal = b.nominal_failure_prob.unwrap_or(f64::NAN);
    let limit = nominal + binomial_slack(nominal, 200);
    outcome(
        r.sound() && b.pass && b.empirical_violation_freq <= limit,
        format!(
            "K_hat {k_hat:.4}, n {n}, bound K^2/8 = {:.4}, violations {}/200 (freq {:.4} <= {:.4}); mean lambda_min {:.4}",
            b.bound_value, b.violations, b.empirical_violation_freq, limit, r.aggregates.mean_lambda_min
        ),
    )
}

/// JSON reports are byte-identical at parallelism 1 and 8.
fn reproducibility() -> Result<Outcome> {
    let mut cfg = gaussian_config(8, 400, 64, SEED + 10);
    cfg.phi_mode = PhiMode::Theorem2L2 { l2: 3.0, y: 0.02 };
    cfg.bounds_to_check = vec![BoundSpec::new(BoundKind::Thm2L2), BoundSpec::new(BoundKind::Cor1).with("alpha", 2.0)];
    cfg.t_grid = vec![0.5, 1.0, 2.0];
    let dir = tempfile::tempdir()?;
    let mut bytes = Vec::new();
    for threads in [1, 8] {
        cfg.parallelism = Some(threads);
        let r = run_experiment(&cfg)?;
        let path = dir.path().join(format!("report_{threads}.json"));
        emit_report(&r, ReportFormat::Json, &path)?;
        bytes.push((std::fs::read(&path)?, report_to_json(&r)?));
    }
    let same = bytes[0].0 == bytes[1].0 && bytes[0].1 == bytes[1].1;
    outcome(same, format!("{} bytes, identical = {same}", bytes[0].0.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("lemma 1 single-step property suite", lemma1),
        ("certificate soundness across ensembles", soundness),
        ("truncated-moment tail bound", theorem1_tail),
        ("moment-only tail bound (alpha = 2)", corollary1),
        ("mean bound at minimal sample size", corollary2),
        ("lemma 2 moment inequalities", lemma2),
        ("lemma 3 martingale lower tail", lemma3),
        ("proposition 1 moment comparisons", proposition1),
        ("kashin system small-ball bound", kashin_corollary3),
        ("report reproducibility across thread counts", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2}: {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
