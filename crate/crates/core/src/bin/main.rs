use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use spectral_barrier::barrier::certify_stream;
use spectral_barrier::bounds::{parse_params, BoundKind, BoundSpec};
use spectral_barrier::checks::run_suite;
use spectral_barrier::ensembles::{sample, EnsembleSpec};
use spectral_barrier::harness::{
    best_phi, emit_report, report_to_json, run_experiment, sweep, ExperimentConfig, ExperimentReport, ReportFormat,
    SweepAxis,
};
use spectral_barrier::linalg::{min_eigenvalue, read_matrix, write_matrix, MatrixFormat, Vector};
use spectral_barrier::moments::{compute_profile, McBudget};
use spectral_barrier::{Error, Result};

const THREADS_ENV: &str = "SPECTRAL_BARRIER_THREADS";

const EXIT_STATISTICAL: u8 = 2;
const EXIT_SOUNDNESS: u8 = 3;

#[derive(Parser)]
#[command(name = "spectral-barrier", version, about = "Barrier certificates and smallest-eigenvalue bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a lower bound on λ_min of the Gram matrix of a p×n matrix file.
    Certify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        phi: f64,
        /// Re-check invariants at every step and report λ_min.
        #[arg(long)]
        verify: bool,
    },
    /// Moment profile of an ensemble, e.g. `--ensemble student_t:p=10,nu=5`.
    Moments {
        #[arg(long)]
        ensemble: EnsembleSpec,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        a_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate one closed-form bound, e.g. `--kind cor1 --params alpha=2,L=3,y=0.001`.
    Bounds {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "")]
        params: String,
    },
    /// Run a randomized lemma verification suite.
    Check {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw vectors from an ensemble into a p×count matrix file.
    Sample {
        #[arg(long)]
        ensemble: EnsembleSpec,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MatrixFileFormat::Binary)]
        format: MatrixFileFormat,
    },
    /// Run an experiment described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
    },
    /// Run an experiment per value along one axis (y, p, phi or t).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixFileFormat {
    Binary,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn threads_override() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .map(Some)
            .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(t) = threads_override()? {
        cfg.parallelism = Some(t);
    }
    Ok(cfg)
}

fn report_exit(reports: &[ExperimentReport]) -> u8 {
    if reports.iter().any(|r| !r.sound()) {
        EXIT_SOUNDNESS
    } else if reports.iter().any(|r| !r.bounds_pass()) {
        EXIT_STATISTICAL
    } else {
        0
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Certify { input, phi, verify } => {
            let m = read_matrix(&input)?;
            let (p, n) = m.shape();
            let columns = m.column_iter().map(|c| Vector::new(c.iter().copied().collect()));
            let cert = certify_stream(p, phi, columns, verify)?;
            let lambda = min_eigenvalue(cert.state.matrix())?;
            let sound = cert.l_n <= lambda + 1e-9 * lambda.abs().max(1.0);
            let mut out = json!({
                "p": p,
                "n": n,
                "phi": phi,
                "l_n": cert.l_n,
                "l_n_over_n": cert.l_n_over_n,
            });
            if verify {
                out["lambda_min"] = json!(lambda);
            }
            out["sound"] = json!(sound);
            print_json(&out)?;
            Ok(if sound { 0 } else { EXIT_SOUNDNESS })
        }
        Command::Moments {
            ensemble,
            a_grid,
            alpha,
            samples,
            seed,
        } => {
            let profile = compute_profile(&ensemble, &a_grid, &alpha, &McBudget::new(samples, seed))?;
            print_json(&profile)?;
            Ok(0)
        }
        Command::Bounds { kind, params } => {
            let params = parse_params(&params)?;
            let mut kind: BoundKind = kind.parse()?;
            if kind == BoundKind::Cor2L2 && params.contains_key("alpha") {
                kind = BoundKind::Cor2Alpha;
            }
            let result = BoundSpec { kind, params }.evaluate()?;
            print_json(&result)?;
            Ok(0)
        }
        Command::Check { suite, trials, seed } => {
            if let Some(t) = threads_override()? {
                // Only fails if a pool already exists, which cannot happen here.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            let report = run_suite(&suite, trials, seed)?;
            print_json(&report)?;
            Ok(if report.passed() { 0 } else { EXIT_STATISTICAL })
        }
        Command::Sample {
            ensemble,
            count,
            seed,
            out,
            format,
        } => {
            let spec = match seed {
                Some(s) => ensemble.with_seed(s),
                None => ensemble,
            };
            let m = sample(&spec, count)?;
            let format = match format {
                MatrixFileFormat::Binary => MatrixFormat::Binary,
                MatrixFileFormat::Csv => MatrixFormat::Csv,
            };
            write_matrix(&out, &m, format)?;
            Ok(0)
        }
        Command::Simulate { config, out, format } => {
            let cfg = load_config(&config)?;
            let report = run_experiment(&cfg)?;
            match (out, format) {
                (Some(path), OutputFormat::Json) => emit_report(&report, ReportFormat::Json, &path)?,
                (Some(path), OutputFormat::Csv) => emit_report(&report, ReportFormat::Csv, &path)?,
                (None, OutputFormat::Json) => print!("{}", report_to_json(&report)?),
                (None, OutputFormat::Csv) => {
                    let stdout = std::io::stdout();
                    spectral_barrier::harness::write_report_csv(&report, stdout.lock(), stdout.lock())?;
                }
            }
            Ok(report_exit(std::slice::from_ref(&report)))
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = load_config(&config)?;
            let reports = sweep(&cfg, axis, &values)?;
            let mut doc = json!({ "axis": axis, "values": values, "reports": reports });
            if axis == SweepAxis::Phi {
                if let Some((phi, mean)) = best_phi(&reports) {
                    doc["best_phi"] = json!({ "phi": phi, "mean_certified": mean });
                }
            }
            let text = serde_json::to_string_pretty(&doc)? + "\n";
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(report_exit(&reports))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
