//! `polysign` command line front end.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polysign::discretization::assemble_operator;
use polysign::domain::build_domain;
use polysign::experiments::run_estimate_experiment;
use polysign::green::DENSE_CAP;
use polysign::pipeline::{GreenStorage, Pipeline};
use polysign::report::{experiment_csv, float, grid_csv, kernel_estimate_csv, trials_csv};
use polysign::verify::{run_checks, run_full, summary_csv, Suite, VerifyOptions};
use polysign::{Error, Result};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "polysign", version, about = "Signed decompositions for the polyharmonic Dirichlet problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid resolution, overrides the config.
    #[arg(long, global = true)]
    cells: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Solve (-Δ)^m u = f and write u.
    Solve,
    /// Estimate the kernel sandwich constants on the dense Green matrix.
    Constants,
    /// Split the solution into its signed parts.
    Decompose,
    /// Run the acceptance checks.
    Verify,
    /// Run an estimate experiment over seeded random sources.
    Experiment,
}

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CAPACITY: u8 = 4;
const EXIT_DECOMPOSITION: u8 = 5;

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Validation(_) | Error::Configuration(_) | Error::Capability(_) | Error::Io(_) => EXIT_CONFIG,
            Error::CapacityExceeded { .. } => EXIT_CAPACITY,
            Error::Decomposition { .. } => EXIT_DECOMPOSITION,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("polysign: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    configure_threads()?;
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if matches!(cli.command, Command::Verify) => RunConfig::empty(),
        None => return Err(Error::Configuration("--config is required".into()).into()),
    };
    config.apply_overrides(cli.seed, cli.cells, cli.out.clone())?;
    let out = prepare_out_dir(&config.out_dir())?;
    match cli.command {
        Command::Solve => solve(&config, &out),
        Command::Constants => constants(&config, &out),
        Command::Decompose => decompose(&config, &out),
        Command::Verify => verify(&config, &out),
        Command::Experiment => experiment(&config, &out),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("POLYSIGN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Configuration(format!("POLYSIGN_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Configuration(format!("thread pool: {e}")))
}

fn prepare_out_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .and_then(|_| tempfile::NamedTempFile::new_in(dir).map(drop))
        .map_err(|e| Error::Configuration(format!("output directory {} is not writable: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

/// Writes through a temporary file in the same directory and renames it into place.
fn write_atomic(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| e.error)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn solve(config: &RunConfig, out: &Path) -> std::result::Result<(), Failure> {
    let domain = build_domain(&config.domain_spec()?)?;
    let m = config.order()?;
    let f = config.source(&domain)?;
    let op = assemble_operator(&domain, m)?;
    let (values, residual) = op.solve_values(f.values())?;
    let u = polysign::domain::GridFunction::new(domain.clone(), values)?;
    write_atomic(out, "u.csv", &grid_csv("grid", &[("value", &u)])?)?;
    println!("points {}", domain.len());
    println!("residual {}", float(residual));
    Ok(())
}

fn constants(config: &RunConfig, out: &Path) -> std::result::Result<(), Failure> {
    let spec = config.domain_spec()?;
    let m = config.order()?;
    let domain = build_domain(&spec)?;
    if domain.len() > DENSE_CAP {
        return Err(Error::CapacityExceeded {
            n: domain.len(),
            cap: DENSE_CAP,
        }
        .into());
    }
    let pipeline = Pipeline::build(&spec, m, &config.pipeline_options(GreenStorage::Dense, domain.h()))?;
    let est = &pipeline.estimate;
    let text = kernel_estimate_csv(&spec.label(), domain.dimension(), spec.cells, est)?;
    write_atomic(out, "constants.csv", &text)?;
    println!("c2_star {}", float(est.c2_star));
    println!("c2_used {}", float(est.c2_used));
    println!("c1_hat {}", float(est.c1_hat));
    println!("c3_hat {}", float(est.c3_hat));
    Ok(())
}

fn decompose(config: &RunConfig, out: &Path) -> std::result::Result<(), Failure> {
    let spec = config.domain_spec()?;
    let m = config.order()?;
    let domain = build_domain(&spec)?;
    let pipeline = Pipeline::build(&spec, m, &config.pipeline_options(config.storage, domain.h()))?;
    let f = config.source(&pipeline.domain)?;
    let c2_used = config.c2_used.unwrap_or(pipeline.estimate.c2_used);
    let solution = pipeline.decompose_with_c2(&f, c2_used)?;
    let text = grid_csv(
        "solution",
        &[
            ("f", &f),
            ("u", &solution.u),
            ("u_oplus", &solution.u_oplus),
            ("u_ominus", &solution.u_ominus),
        ],
    )?;
    write_atomic(out, "decomposition.csv", &text)?;
    let report = solution.report();
    println!("c2_used {}", float(c2_used));
    println!("scale {}", float(report.scale));
    println!("min_u_oplus {}", float(report.min_oplus));
    println!("min_u_ominus {}", float(report.min_ominus));
    println!("residual {}", float(report.residual));
    println!("chain_slack {}", float(report.chain_slack));
    solution.check()?;
    Ok(())
}

fn verify(config: &RunConfig, out: &Path) -> std::result::Result<(), Failure> {
    let options = VerifyOptions {
        seed: config.seed.unwrap_or(VerifyOptions::default().seed),
        corrupt_c2_used: config.verify.corrupt_c2_used,
    };
    let progress = |r: &polysign::verify::CheckResult| println!("{}", r.line());
    let results = match &config.verify.checks {
        Some(ids) => {
            let suite = Suite::new(options);
            ids.iter()
                .map(|&id| {
                    let r = suite.check(id);
                    progress(&r);
                    r
                })
                .collect()
        }
        None if config.verify.repeat => run_full(options, progress).results,
        None => run_checks(options, progress).results,
    };
    write_atomic(out, "verify_summary.csv", &summary_csv(&results))?;
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY_FAILED,
            message: format!("{} of {} checks failed: {}", failed.len(), results.len(), failed.join(", ")),
        })
    }
}

fn experiment(config: &RunConfig, out: &Path) -> std::result::Result<(), Failure> {
    let experiment = config.experiment_config()?;
    let h = build_domain(&experiment.domain)?.h();
    let report = run_estimate_experiment(&experiment, &config.pipeline_options(config.storage, h))?;
    write_atomic(out, "experiment.csv", &experiment_csv(&report)?)?;
    write_atomic(out, "trials.csv", &trials_csv(&report)?)?;
    println!("empirical_constant {}", float(report.empirical_constant));
    if let Some(ratio) = report.refinement_ratio {
        println!("refinement_ratio {}", float(ratio));
    }
    Ok(())
}
