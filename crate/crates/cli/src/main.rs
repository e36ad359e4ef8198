use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use otfilter::ensemble::Ensemble;
use otfilter::filters::FilterVariant;
use otfilter::harness::{
    monte_carlo, write_ensemble_csv, write_json, write_outputs, ExperimentConfig, OutputFormat,
};
use otfilter::sampling::{
    annulus_coverage, annulus_proposal, bimodal_target, disk_proposal, hull_membership, interval_proposal,
    ot_sample, target_weights, uniform_annulus_target, weighted_mean, BimodalParams,
};
use otfilter::transport::CostMetric;
use otfilter::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

const ANNULUS_R_IN: f64 = 0.5;
const ANNULUS_R_OUT: f64 = 1.0;
const INTERVAL: (f64, f64) = (-6.0, 6.0);

#[derive(Parser)]
#[command(name = "otfilter", version, about = "Optimal-transport ensemble filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pendulum Monte-Carlo study and write per-run series plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["otf", "otproj", "otnleq", "otma", "otnleqma", "all"])]
        variant: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_parser = ["csv", "json"], default_value = "csv")]
        format: String,
    },
    /// Draw samples from a demonstration target by transport resampling.
    Sample {
        #[arg(long, value_parser = ["bimodal", "annulus"])]
        target: String,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Annulus proposal: draws on the annulus itself or on the enclosing disk.
        #[arg(long, value_parser = ["annulus", "disk"], default_value = "annulus")]
        proposal: String,
        #[arg(long, value_parser = ["euclidean", "squared_euclidean"], default_value = "euclidean")]
        metric: String,
    },
    /// Check a config file and exit.
    ValidateConfig { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, variant, runs, seed, out, format } => {
            run(&config, variant.as_deref(), runs, seed, &out, &format)
        }
        Command::Sample { target, n, seed, out, proposal, metric } => {
            sample(&target, n, seed, &out, &proposal, &metric)
        }
        Command::ValidateConfig { path } => {
            ExperimentConfig::load(&path).map(|_| println!("{}: ok", path.display()))
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}

fn run(
    path: &Path,
    variant: Option<&str>,
    runs: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    format: &str,
) -> otfilter::Result<()> {
    let mut config = ExperimentConfig::load(path)?;
    match variant {
        None | Some("all") => {}
        Some(v) => config.variants = vec![v.parse::<FilterVariant>()?],
    }
    if let Some(r) = runs {
        config.runs = r;
    }
    if let Some(s) = seed {
        config.base_seed = s;
    }
    config.validate()?;
    let format: OutputFormat = format.parse()?;

    let result = monte_carlo(&config)?;
    let files = write_outputs(&result, out, format)?;
    for a in &result.aggregate {
        let avg = a.avg_rms_constraint_error.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
        println!(
            "{:<9} avg_rms_constraint_error={avg} runs_used={} runs_failed={}",
            a.variant.display_name(),
            a.runs_used,
            a.runs_failed
        );
    }
    for r in result.runs.iter().filter(|r| r.failed()) {
        eprintln!("warning: run {} {} failed: {}", r.run, r.variant, r.failure.as_deref().unwrap_or(""));
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct SampleReport {
    target: String,
    proposal: String,
    n: usize,
    seed: u64,
    metric: CostMetric,
    hull_membership: f64,
    annulus_coverage: Option<f64>,
    importance_mean: Vec<f64>,
    sample_mean: Vec<f64>,
}

fn sample(
    target: &str,
    n: usize,
    seed: u64,
    out: &Path,
    proposal_mode: &str,
    metric: &str,
) -> otfilter::Result<()> {
    let metric: CostMetric = metric.parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (proposal, density, columns, proposal_name): (Ensemble, _, &[&str], String) = match target {
        "bimodal" => {
            let p = BimodalParams::default();
            (
                interval_proposal(n, INTERVAL.0, INTERVAL.1, &mut rng)?,
                bimodal_target(p.m1, p.s1, p.m2, p.s2, p.p)?,
                &["x"],
                format!("uniform[{}, {}]", INTERVAL.0, INTERVAL.1),
            )
        }
        "annulus" => {
            let proposal = match proposal_mode {
                "disk" => disk_proposal(n, ANNULUS_R_OUT, &mut rng)?,
                _ => annulus_proposal(n, ANNULUS_R_IN, ANNULUS_R_OUT, &mut rng)?,
            };
            (
                proposal,
                uniform_annulus_target(ANNULUS_R_IN, ANNULUS_R_OUT)?,
                &["x", "y"],
                proposal_mode.to_string(),
            )
        }
        other => return Err(Error::InvalidParameter(format!("unknown target {other:?}"))),
    };
    let weights = target_weights(&proposal, &density)?;
    let samples = ot_sample(&proposal, &density, metric)?;

    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.to_path_buf(), source })?;
    write_ensemble_csv(&out.join("proposal.csv"), &proposal, columns)?;
    write_ensemble_csv(&out.join("samples.csv"), &samples, columns)?;
    let report = SampleReport {
        target: target.to_string(),
        proposal: proposal_name,
        n,
        seed,
        metric,
        hull_membership: hull_membership(&proposal, &samples, 1e-9)?,
        annulus_coverage: (target == "annulus")
            .then(|| annulus_coverage(&samples, ANNULUS_R_IN, ANNULUS_R_OUT)),
        importance_mean: weighted_mean(&proposal, &weights).iter().copied().collect(),
        sample_mean: samples.mean().iter().copied().collect(),
    };
    write_json(&out.join("diagnostics.json"), &report)?;
    println!(
        "{target}: n={n} hull_membership={:.4}{}",
        report.hull_membership,
        report.annulus_coverage.map_or(String::new(), |c| format!(" annulus_coverage={c:.4}"))
    );
    Ok(())
}
