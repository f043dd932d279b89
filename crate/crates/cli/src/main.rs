use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use smcvar::experiment::{
    identity_suite, read_reference, reference_curve, run_experiment, summarize, write_reference, write_rows,
    EstimatorKey, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "smcvar", version, about = "Online asymptotic-variance estimators for particle filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variance estimates of the predictive mean along filter runs.
    FilterVar(RunArgs),
    /// Variance estimate of the marginal smoothing mean at time ELL.
    SmoothingVar {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ell: usize,
    },
    /// Brute-force replication reference curve.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Reference for the smoothing mean at this time instead of the predictor.
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long)]
        oracle_particles: Option<usize>,
        #[arg(long)]
        oracle_replicates: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Checks the exhaustive mask identities on random discrete models.
    IdentitySuite {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file and flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(short = 'N', long)]
    particles: Option<usize>,
    #[arg(short = 'T', long)]
    horizon: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Observation file (one value per line, or CSV with a `y` column).
    #[arg(long)]
    observations: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated estimator keys: cle, lag:L, bs, bs_tbt, paris:M, gt_tbt, smoothing:L.
    #[arg(long)]
    estimators: Option<String>,
    /// Adds `lag:L`.
    #[arg(long)]
    lag: Option<usize>,
    /// Adds `paris:M`.
    #[arg(short = 'M', long)]
    draws: Option<usize>,
    /// Fill the wall-clock column (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Reference CSV from `oracle`, enabling the error metric in the summary.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// CSV output; standard output when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// JSON summary with per-step medians and quartiles.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn build_config(common: &CommonArgs, extra: Vec<(String, String)>) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_text(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    push("particles", common.particles.map(|v| v.to_string()));
    push("horizon", common.horizon.map(|v| v.to_string()));
    push("replicates", common.replicates.map(|v| v.to_string()));
    push("seed", common.seed.map(|v| v.to_string()));
    push("phi", common.phi.map(|v| v.to_string()));
    push("beta", common.beta.map(|v| v.to_string()));
    push("sigma", common.sigma.map(|v| v.to_string()));
    push("observations", common.observations.as_ref().map(|p| p.display().to_string()));
    pairs.extend(extra);
    for kv in &common.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("override `{kv}` is not of the form key=value");
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    config.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    config.validate()?;
    Ok(config)
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: RunArgs, ell: Option<usize>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(e) = &args.estimators {
        extra.push(("estimators".to_string(), e.clone()));
    }
    if args.timing {
        extra.push(("timing".to_string(), "true".to_string()));
    }
    if let Some(r) = &args.reference {
        extra.push(("reference".to_string(), r.display().to_string()));
    }
    let mut config = build_config(&args.common, extra)?;
    let added = [
        args.lag.map(EstimatorKey::Lag),
        args.draws.map(EstimatorKey::Paris),
        ell.map(EstimatorKey::Smoothing),
    ];
    if ell.is_some() && args.estimators.is_none() {
        config.estimators.clear();
    }
    for key in added.into_iter().flatten() {
        if !config.estimators.contains(&key) {
            config.estimators.push(key);
        }
    }
    config.validate()?;
    let rows = run_experiment(&config)?;
    write_rows(output(args.out.as_ref())?, &config, &rows)?;
    if let Some(path) = &args.summary {
        let reference = config.reference.as_deref().map(read_reference).transpose()?;
        let summary = summarize(&config, &rows, reference.as_deref())?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &summary)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::FilterVar(args) => run(args, None),
        Command::SmoothingVar { run: args, ell } => run(args, Some(ell)),
        Command::Oracle {
            common,
            ell,
            oracle_particles,
            oracle_replicates,
            out,
        } => {
            let mut extra = Vec::new();
            if let Some(n) = oracle_particles {
                extra.push(("oracle_particles".to_string(), n.to_string()));
            }
            if let Some(r) = oracle_replicates {
                extra.push(("oracle_replicates".to_string(), r.to_string()));
            }
            let config = build_config(&common, extra)?;
            let curve = reference_curve(&config, ell)?;
            write_reference(output(out.as_ref())?, &config, &curve)?;
            Ok(())
        }
        Command::IdentitySuite { runs, seed } => {
            let report = identity_suite(runs, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.max_identity_deviation > 1e-9 || report.max_mask_sum_deviation > 1e-10 {
                bail!("identity suite exceeded tolerance");
            }
            Ok(())
        }
    }
}
