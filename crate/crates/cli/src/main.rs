use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use spde_infer::harness::io::{read_coefficients, read_samples, write_trajectory};
use spde_infer::harness::metrics::vector_rmse;
use spde_infer::harness::{boxplot_stats, compute_rmse, load_config, run_experiment, simulate, ExperimentConfig};
use spde_infer::models::ModelKind;
use spde_infer::{Error, Result};

#[derive(Parser)]
#[command(name = "spde-infer", version, about = "Coefficient inference for stochastic advection and wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a twin experiment and write its result files.
    Run {
        /// TOML configuration; overrides the preset where both set a key.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Filter/sampler seed; the data seed is left alone.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Integrate one model realisation and write the u trajectory.
    Simulate {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise a chain or λ̂ trajectory against the true coefficients.
    Metrics {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        burn_in: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Advection,
    Wave,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Advection => ModelKind::Advection,
            Model::Wave => ModelKind::Wave,
        }
    }
}

fn run(config: Option<&Path>, out: &Path, seed: Option<u64>, preset: Option<&str>) -> Result<()> {
    if config.is_none() && preset.is_none() {
        return Err(Error::Config(vec!["either --config or --preset is required".into()]));
    }
    let mut cfg = load_config(preset, config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let bundle = run_experiment(&cfg)?;
    bundle.write(out)?;
    let s = &bundle.summary;
    println!(
        "{:?} on {:?}: error {:.4} -> {:.4} ({} samples), results in {}",
        s.method,
        s.model,
        s.initial_error,
        s.final_error,
        s.n_samples,
        out.display()
    );
    Ok(())
}

fn simulate_cmd(model: Model, config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig {
        model: model.into(),
        ..ExperimentConfig::from_path(config)?
    };
    cfg.validate()?;
    let states = simulate(cfg.model, &cfg.model_config()?, cfg.n_steps, cfg.data_seed)?;
    let u: Vec<Vec<f64>> = states.iter().map(|s| s.u().to_vec()).collect();
    write_trajectory(out, &u)
}

fn metrics(chain: &Path, truth: &Path, burn_in: usize) -> Result<()> {
    let table = read_samples(chain)?;
    let truth = read_coefficients(truth)?.into_vec();
    let kept: Vec<usize> = (0..table.index.len()).filter(|&i| table.index[i] >= burn_in).collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "burn-in {burn_in} leaves no samples out of {}",
            table.index.len()
        )));
    }
    let samples: Vec<&[f64]> = kept.iter().map(|&i| table.samples[i].as_slice()).collect();
    let rmse = compute_rmse(samples.iter().copied(), &truth)?;
    let p = truth.len();
    let mean: Vec<f64> = (0..p)
        .map(|c| samples.iter().map(|s| s[c]).sum::<f64>() / samples.len() as f64)
        .collect();
    let boxplot = if samples.len() >= 5 {
        (0..p)
            .map(|c| boxplot_stats(&samples.iter().map(|s| s[c]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let acceptance = table
        .accepted
        .as_ref()
        .map(|a| kept.iter().filter(|&&i| a[i]).count() as f64 / kept.len() as f64);
    let report = json!({
        "n_samples": samples.len(),
        "mean": mean,
        "error": vector_rmse(&mean, &truth),
        "rmse": rmse,
        "acceptance_rate": acceptance,
        "boxplot": boxplot,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::TomlDe(_) => 2,
        Error::Blowup { .. } | Error::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Run {
            config,
            out,
            seed,
            preset,
        } => run(config.as_deref(), out, *seed, preset.as_deref()),
        Command::Simulate { model, config, out } => simulate_cmd(*model, config, out),
        Command::Metrics { chain, truth, burn_in } => metrics(chain, truth, *burn_in),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
