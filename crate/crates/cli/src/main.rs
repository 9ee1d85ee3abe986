use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mixsdr::asymp::RankTest;
use mixsdr::estim::ReductionKind;
use mixsdr::sparse::PenaltyKind;
use mixsdr_cli::config::DimsSetting;
use mixsdr_cli::{run, CliError, Command, DataSchema, RunConfig};

#[derive(Parser)]
#[command(
    name = "mixsdr",
    version,
    about = "Sufficient dimension reduction for mixed continuous and binary predictors"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Fit the inverse-regression model and write its parameters.
    Fit(Opts),
    /// Estimate the reduction and write the basis and reduced data.
    Reduce(Opts),
    /// Sequential rank tests for the dimension.
    Testdim(Opts),
    /// Penalized reduction with cross-validated variable selection.
    Select(Opts),
    /// Downstream prediction on the reduced predictors.
    Predict(Opts),
    /// Run the simulation experiments.
    Simulate(Opts),
}

#[derive(Args, Clone)]
struct Opts {
    /// Run configuration (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Column schema (TOML).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// optimal, suboptimal, pfc or binary-only.
    #[arg(long)]
    kind: Option<String>,
    /// Dimension, or "d1,d2" for the sub-optimal kind.
    #[arg(long = "d")]
    dims: Option<String>,
    /// Pick the dimension by sequential testing.
    #[arg(long, conflicts_with = "dims")]
    auto: bool,
    /// wchisq or wald.
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// continuous-rows, binary-overlapping or mixed.
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Saved reduction (reduction.json) for predict.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Leave-one-out evaluation refitting only the downstream model.
    #[arg(long)]
    loo: bool,
    /// Leave-one-out evaluation refitting the reduction as well.
    #[arg(long)]
    strict_loo: bool,
}

fn parsed<T: std::str::FromStr<Err = mixsdr::Error>>(v: &str) -> Result<T, CliError> {
    v.parse().map_err(CliError::from)
}

fn resolve(opts: Opts) -> Result<RunConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = opts.data {
        cfg.data = Some(v);
    }
    if let Some(v) = opts.schema {
        cfg.schema = Some(DataSchema::from_toml_file(&v)?);
        cfg.schema_file = Some(v);
    }
    if let Some(v) = opts.kind {
        cfg.kind = parsed::<ReductionKind>(&v)?;
    }
    if let Some(v) = opts.dims {
        cfg.d = Some(DimsSetting::parse(&v)?);
        cfg.auto = false;
    }
    if opts.auto {
        cfg.auto = true;
        cfg.d = None;
    }
    if let Some(v) = opts.test {
        cfg.test = parsed::<RankTest>(&v)?;
    }
    if let Some(v) = opts.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = opts.penalty {
        cfg.penalty = Some(parsed::<PenaltyKind>(&v)?);
    }
    if let Some(v) = opts.folds {
        cfg.folds = v;
    }
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }
    if let Some(v) = opts.out {
        cfg.out = v;
    }
    if let Some(v) = opts.model {
        cfg.model = Some(v);
    }
    cfg.loo |= opts.loo;
    cfg.strict_loo |= opts.strict_loo;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Sub::Fit(o) => (Command::Fit, o),
        Sub::Reduce(o) => (Command::Reduce, o),
        Sub::Testdim(o) => (Command::Testdim, o),
        Sub::Select(o) => (Command::Select, o),
        Sub::Predict(o) => (Command::Predict, o),
        Sub::Simulate(o) => (Command::Simulate, o),
    };
    let result = resolve(opts).and_then(|cfg| run(command, &cfg));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("  wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
