mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bdarma::model::MaskKind;
use bdarma::simplex::ZeroPolicy;
use bdarma::study::Engine;
use bdarma::Error;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bdarma", version, about = "Dirichlet ARMA models for compositional time series")]
struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Bayes,
    MleDarma,
    Tvarma,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Bayes => Engine::Bayes,
            EngineArg::MleDarma => Engine::MleDarma,
            EngineArg::Tvarma => Engine::Tvarma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    Full,
    #[value(name = "nearest_neighbor", alias = "nearest-neighbor")]
    NearestNeighbor,
    Diagonal,
}

impl From<MaskArg> for MaskKind {
    fn from(m: MaskArg) -> Self {
        match m {
            MaskArg::Full => MaskKind::Full,
            MaskArg::NearestNeighbor => MaskKind::NearestNeighbor,
            MaskArg::Diagonal => MaskKind::Diagonal,
        }
    }
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum ZeroArg {
    #[default]
    Reject,
    Epsilon,
}

impl From<ZeroArg> for ZeroPolicy {
    fn from(z: ZeroArg) -> Self {
        match z {
            ZeroArg::Reject => ZeroPolicy::Reject,
            ZeroArg::Epsilon => ZeroPolicy::Epsilon,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from a configured generating model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a series CSV.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
        /// Sparsity mask for every A and B matrix.
        #[arg(long, value_enum)]
        mask: Option<MaskArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "reject")]
        zero_policy: ZeroArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast from a fit directory, optionally scoring against actuals.
    Forecast {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        actuals: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "reject")]
        zero_policy: ZeroArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank candidate models by leave-future-out ELPD.
    Select {
        #[arg(long)]
        data: PathBuf,
        /// Sampler and LFO settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Candidate model configuration; repeat for each candidate.
        #[arg(long = "candidate", required = true)]
        candidates: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "reject")]
        zero_policy: ZeroArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// FRMSE and FMAE of a forecast CSV against actuals.
    Evaluate {
        #[arg(long)]
        actuals: PathBuf,
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long, value_enum, default_value = "reject")]
        zero_policy: ZeroArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replicated simulation study or the synthetic benchmark.
    ReplicateStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// 2 usage or configuration, 3 data, 4 numerical failure, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Usage(_) | Error::Config(_) => 2,
                Error::Data { .. } | Error::Domain { .. } | Error::InvalidComposition(_) | Error::Csv(_) => 3,
                Error::NonFinite { .. } | Error::Explosive { .. } | Error::Numerical(_) => 4,
                Error::Io(_) | Error::Json(_) => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate { config, seed, out } => commands::simulate(&config, seed, &out),
        Command::Fit { data, config, engine, mask, seed, zero_policy, out } => commands::fit(commands::FitArgs {
            data: &data,
            config: config.as_deref(),
            engine: engine.map(Into::into),
            mask: mask.map(Into::into),
            seed,
            zero_policy: zero_policy.into(),
            out: &out,
        }),
        Command::Forecast { fit, horizon, actuals, seed, zero_policy, out } => commands::forecast_cmd(commands::ForecastArgs {
            fit: &fit,
            horizon,
            actuals: actuals.as_deref(),
            seed,
            zero_policy: zero_policy.into(),
            out: &out,
        }),
        Command::Select { data, config, candidates, seed, zero_policy, out } => commands::select(commands::SelectArgs {
            data: &data,
            config: config.as_deref(),
            candidates: &candidates,
            seed,
            zero_policy: zero_policy.into(),
            out: &out,
        }),
        Command::Evaluate { actuals, forecast, zero_policy, out } => commands::evaluate(&actuals, &forecast, zero_policy.into(), &out),
        Command::ReplicateStudy { config, seed, out } => commands::replicate_study(&config, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
