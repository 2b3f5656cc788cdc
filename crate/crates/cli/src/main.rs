use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use referkit::aggregate;
use referkit_cli::config::{MeasureName, MetricName, RunConfig, SchemeName, DEFAULT_BOOTSTRAP, DEFAULT_LEVELS};
use referkit_cli::formats::{load_dataset, load_stack, save_predictions};
use referkit_cli::toy::{generate_synthetic, load_model, predict_toy, train_toy, GenerationSpec};
use referkit_cli::{run, CliError, Result};
use referkit_toybnn::{Method, SplitFractions, SyntheticSpec, TrainConfig};

/// Uncertainty-based referral analysis for classifier predictions.
#[derive(Parser)]
#[command(name = "referkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Referral curve with bootstrap statistics; writes a JSON report and plot data.
    Analyze(AnalyzeArgs),
    /// Average a sample stack into one prediction per example.
    Aggregate {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic dataset plus a validation confusion matrix.
    GenData(GenArgs),
    /// Train a toy network on a dataset file.
    TrainToy(TrainArgs),
    /// Sample predictions from a trained toy network into a stack file.
    PredictToy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Predictive samples per stochastic member.
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// TOML file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    stack: Option<PathBuf>,
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    #[arg(long, value_enum)]
    measure: Option<Measure>,
    #[arg(long)]
    smoothing: Option<f64>,
    /// Comma-separated referral fractions, e.g. 0,0.3,0.5.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Bootstrap resamples.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    plot_output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Pirc5,
    Rdr2,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Measure {
    Entropy,
    MaxProb,
    QwkRisk,
    NllRisk,
    ZeroOneRisk,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Qwk,
    Auc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Blobs,
    Ordinal,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Family,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Class count for blobs (the ordinal family always has five).
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.1,0.2")]
    fractions: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Class count; defaults to one past the largest label.
    #[arg(long)]
    classes: Option<usize>,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Train a deep ensemble; the size defaults to 3 when omitted.
    #[arg(long, num_args = 0..=1, default_missing_value = "3")]
    ensemble: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

fn analyze_config(args: AnalyzeArgs) -> Result<(RunConfig, RunConfig)> {
    let (mut echo, base) = match &args.config {
        Some(path) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (Some(RunConfig::load(path)?), base)
        }
        None => (None, PathBuf::new()),
    };
    let seed = args.seed.or(echo.as_ref().map(|c| c.seed));
    let output = args.output.clone().or(echo.as_ref().map(|c| c.output.clone()));
    let (Some(seed), Some(output)) = (seed, output) else {
        return Err(CliError::InvalidConfig("seed and output are required".into()));
    };
    let c = echo.get_or_insert_with(|| RunConfig {
        predictions: None,
        stack: None,
        confusion: None,
        scheme: None,
        measure: MeasureName::Entropy,
        smoothing: 0.0,
        levels: DEFAULT_LEVELS.to_vec(),
        metric: MetricName::Qwk,
        bootstrap: DEFAULT_BOOTSTRAP,
        seed,
        output: output.clone(),
        plot_output: None,
    });
    // Paths given as flags are taken relative to the working directory, so
    // they are stored already resolved against the config's base.
    let flag_path = |p: PathBuf| if base.as_os_str().is_empty() { p } else { std::path::absolute(&p).unwrap_or(p) };
    if let Some(p) = args.predictions {
        c.predictions = Some(flag_path(p));
        c.stack = None;
    }
    if let Some(p) = args.stack {
        c.stack = Some(flag_path(p));
        c.predictions = None;
    }
    if let Some(p) = args.confusion {
        c.confusion = Some(flag_path(p));
    }
    if let Some(s) = args.scheme {
        c.scheme = Some(match s {
            Scheme::Pirc5 => SchemeName::Pirc5,
            Scheme::Rdr2 => SchemeName::Rdr2,
        });
    }
    if let Some(m) = args.measure {
        c.measure = match m {
            Measure::Entropy => MeasureName::Entropy,
            Measure::MaxProb => MeasureName::MaxProb,
            Measure::QwkRisk => MeasureName::QwkRisk,
            Measure::NllRisk => MeasureName::NllRisk,
            Measure::ZeroOneRisk => MeasureName::ZeroOneRisk,
        };
    }
    if let Some(s) = args.smoothing {
        c.smoothing = s;
    }
    if let Some(l) = args.levels {
        c.levels = l;
    }
    if let Some(m) = args.metric {
        c.metric = match m {
            MetricArg::Qwk => MetricName::Qwk,
            MetricArg::Auc => MetricName::Auc,
        };
    }
    if let Some(b) = args.bootstrap {
        c.bootstrap = b;
    }
    c.seed = seed;
    if let Some(o) = args.output {
        c.output = flag_path(o);
    }
    if let Some(p) = args.plot_output {
        c.plot_output = Some(flag_path(p));
    }
    let echo = echo.expect("filled above");
    let resolved = echo.resolved(&base);
    Ok((resolved, echo))
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str(&text).map_err(|e: toml::de::Error| CliError::InvalidConfig(e.message().to_string()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(m) = args.method {
        c.method = m;
    }
    if let Some(e) = args.epochs {
        c.epochs = e;
    }
    if let Some(h) = &args.hidden {
        c.hidden = h.clone();
    }
    if let Some(k) = args.ensemble {
        c.ensemble_size = k;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    c.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    Ok(c)
}

fn dispatch(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Analyze(args) => {
            let (config, echo) = analyze_config(args)?;
            let report = run(&config, &echo)?;
            Ok(format!("wrote {} ({} levels)", config.output.display(), report.levels.len()))
        }
        Command::Aggregate { stack, output } => {
            let preds = aggregate(&load_stack(&stack)?)?;
            save_predictions(&output, &preds)?;
            Ok(format!("wrote {} ({} examples)", output.display(), preds.n_examples()))
        }
        Command::GenData(a) => {
            let data = match a.kind {
                Family::Blobs => SyntheticSpec::Blobs { n: a.n, n_classes: a.classes, spread: a.spread },
                Family::Ordinal => SyntheticSpec::Ordinal { n: a.n, spread: a.spread },
            };
            let [train, validation, test] = a.fractions[..] else {
                return Err(CliError::InvalidSpec("fractions needs three values".into()));
            };
            let spec = GenerationSpec {
                fractions: SplitFractions { train, validation, test },
                ..GenerationSpec::new(data, a.seed)
            };
            let s = generate_synthetic(&spec, &a.out_dir)?;
            Ok(format!("wrote {} ({}/{}/{})", a.out_dir.display(), s.train, s.validation, s.test))
        }
        Command::TrainToy(a) => {
            let config = train_config(&a)?;
            let data = load_dataset(&a.data, a.classes)?;
            train_toy(&config, &data, &a.output)?;
            Ok(format!("wrote {}", a.output.display()))
        }
        Command::PredictToy { model, data, samples, seed, output } => {
            let bundle = load_model(&model)?;
            let data = load_dataset(&data, Some(bundle.n_classes()))?;
            predict_toy(&bundle, &data, samples, seed, &output)?;
            Ok(format!("wrote {}", output.display()))
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(msg) => {
            eprintln!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
