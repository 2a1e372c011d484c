use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use gem_cli::commands::{self, Task, TextFormat};
use gem_cli::config::{parse_format, DataSource, RunConfig, KEYS};
use gem_cli::export::Shape;
use gem_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "gem", version, about = "Generalized eigenvector features for multiclass classification")]
struct Cli {
    /// Worker threads (0 = every core). Overrides the `threads` key.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set gamma=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as `--set out=DIR`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Data file.
    #[arg(long)]
    data: PathBuf,
    /// csv (label first), csv-last, libsvm or idx.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Label file for idx data.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model (or an ensemble) and write it with a report.
    Train(ConfigArgs),
    /// Grid search on a validation split; writes the best model and config.
    Search(ConfigArgs),
    /// Write per-example class probabilities.
    Predict {
        /// Model file; repeat for a geometric-mean ensemble.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report error rate and cross-entropy on labeled data.
    Eval {
        /// Model file; repeat for a geometric-mean ensemble.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Also write the metrics as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Dump first-layer detectors as text, and as images for HxW inputs.
    ExportDetectors {
        #[arg(long)]
        model: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Image shape of the input, e.g. 28x28.
        #[arg(long)]
        image: Option<Shape>,
    },
    /// Write a synthetic data set.
    Generate {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Input width (gaussian task).
        #[arg(long, default_value_t = 5)]
        dim: usize,
        /// Number of classes (gaussian task).
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: TextFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// List configuration keys with their defaults.
    Keys,
}

fn set_threads(n: usize) -> CliResult<()> {
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(CliError::compute)?;
    }
    Ok(())
}

fn load_config(args: &ConfigArgs, threads: Option<usize>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    if let Some(out) = &args.out {
        cfg.set("out", out.display().to_string())?;
    }
    if let Some(t) = threads {
        cfg.set("threads", t.to_string())?;
    }
    let s = cfg.resolve()?;
    set_threads(s.threads)?;
    Ok(cfg)
}

/// Writes one file through a temporary name.
fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            CliError::Input(format!("cannot write {}: {e}", path.display()))
        })
}

fn source(d: &DataArgs) -> CliResult<DataSource> {
    Ok(DataSource { path: d.data.clone(), format: parse_format(&d.format, d.labels.clone())? })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = load_config(&args, cli.threads)?;
            let (outputs, report) = commands::train(&cfg)?;
            let out = PathBuf::from(cfg.raw("out"));
            outputs.commit(&out)?;
            print!("{report}");
            println!("outputs written to {}", out.display());
        }
        Command::Search(args) => {
            let cfg = load_config(&args, cli.threads)?;
            let (outputs, report) = commands::search(&cfg)?;
            let out = PathBuf::from(cfg.raw("out"));
            outputs.commit(&out)?;
            print!("{report}");
            println!("outputs written to {}", out.display());
        }
        Command::Predict { models, data, out } => {
            set_threads(cli.threads.unwrap_or(0))?;
            let text = commands::predict(&models, &source(&data)?)?;
            write_file(&out, text.as_bytes())?;
        }
        Command::Eval { models, data, summary } => {
            set_threads(cli.threads.unwrap_or(0))?;
            let (m, json) = commands::eval(&models, &source(&data)?)?;
            if let Some(path) = summary {
                write_file(&path, (serde_json::to_string_pretty(&json).expect("json") + "\n").as_bytes())?;
            }
            print!("{}", commands::eval_text(&m));
        }
        Command::ExportDetectors { model, out, image } => {
            let (outputs, warnings) = commands::export_detectors(&model, image)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            let written = outputs.commit(&out)?;
            println!("{} files written to {}", written.len(), out.display());
        }
        Command::Generate { task, n, seed, dim, classes, format, out } => {
            let bytes = commands::generate(task, n, seed, dim, classes, format)?;
            write_file(&out, &bytes)?;
        }
        Command::Keys => {
            for k in KEYS {
                let default = if k.default.is_empty() { "(empty)" } else { k.default };
                println!("{:<18} {:<10} {}", k.name, default, k.help);
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
