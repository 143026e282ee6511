//! Command-line front end for the CDBN-AE localization pipeline.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 I/O error
//! (including unreadable or corrupted bundles), 4 numerical failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdbn_dfl::dataset::{synth_scenario, write_dataset, DatasetFormat, DflDataset, SynthConfig};
use cdbn_dfl::experiment::{
    load_data, prepare, run_eval, run_train, sweep_dims, sweep_layers, sweep_snr, CurveRow, DataSource, DimRow,
    ExperimentConfig, ExperimentError, LayerRow, ModelBundle, SnrRow, ToCsv,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cdbn-dfl", version, about = "Device-free localization with a CDBN autoencoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic ΔRSS dataset file.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Dataset file format; inferred from the output extension when absent.
        #[arg(long)]
        data_format: Option<DatasetFormat>,
    },
    /// Train the configured pipeline and persist a model bundle.
    Train {
        #[command(flatten)]
        common: Common,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Where to write the training report (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a bundle on a dataset file, or on the held-out split of the
    /// bundle's own configuration when no dataset is given.
    Eval {
        /// Model bundle written by `train`.
        bundle: PathBuf,
        /// Dataset file to evaluate on.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Dataset file format; inferred from the extension when absent.
        #[arg(long)]
        data_format: Option<DatasetFormat>,
        /// Where to write the report (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Test accuracy per CDBN depth.
    SweepLayers {
        #[command(flatten)]
        common: Common,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Comma-separated depths; defaults to `sweep.layer_counts`.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<usize>,
    },
    /// Test accuracy per bottleneck width, with both baselines.
    SweepDims {
        #[command(flatten)]
        common: Common,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Comma-separated widths; defaults to `sweep.dims`.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        /// CSV destination for per-epoch training accuracy (csv format only).
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Test accuracy under additive noise per SNR and bottleneck width.
    SweepSnr {
        #[command(flatten)]
        common: Common,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Comma-separated SNRs in dB; defaults to `sweep.snr_db`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Vec<f64>,
        /// Comma-separated widths; defaults to `sweep.snr_dims`.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
    },
    /// Summarize a model bundle.
    Inspect {
        /// Model bundle written by `train`.
        bundle: PathBuf,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Print the default configuration as JSON.
    Config,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration (default: the built-in synthetic setup).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file: the dataset for `synth`, the bundle for `train`, the
    /// table for sweeps (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
enum CliError {
    Experiment(ExperimentError),
    Io(PathBuf, io::Error),
    Usage(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Experiment(e) if e.is_numerical() => 4,
            CliError::Experiment(e) if e.is_io() => 3,
            CliError::Experiment(_) | CliError::Usage(_) => 2,
            CliError::Io(..) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Experiment(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "cannot write {}: {e}", path.display()),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

type Res<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(common: &Common) -> Res<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Res<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e)),
    }
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report is serializable");
    s.push('\n');
    s
}

fn run(command: Command) -> Res<()> {
    match command {
        Command::Synth { common, data_format } => synth(&common, data_format),
        Command::Train { common, format, report } => train(&common, format, report.as_deref()),
        Command::Eval {
            bundle,
            data,
            data_format,
            out,
            format,
        } => eval(&bundle, data.as_deref(), data_format, out.as_deref(), format),
        Command::SweepLayers { common, format, layers } => {
            let cfg = load_config(&common)?;
            let layers = if layers.is_empty() { cfg.sweep.layer_counts.clone() } else { layers };
            let rows = sweep_layers(&cfg, &layers)?;
            let text = match format {
                Format::Csv => LayerRow::to_csv(&rows),
                Format::Json => pretty(&rows),
            };
            emit(common.out.as_deref(), &text)
        }
        Command::SweepDims {
            common,
            format,
            dims,
            curves,
        } => {
            let cfg = load_config(&common)?;
            let dims = if dims.is_empty() { cfg.sweep.dims.clone() } else { dims };
            if curves.is_some() && format == Format::Json {
                return Err(CliError::Usage("--curves is only used with --format csv".into()));
            }
            let sweep = sweep_dims(&cfg, &dims)?;
            match format {
                Format::Csv => {
                    if let Some(path) = &curves {
                        emit(Some(path), &CurveRow::to_csv(&sweep.curves))?;
                    }
                    emit(common.out.as_deref(), &DimRow::to_csv(&sweep.tests))
                }
                Format::Json => emit(common.out.as_deref(), &pretty(&sweep)),
            }
        }
        Command::SweepSnr {
            common,
            format,
            snr,
            dims,
        } => {
            let cfg = load_config(&common)?;
            let snr = if snr.is_empty() { cfg.sweep.snr_db.clone() } else { snr };
            let dims = if dims.is_empty() { cfg.sweep.snr_dims.clone() } else { dims };
            let rows = sweep_snr(&cfg, &snr, &dims)?;
            let text = match format {
                Format::Csv => SnrRow::to_csv(&rows),
                Format::Json => pretty(&rows),
            };
            emit(common.out.as_deref(), &text)
        }
        Command::Inspect { bundle, format } => inspect(&bundle, format),
        Command::Config => emit(None, &format!("{}\n", ExperimentConfig::default().to_json())),
    }
}

fn synth(common: &Common, data_format: Option<DatasetFormat>) -> Res<()> {
    let cfg = load_config(common)?;
    let synth_cfg: SynthConfig = match &cfg.data {
        DataSource::Synthetic(s) => s.clone(),
        DataSource::File { .. } => return Err(CliError::Usage("synth needs a synthetic data source".into())),
    };
    let out = common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("synth needs --out".into()))?;
    let ds = synth_scenario(&synth_cfg).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let format = data_format.unwrap_or_else(|| DatasetFormat::from_path(out));
    write_dataset(&ds, out, format).map_err(|e| CliError::Experiment(e.into()))?;
    eprintln!("wrote {} samples ({} APs, {} cells) to {}", ds.len(), ds.n_aps, ds.n_cells, out.display());
    Ok(())
}

fn train(common: &Common, format: Format, report: Option<&Path>) -> Res<()> {
    let cfg = load_config(common)?;
    let out = common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("train needs --out for the bundle".into()))?;
    let run = run_train(&cfg)?;
    run.bundle.save(out).map_err(|e| CliError::Experiment(e.into()))?;
    let eval = run_eval(&run.bundle, &run.prepared.test)?;
    let train_acc = run.trace.softmax.train_accuracy.last().copied().unwrap_or(0.0);
    let text = match format {
        Format::Csv => {
            let mut s = String::from("key,value\n");
            s.push_str(&format!("method,{}\n", cfg.method));
            s.push_str(&format!("train_accuracy,{train_acc}\n"));
            s.push_str(&format!("test_accuracy,{}\n", eval.accuracy));
            s.push_str(&format!("test_samples,{}\n", eval.n_samples));
            for t in &run.trace.stage_seconds {
                s.push_str(&format!("seconds_{},{}\n", t.stage, t.seconds));
            }
            s
        }
        Format::Json => pretty(&json!({
            "method": cfg.method,
            "bundle": out,
            "fingerprint": run.bundle.fingerprint_hex(),
            "train_accuracy": train_acc,
            "test_accuracy": eval.accuracy,
            "test_samples": eval.n_samples,
            "cdbn_reconstruction_error": run.trace.cdbn.iter().map(|r| &r.reconstruction_error).collect::<Vec<_>>(),
            "autoencoder_mse": run.trace.autoencoder_mse,
            "softmax_loss": run.trace.softmax.loss,
            "stage_seconds": run.trace.stage_seconds,
        })),
    };
    emit(report, &text)
}

fn load_bundle(path: &Path) -> Res<ModelBundle> {
    ModelBundle::load(path).map_err(|e| CliError::Experiment(e.into()))
}

fn eval(
    bundle_path: &Path,
    data: Option<&Path>,
    data_format: Option<DatasetFormat>,
    out: Option<&Path>,
    format: Format,
) -> Res<()> {
    let bundle = load_bundle(bundle_path)?;
    let ds: DflDataset = match data {
        Some(path) => {
            let format = data_format.unwrap_or_else(|| DatasetFormat::from_path(path));
            cdbn_dfl::dataset::load_dataset(path, format).map_err(|e| CliError::Experiment(e.into()))?
        }
        None => {
            let cfg = ExperimentConfig::from_json(&bundle.config_json)?;
            let full = load_data(&cfg)?;
            prepare(&cfg, &full)?.test
        }
    };
    let report = run_eval(&bundle, &ds)?;
    let text = match format {
        Format::Csv => report.to_csv(),
        Format::Json => pretty(&report),
    };
    emit(out, &text)
}

fn inspect(path: &Path, format: Format) -> Res<()> {
    let b = load_bundle(path)?;
    let layers: Vec<_> = b
        .cdbn
        .iter()
        .flat_map(|s| s.layers())
        .map(|l| {
            let s = l.shape();
            json!({
                "input_side": s.input_side,
                "channels": s.channels,
                "groups": s.groups,
                "kernel_size": s.kernel_size,
                "pool": s.pool,
            })
        })
        .collect();
    let ae_sizes: Option<Vec<usize>> = b.autoencoder.as_ref().map(|ae| {
        let mut sizes = vec![ae.input_dim()];
        sizes.extend(ae.encoder.iter().map(|l| l.weights.cols()));
        sizes
    });
    let summary = json!({
        "format_version": cdbn_dfl::experiment::BUNDLE_VERSION,
        "method": b.method,
        "n_aps": b.n_aps,
        "n_cells": b.n_cells,
        "input_dim": b.input_dim(),
        "cdbn_layers": layers,
        "cdbn_feature_len": b.cdbn.as_ref().map(|s| s.feature_len()),
        "autoencoder_encoder_sizes": ae_sizes,
        "head_inputs": b.head.dim(),
        "fingerprint": b.fingerprint_hex(),
    });
    let text = match format {
        Format::Json => pretty(&summary),
        Format::Csv => {
            let mut s = String::from("key,value\n");
            for (k, v) in summary.as_object().expect("object") {
                let v = match v {
                    serde_json::Value::String(x) => x.clone(),
                    other => other.to_string().replace(',', ";"),
                };
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
    };
    emit(None, &text)
}
