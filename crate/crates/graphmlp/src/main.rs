use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use graphmlp::commands;
use graphmlp::config::{parse_override, parse_pairs, Settings};
use graphmlp::dataset::{read_dataset, DatasetFormat};
use graphmlp::train::{train, EpochLog};
use graphmlp::weights::{load_weights_from_header, save_weights};
use graphmlp_core::model::{BlockToggle, GraphMlpModel, Placement, Variant};
use serde::Serialize;

/// GraphMLP: lift 2D skeleton keypoints to 3D.
#[derive(Parser)]
#[command(name = "graphmlp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; prints one JSON line per epoch.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training dataset (.jsonl or .bin).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Evaluation dataset used to pick the best checkpoint.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        /// Final checkpoint path; the best one goes next to it as `*.best.gmlp`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset; prints an EvalReport.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Print parameter count and FLOPs.
    Cost {
        #[command(flatten)]
        common: Common,
        /// Comma-separated frame counts, one report row each.
        #[arg(long, value_delimiter = ',')]
        sweep_frames: Option<Vec<usize>>,
    },
    /// Finite-difference check of every gradient on a toy model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Check only this block toggle.
        #[arg(long)]
        block_toggle: Option<BlockToggle>,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Output format; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<DatasetFormat>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    placement: Option<Placement>,
    /// Skeleton layout name or layout file.
    #[arg(long)]
    layout: Option<String>,
    /// Any configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        self.settings_from(Settings::default())
    }

    /// `base`, then the config file, then command-line flags.
    fn settings_from(&self, mut s: Settings) -> Result<Settings> {
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            s.apply_all(&parse_pairs(&text)?)
                .with_context(|| p.display().to_string())?;
        }
        let mut pairs = Vec::new();
        if let Some(v) = self.seed {
            pairs.push(("seed".to_string(), v.to_string()));
        }
        if let Some(v) = self.frames {
            pairs.push(("frames".to_string(), v.to_string()));
        }
        if let Some(v) = self.variant {
            pairs.push(("variant".to_string(), v.to_string()));
        }
        if let Some(v) = self.placement {
            pairs.push(("placement".to_string(), v.to_string()));
        }
        if let Some(v) = &self.layout {
            pairs.push(("layout".to_string(), v.clone()));
        }
        for o in &self.overrides {
            pairs.push(parse_override(o)?);
        }
        s.apply_all(&pairs)?;
        Ok(s)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn best_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    checkpoint.with_file_name(format!("{stem}.best.gmlp"))
}

fn run_train(
    common: &Common,
    data: Option<PathBuf>,
    eval_data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
) -> Result<()> {
    let mut s = common.settings()?;
    s.train_data = data.or(s.train_data);
    s.eval_data = eval_data.or(s.eval_data);
    s.checkpoint = checkpoint.or(s.checkpoint);
    let Some(train_path) = s.train_data.clone() else {
        bail!("no training data: pass --data or set train_data");
    };
    let topo = s.topology()?;
    let cfg = s.model_for(&topo)?;
    let train_set = read_dataset(&train_path)?;
    let eval_set = s.eval_data.as_deref().map(read_dataset).transpose()?;
    log::info!(
        "training on {} samples ({} params, {} epochs)",
        train_set.len(),
        graphmlp_core::model::count_params(&cfg),
        s.train.epochs
    );
    let model = GraphMlpModel::new(cfg, &topo)?;
    let mut log_file = match &s.log_file {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| p.display().to_string())?)),
        None => None,
    };
    let mut write_err = None;
    let outcome = train(model, &topo, &s.train, &train_set, eval_set.as_deref(), |e: &EpochLog| {
        log::info!("epoch {} lr {:.3e} train mpjpe {:.2}mm", e.epoch, e.lr, e.train_mpjpe);
        let line = serde_json::to_string(e).expect("epoch log serializes");
        println!("{line}");
        if let Some(f) = log_file.as_mut() {
            if let Err(err) = writeln!(f, "{line}") {
                write_err.get_or_insert(err);
            }
        }
    })?;
    if let Some(err) = write_err {
        return Err(err).context("writing training log");
    }
    if let Some(f) = log_file.as_mut() {
        f.flush()?;
    }
    if let Some(path) = &s.checkpoint {
        save_weights(path, &outcome.model)?;
        let best = best_path(path);
        save_weights(&best, &outcome.best)?;
        log::info!(
            "wrote {} and {} (best epoch {})",
            path.display(),
            best.display(),
            outcome.best_epoch
        );
    }
    Ok(())
}

fn run_eval(common: &Common, checkpoint: &Path, data: &Path) -> Result<()> {
    let s = common.settings()?;
    let topo = s.topology()?;
    let model = load_weights_from_header(checkpoint, &topo)?;
    let samples = read_dataset(data)?;
    print_json(&commands::eval(&model, &samples)?)
}

fn run_cost(common: &Common, sweep: Option<Vec<usize>>) -> Result<()> {
    let s = common.settings()?;
    let topo = s.topology()?;
    let cfg = s.model_for(&topo)?;
    match sweep {
        Some(frames) => print_json(&commands::cost_sweep(&cfg, &topo, &frames)?),
        None => print_json(&commands::cost(&cfg, &topo)?),
    }
}

fn run_gradcheck(common: &Common, toggle: Option<BlockToggle>) -> Result<bool> {
    let base = Settings {
        model: commands::toy_model_config(),
        layout: String::new(),
        ..Settings::default()
    };
    let s = common.settings_from(base)?;
    let topo = if s.layout.is_empty() {
        commands::toy_topology()
    } else {
        s.topology()?
    };
    let cfg = s.model_for(&topo)?;
    let variants = common.variant.map_or(Variant::ALL.to_vec(), |v| vec![v]);
    let placements = common.placement.map_or(Placement::ALL.to_vec(), |p| vec![p]);
    let toggles = toggle.map_or(BlockToggle::ALL.to_vec(), |t| vec![t]);
    let report = commands::gradcheck(&cfg, &topo, &variants, &placements, &toggles)?;
    print_json(&report)?;
    Ok(report.pass)
}

fn run_synth(common: &Common, out: &Path, format: Option<DatasetFormat>) -> Result<()> {
    let s = common.settings()?;
    let topo = s.topology()?;
    let cfg = s.synthetic_for(&topo)?;
    print_json(&commands::synth(&cfg, &topo, out, format)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAPHMLP_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            common,
            data,
            eval_data,
            checkpoint,
        } => run_train(common, data.clone(), eval_data.clone(), checkpoint.clone()),
        Command::Eval {
            common,
            checkpoint,
            data,
        } => run_eval(common, checkpoint, data),
        Command::Cost { common, sweep_frames } => run_cost(common, sweep_frames.clone()),
        Command::Gradcheck { common, block_toggle } => match run_gradcheck(common, *block_toggle) {
            Ok(true) => Ok(()),
            Ok(false) => {
                log::error!("gradient check failed");
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
        Command::Synth { common, out, format } => run_synth(common, out, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
