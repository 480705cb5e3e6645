//! Subcommands of the `pfit` binary. Each returns the text it prints to
//! standard output so tests can compare reports byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pfit_core::inference;
use pfit_core::store::HeadMode;
use pfit_core::train::{evaluate, Metrics, Trainer};
use pfit_core::{Dataset, EmbeddedExample, HistoryRow, PrototypeId, Target};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{load_config, RunConfig};
use crate::dataset::{load_dataset, save_dataset};
use crate::error::{Error, Result};
use crate::synthetic::{generate_synthetic, SynthSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.tsv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Parser)]
#[command(name = "pfit", version, about = "Dynamic-capacity prototype head")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a head and write checkpoint, history and summary to OUT.
    Train(TrainArgs),
    /// Report accuracy (or MSE), per-class accuracy, K and importance entropy.
    Eval(EvalArgs),
    /// Project prototypes onto their nearest examples.
    Interpret(InterpretArgs),
    /// Write a synthetic Gaussian-blob dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    /// Validation set for early stopping.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Override a config key, e.g. `--set alpha=0.5`. Repeatable; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from a checkpoint instead of initializing.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many optimizer steps in total, leaving a resumable checkpoint.
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Prototype id, or `all`.
    #[arg(long, default_value = "all")]
    pub prototype: String,
    /// Nearest examples listed per prototype.
    #[arg(short, long, default_value_t = 10)]
    pub m: usize,
    /// Radius for the within-tau count; defaults to the current creation threshold.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub modes_per_class: usize,
    /// Distance between adjacent mode centers.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub blob_std: f64,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Interpret(a) => cmd_interpret(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn check_dim(expected: usize, data: &Dataset) -> Result<()> {
    if data.dim != expected {
        return Err(Error::DatasetDimension {
            expected,
            actual: data.dim,
        });
    }
    Ok(())
}

pub fn format_history(rows: &[HistoryRow]) -> String {
    let mut out = String::from("step\tloss\tl_div\tK\tcreated\tpruned\tclamped\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{:?}\t{:?}\t{}\t{}\t{}\t{}",
            r.step, r.loss, r.l_div, r.prototypes, r.created, r.pruned, r.clamped as u8
        );
    }
    out
}

fn format_metric(out: &mut String, m: &Metrics) {
    let _ = writeln!(out, "examples {}", m.examples);
    let _ = writeln!(out, "prototypes {}", m.prototypes);
    if let Some(acc) = m.accuracy {
        let _ = writeln!(out, "accuracy {acc:.6}");
    }
    if let Some(mse) = m.mse {
        let _ = writeln!(out, "mse {mse:.6}");
    }
    for (c, acc) in m.per_class_accuracy.iter().enumerate() {
        match acc {
            Some(acc) => {
                let _ = writeln!(out, "class {c} accuracy {acc:.6}");
            }
            None => {
                let _ = writeln!(out, "class {c} accuracy n/a");
            }
        }
    }
    let _ = writeln!(out, "mean_importance_entropy {:.6}", m.mean_importance_entropy);
}

pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let train = load_dataset(&args.train)?;
    let valid = args.valid.as_deref().map(load_dataset).transpose()?;
    let (mut trainer, run) = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let run = ckpt.run_config();
            (Trainer::from_state(ckpt.state), run)
        }
        None => {
            let mut run = match &args.config {
                Some(path) => load_config(path)?,
                None => RunConfig::default(),
            };
            run.apply_overrides(&args.overrides)?;
            if let Some(seed) = args.seed {
                run.train.seed = seed;
            }
            run.validate()?;
            let encoder = run.encoder.build(train.dim, run.train.seed)?;
            (Trainer::new(&train, encoder, run.train.clone())?, run)
        }
    };
    check_dim(trainer.model().encoder.spec().input_dim, &train)?;
    if let Some(v) = &valid {
        check_dim(train.dim, v)?;
    }
    while args
        .max_steps
        .is_none_or(|max| trainer.state.progress.step < max)
    {
        if trainer.step(&train, valid.as_ref())?.is_none() {
            break;
        }
    }

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let ckpt = Checkpoint {
        encoder_config: run.encoder,
        state: trainer.state.clone(),
    };
    save_checkpoint(&args.out.join(CHECKPOINT_FILE), &ckpt)?;
    let history_path = args.out.join(HISTORY_FILE);
    fs::write(&history_path, format_history(&trainer.history))
        .map_err(|e| Error::io(&history_path, e))?;

    let st = &trainer.state;
    let metrics = evaluate(trainer.model(), &train)?;
    let mut summary = format!(
        "steps {} epochs {} K {} created {} pruned {} clamped {} finished {} train_score {:.6}",
        st.progress.step,
        st.progress.epoch,
        st.model.store.len(),
        st.counters.created,
        st.counters.pruned,
        st.counters.clamped,
        st.progress.finished,
        metrics.score(),
    );
    if let Some(v) = &valid {
        let _ = write!(summary, " valid_score {:.6}", evaluate(trainer.model(), v)?.score());
    }
    summary.push('\n');
    let summary_path = args.out.join(SUMMARY_FILE);
    fs::write(&summary_path, &summary).map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data = load_dataset(&args.data)?;
    let model = &ckpt.state.model;
    check_dim(model.encoder.spec().input_dim, &data)?;
    let mut out = String::new();
    format_metric(&mut out, &evaluate(model, &data)?);
    Ok(out)
}

pub fn cmd_interpret(args: &InterpretArgs) -> Result<String> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data = load_dataset(&args.data)?;
    let model = &ckpt.state.model;
    check_dim(model.encoder.spec().input_dim, &data)?;
    let embedded = data
        .examples
        .iter()
        .map(|ex| model.embed(ex))
        .collect::<pfit_core::Result<Vec<EmbeddedExample>>>()?;
    let tau = args
        .tau
        .unwrap_or_else(|| model.lambda(&ckpt.state.config).value);
    let store = &model.store;
    let selected: Vec<PrototypeId> = if args.prototype == "all" {
        store.prototypes().iter().map(|p| p.id).collect()
    } else {
        let id = PrototypeId(args.prototype.parse().map_err(|_| {
            Error::config("prototype", format!("expected an id or `all`, found {:?}", args.prototype))
        })?);
        store.get(id).ok_or(pfit_core::Error::UnknownId(id))?;
        vec![id]
    };
    let group_of = |target: Target| -> Option<usize> {
        match (store.mode(), target) {
            (HeadMode::Classification { .. }, Target::Class(c)) => Some(c),
            (HeadMode::Regression { bins }, Target::Value(y)) => Some(bins.bin_of(y)),
            _ => None,
        }
    };
    let labels: std::collections::BTreeMap<u64, Target> =
        embedded.iter().map(|e| (e.id, e.target)).collect();

    let mut out = String::new();
    let _ = writeln!(out, "tau {tau:?}");
    for id in selected {
        let proto = store.get(id).ok_or(pfit_core::Error::UnknownId(id))?;
        let _ = writeln!(
            out,
            "prototype {} home_class {} sigma {:.6} created_step {}",
            id,
            proto.home_class,
            proto.sigma(),
            proto.created_step
        );
        let logits: Vec<String> = proto.logits.iter().map(|l| format!("{l:.6}")).collect();
        let _ = writeln!(out, "  logits {}", logits.join(" "));
        let nearest = inference::nearest_examples(&proto.embedding, &embedded, args.m);
        let listed: Vec<String> = nearest
            .iter()
            .map(|(ex, d)| format!("{ex}:{d:.6}"))
            .collect();
        let _ = writeln!(out, "  nearest {}", listed.join(" "));
        let within = inference::examples_within(&proto.embedding, &embedded, tau);
        let _ = writeln!(out, "  within_tau {}", within.len());
        let pure = nearest
            .iter()
            .filter(|(ex, _)| group_of(labels[ex]) == Some(proto.home_class))
            .count();
        if nearest.is_empty() {
            let _ = writeln!(out, "  purity n/a");
        } else {
            let _ = writeln!(out, "  purity {:.6}", pure as f64 / nearest.len() as f64);
        }
        if let Ok(pred) = inference::prototype_prediction(proto, store.mode()) {
            let probs: Vec<String> = pred.iter().map(|p| format!("{p:.6}")).collect();
            let _ = writeln!(out, "  predicts {}", probs.join(" "));
        }
    }
    Ok(out)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String> {
    let spec = SynthSpec {
        classes: args.classes,
        modes_per_class: args.modes_per_class,
        separation: args.separation,
        blob_std: args.blob_std,
        dim: args.dim,
        count: args.count,
        seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    save_dataset(&args.out, &data)?;
    Ok(format!("wrote {} examples to {}\n", data.len(), args.out.display()))
}
