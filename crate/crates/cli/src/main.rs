//! `twotower`: generate corpora, train, evaluate, run ablations and query a
//! trained tower from the command line.
//!
//! Exit status: 0 success, 2 usage, 3 configuration, 4 I/O, 5 data or runtime.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use twotower_core::eval::evaluate;
use twotower_core::io::write_bytes_atomic;
use twotower_core::model::{checkpoint_load, checkpoint_save, fingerprint};
use twotower_core::retrieval::save_index;
use twotower_core::{
    build_frequency_table, build_index, generate_corpus, load_dataset, run_ablation, save_dataset, split_dataset,
    top_k, train, Dataset,
};

use config::{parse_assignment, ConfigError, Override, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "twotower",
    version,
    about = "Multi-objective two-tower related-video retrieval"
)]
struct Cli {
    /// TOML configuration file; every key has a default.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set train.epochs=3`. Repeatable;
    /// command flags are applied after these.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_assignment)]
    overrides: Vec<Override>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    GenData(GenDataArgs),
    /// Train on the training split and write a checkpoint and training report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the held-out split.
    Eval(EvalArgs),
    /// Run an ablation and write its table and structured report.
    Ablate(AblateArgs),
    /// Print the top-k related videos for one trigger.
    Recommend(RecommendArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    videos: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    interactions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(short, long)]
    k: Option<usize>,
    /// Also dump the embedding index.
    #[arg(long, value_name = "FILE")]
    index: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// `paper`, `sweep` or `full`; replaces any entry list from the config.
    #[arg(long)]
    preset: Option<String>,
    /// Seed for the split, initialization and batch order.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    /// Trigger video id as it appears in the videos file.
    #[arg(long)]
    trigger: u64,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

fn set(key: &str, value: impl ToString) -> Override {
    Override::Set(key.into(), value.to_string())
}

fn path_value(p: &Path) -> String {
    // Quoted so the value is always read back as a string.
    toml::Value::String(p.display().to_string()).to_string()
}

impl Command {
    /// Command flags expressed as overrides of the configuration table.
    fn overrides(&self) -> Vec<Override> {
        let mut out = Vec::new();
        match self {
            Command::GenData(a) => {
                out.extend(a.seed.map(|s| set("synth.seed", s)));
                out.extend(a.videos.as_deref().map(|p| set("paths.videos", path_value(p))));
                out.extend(
                    a.interactions
                        .as_deref()
                        .map(|p| set("paths.interactions", path_value(p))),
                );
            }
            Command::Train(a) => {
                out.extend(a.epochs.map(|e| set("train.epochs", e)));
                out.extend(a.seed.map(|s| set("train.seed", s)));
                out.extend(a.checkpoint.as_deref().map(|p| set("paths.checkpoint", path_value(p))));
            }
            Command::Eval(a) => {
                out.extend(a.checkpoint.as_deref().map(|p| set("paths.checkpoint", path_value(p))));
                out.extend(a.k.map(|k| set("eval.k", k)));
                out.extend(a.index.as_deref().map(|p| set("paths.index", path_value(p))));
            }
            Command::Ablate(a) => {
                if let Some(p) = &a.preset {
                    out.push(Override::Unset("ablation.entries".into()));
                    out.push(set("ablation.preset", toml::Value::String(p.clone())));
                }
                out.extend(a.seed.map(|s| set("train.seed", s)));
            }
            Command::Recommend(a) => {
                out.extend(a.k.map(|k| set("eval.k", k)));
                out.extend(a.checkpoint.as_deref().map(|p| set("paths.checkpoint", path_value(p))));
            }
        }
        out
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes_atomic(path, text.as_bytes())?;
    Ok(())
}

fn load(config: &RunConfig) -> Result<Dataset> {
    Ok(load_dataset(&config.paths.videos, &config.paths.interactions)?)
}

fn gen_data(config: &RunConfig) -> Result<()> {
    let dataset = generate_corpus(&config.synth)?;
    ensure_parent(&config.paths.videos)?;
    ensure_parent(&config.paths.interactions)?;
    save_dataset(&dataset, &config.paths.videos, &config.paths.interactions)?;
    write_json(
        &config.paths.manifest,
        &json!({
            "videos": config.paths.videos,
            "interactions": config.paths.interactions,
            "n_videos": dataset.n_videos(),
            "n_pairs": dataset.pairs().len(),
            "config": config,
        }),
    )?;
    println!(
        "wrote {} videos to {} and {} pairs to {}",
        dataset.n_videos(),
        config.paths.videos.display(),
        dataset.pairs().len(),
        config.paths.interactions.display()
    );
    Ok(())
}

fn train_cmd(config: &RunConfig) -> Result<()> {
    let dataset = load(config)?;
    let (train_set, _) = split_dataset(&dataset, config.split.holdout_fraction, config.split.seed)?;
    let started = Instant::now();
    let (params, report) = train(&train_set, &config.model, &config.train)?;
    let fp = fingerprint(&params, &config.model);
    ensure_parent(&config.paths.checkpoint)?;
    checkpoint_save(&config.paths.checkpoint, &params, &config.model)?;
    write_json(
        &config.paths.train_report,
        &json!({
            "checkpoint": config.paths.checkpoint,
            "fingerprint": fp,
            "n_train_pairs": train_set.pairs().len(),
            "report": report,
            "config": config,
        }),
    )?;
    if let Some(last) = report.epochs.last() {
        println!(
            "trained {} epochs in {:.1}s, final mean loss {:.6}; checkpoint {} ({fp})",
            report.epochs.len(),
            started.elapsed().as_secs_f64(),
            last.mean_weighted_loss,
            config.paths.checkpoint.display()
        );
    }
    Ok(())
}

fn eval_cmd(config: &RunConfig) -> Result<()> {
    let dataset = load(config)?;
    let (params, model) = checkpoint_load(&config.paths.checkpoint)?;
    let (train_set, eval_set) = split_dataset(&dataset, config.split.holdout_fraction, config.split.seed)?;
    let index = build_index(&params, &model, dataset.videos())?;
    let freq = build_frequency_table(train_set.pairs());
    let metrics = evaluate(&index, dataset.videos(), eval_set.pairs(), &freq, &config.eval)?;
    if let Some(path) = &config.paths.index {
        ensure_parent(path)?;
        save_index(path, &index)?;
    }
    write_json(
        &config.paths.eval_report,
        &json!({
            "checkpoint": config.paths.checkpoint,
            "fingerprint": index.fingerprint(),
            "model": model,
            "n_eval_pairs": eval_set.pairs().len(),
            "metrics": metrics,
            "config": config,
        }),
    )?;
    println!(
        "recall@{} {:.4}  topic match {:.4}  popular share {:.4}",
        metrics.k, metrics.recall_at_k, metrics.topic_match_rate, metrics.popular_share
    );
    Ok(())
}

fn ablate(config: &RunConfig) -> Result<()> {
    let dataset = load(config)?;
    let spec = config.ablation_spec()?;
    let report = run_ablation(&dataset, &spec, &config.eval, config.train.seed)?;
    ensure_parent(&config.paths.ablation_table)?;
    report.write_table(&config.paths.ablation_table)?;
    write_json(
        &config.paths.ablation_report,
        &json!({ "report": report, "config": config }),
    )?;
    print!("{}", report.to_table());
    Ok(())
}

fn recommend(config: &RunConfig, trigger: u64) -> Result<()> {
    let dataset = load(config)?;
    let (params, model) = checkpoint_load(&config.paths.checkpoint)?;
    let ids = dataset.external_ids();
    let dense = ids.iter().position(|&e| e == trigger).ok_or_else(|| {
        anyhow!(
            "trigger id {trigger} is not in the catalog ({} videos)",
            dataset.n_videos()
        )
    })?;
    let index = build_index(&params, &model, dataset.videos())?;
    for (rank, s) in top_k(&index, dense, config.eval.k)?.iter().enumerate() {
        let topics: Vec<String> = dataset.videos()[s.id].topics.iter().map(u32::to_string).collect();
        println!("{}\t{}\t{:.6}\t{}", rank + 1, ids[s.id], s.score, topics.join(","));
    }
    Ok(())
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 3;
    }
    if let Some(e) = err.downcast_ref::<twotower_core::Error>() {
        return if e.is_config() {
            3
        } else if e.is_io() {
            4
        } else {
            5
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    5
}

fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides;
    overrides.extend(cli.command.overrides());
    let config = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    log::info!(
        "resolved configuration:\n{}",
        toml::to_string(&config).unwrap_or_default()
    );
    match &cli.command {
        Command::GenData(_) => gen_data(&config),
        Command::Train(_) => train_cmd(&config),
        Command::Eval(_) => eval_cmd(&config),
        Command::Ablate(_) => ablate(&config),
        Command::Recommend(a) => recommend(&config, a.trigger),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TWOTOWER_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
