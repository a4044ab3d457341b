//! Command-line interface: generation, evaluation, reporting, audio export
//! and regressor training.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Deserialize;

use crate::acoustics::write_wav;
use crate::agents::{AgentConfig, AgentKind};
use crate::dataset::{
    generate_dataset, generate_scenes, read_dataset, write_dataset, write_scene, DatasetConfig,
    SplitName,
};
use crate::descriptor::{synthetic_episodes, train_gdn, GdnConfig, TrainConfig};
use crate::env::{read_traces, write_traces, Condition, EpisodeTrace};
use crate::error::{Error, Result};
use crate::metrics::{build_reports, curve_csv, reports_csv, reports_markdown};
use crate::runner::{collect_training_episodes, replay_audio, run_batch, EvalConfig};

#[derive(Debug, Parser)]
#[command(
    name = "savnce",
    version,
    about = "Semantic audio-visual navigation simulator"
)]
pub struct Cli {
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scene floorplans.
    GenScenes(GenScenesArgs),
    /// Generate scenes, episode splits and the manifest.
    GenDataset(GenDatasetArgs),
    /// Run an agent over a split and write traces plus the metric report.
    RunEval(RunEvalArgs),
    /// Recompute the metric report from trace files.
    Report(ReportArgs),
    /// Re-render one traced episode to a stereo WAV file.
    ExportAudio(ExportAudioArgs),
    /// Train the descriptor regressor.
    TrainGdn(TrainGdnArgs),
}

#[derive(Debug, Args)]
pub struct GenScenesArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scenes per split as `train,val,test`.
    #[arg(long, value_delimiter = ',')]
    pub scenes: Option<Vec<usize>>,
    /// Episodes per split as `train,val,test`.
    #[arg(long, value_delimiter = ',')]
    pub episodes: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunEvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub split: Option<SplitName>,
    #[arg(long)]
    pub agent: Option<AgentKind>,
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Evaluate only the first N episodes of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trace files (JSON Lines) to aggregate.
    #[arg(long, required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportAudioArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub episode: String,
    #[arg(long, default_value_t = 0)]
    pub run: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainGdnArgs {
    /// Dataset to collect tracker memories from; omit to use synthetic data.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<SplitName>,
    /// Number of episodes (dataset or synthetic).
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Optional defaults read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub scenes: Option<[usize; 3]>,
    pub episodes: Option<[usize; 3]>,
    pub variants: Option<[u32; 3]>,
    pub distractors: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub kind: Option<AgentKind>,
    pub stop_threshold: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub split: Option<SplitName>,
    pub condition: Option<Condition>,
    pub runs: Option<usize>,
    pub max_order: Option<u32>,
    pub max_actions: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.csv`, `report.md`, `report.json` and per-group curves.
pub fn write_report(dir: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    create_dir(dir)?;
    let reports = build_reports(traces)?;
    write_text(&dir.join("report.csv"), &reports_csv(&reports))?;
    write_text(&dir.join("report.md"), &reports_markdown(&reports))?;
    write_text(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&reports)?,
    )?;
    for r in &reports {
        let stem = format!("curve_{}_{}", r.agent, r.condition);
        write_text(
            &dir.join(format!("{stem}_action_ratio.csv")),
            &curve_csv(&r.curves.action_ratio),
        )?;
        write_text(
            &dir.join(format!("{stem}_geodesic.csv")),
            &curve_csv(&r.curves.geodesic),
        )?;
    }
    Ok(())
}

fn split3<T: Copy>(flag: &str, v: &[T]) -> Result<[T; 3]> {
    match v {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::Config(format!(
            "--{flag} takes three comma-separated values (train,val,test)"
        ))),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::GenScenes(a) => {
            let seed = a.seed.or(file.seed).unwrap_or(0);
            create_dir(&a.out)?;
            for plan in generate_scenes(seed, a.count)? {
                write_scene(&a.out, &plan)?;
            }
            info!("wrote {} scenes to {}", a.count, a.out.display());
            Ok(())
        }
        Command::GenDataset(a) => {
            let d = &file.dataset;
            let mut cfg = DatasetConfig {
                master_seed: a.seed.or(file.seed).unwrap_or(0),
                ..DatasetConfig::default()
            };
            if let Some(s) = a
                .scenes
                .as_deref()
                .map(|v| split3("scenes", v))
                .transpose()?
                .or(d.scenes)
            {
                cfg.scenes = s;
            }
            if let Some(e) = a
                .episodes
                .as_deref()
                .map(|v| split3("episodes", v))
                .transpose()?
                .or(d.episodes)
            {
                cfg.episodes = e;
            }
            if let Some(v) = d.variants {
                cfg.variants = v;
            }
            if let Some(x) = d.distractors {
                cfg.distractors = x;
            }
            let data = generate_dataset(&cfg)?;
            write_dataset(&a.out, &data)?;
            info!("wrote dataset to {}", a.out.display());
            Ok(())
        }
        Command::RunEval(a) => {
            let split = a.split.or(file.eval.split).unwrap_or(SplitName::Test);
            let kind = a
                .agent
                .or(file.agent.kind)
                .ok_or_else(|| Error::Config("no agent given (--agent or agent.kind)".into()))?;
            let data = read_dataset(&a.dataset, &[split])?;
            let mut agent = AgentConfig::new(kind);
            agent.random_distribution = data.manifest.random_action_distribution;
            if let Some(t) = file.agent.stop_threshold {
                agent.stop_threshold = t;
            }
            if let Some(s) = file.agent.seed {
                agent.seed = s;
            }
            let condition = a
                .condition
                .or(file.eval.condition)
                .unwrap_or(Condition::Clean);
            let mut cfg = EvalConfig::new(agent, condition, a.seed.or(file.seed).unwrap_or(0));
            cfg.workers = a.workers.or(file.workers).unwrap_or(1);
            cfg.runs = a.runs.or(file.eval.runs).unwrap_or(1);
            if let Some(o) = file.eval.max_order {
                cfg.env.max_order = o;
            }
            if let Some(m) = file.eval.max_actions {
                cfg.env.max_actions = m;
            }
            cfg.validate()?;
            let episodes = data.split(split);
            let episodes = &episodes[..a.limit.unwrap_or(episodes.len()).min(episodes.len())];
            let traces = run_batch(&data, episodes, &cfg)?;
            create_dir(&a.out)?;
            write_traces(&a.out.join("traces.jsonl"), &traces)?;
            write_report(&a.out, &traces)?;
            info!(
                "evaluated {} episodes into {}",
                traces.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Report(a) => {
            let mut traces = Vec::new();
            for p in &a.traces {
                traces.extend(read_traces(p)?);
            }
            write_report(&a.out, &traces)
        }
        Command::ExportAudio(a) => {
            let traces = read_traces(&a.traces)?;
            let trace = traces
                .iter()
                .find(|t| t.summary.episode_id == a.episode && t.summary.run == a.run)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "episode {} run {} not in {}",
                        a.episode,
                        a.run,
                        a.traces.display()
                    ))
                })?;
            let split = SplitName::ALL
                .into_iter()
                .find(|s| a.episode.starts_with(s.as_str()))
                .ok_or_else(|| Error::Config(format!("cannot tell the split of {}", a.episode)))?;
            let data = read_dataset(&a.dataset, &[split])?;
            let spec = data
                .split(split)
                .iter()
                .find(|e| e.id == a.episode)
                .ok_or_else(|| Error::Config(format!("episode {} not in dataset", a.episode)))?;
            let mut env = crate::env::EnvConfig::default();
            if let Some(o) = file.eval.max_order {
                env.max_order = o;
            }
            if let Some(m) = file.eval.max_actions {
                env.max_actions = m;
            }
            let frames = replay_audio(&data, spec, trace, env)?;
            write_wav(&a.out, &frames)
        }
        Command::TrainGdn(a) => {
            let seed = a.seed.or(file.seed).unwrap_or(0);
            let (episodes, categories) = match &a.dataset {
                Some(dir) => {
                    let split = a.split.unwrap_or(SplitName::Train);
                    let data = read_dataset(dir, &[split])?;
                    let mut cfg = EvalConfig::new(
                        AgentConfig::new(AgentKind::Tracker),
                        Condition::Clean,
                        seed,
                    );
                    cfg.workers = a.workers.or(file.workers).unwrap_or(1);
                    let specs = data.split(split);
                    let specs = &specs[..a.episodes.min(specs.len())];
                    (
                        collect_training_episodes(&data, specs, &cfg)?,
                        data.manifest.bank.goal_categories as usize,
                    )
                }
                None => {
                    let c = crate::acoustics::SoundBank::default().goal_categories as usize;
                    (synthetic_episodes(a.episodes, c, seed), c)
                }
            };
            let train = TrainConfig {
                epochs: a.epochs.unwrap_or(TrainConfig::default().epochs),
                seed,
                ..TrainConfig::default()
            };
            let (weights, report) = train_gdn(&episodes, GdnConfig::new(categories), &train)?;
            weights.save(&a.out)?;
            println!(
                "episodes {} (filtered {}), samples {}, mse {:.6} -> {:.6}",
                report.episodes_used,
                report.episodes_filtered,
                report.samples,
                report.initial_mse,
                report.final_mse
            );
            Ok(())
        }
    }
}

/// Single-line failure description: `error: <kind>: <message>`.
pub fn failure_line(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error: {}: {msg}", e.kind())
}
