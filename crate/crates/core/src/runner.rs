//! Closed-loop episode execution and batch evaluation.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::acoustics::{BinauralFrame, SoundBank};
use crate::agents::{Agent, AgentConfig, AgentKind, ListeningKit};
use crate::dataset::{Dataset, EpisodeSpec, SplitName};
use crate::descriptor::{
    training_target, CategoryTemplates, DistanceCalibration, OracleMode, TrainingEpisode,
};
use crate::env::{Condition, EnvConfig, Environment, EpisodeTrace, TraceStep, TraceSummary};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::seed::{derive_seed, derive_seed_str};

/// Seed for one run of one episode; depends only on the master seed, the
/// episode id and the run index.
pub fn episode_seed(master: u64, episode_id: &str, run: usize) -> u64 {
    derive_seed(
        derive_seed_str(master, "episode", episode_id),
        "run",
        run as u64,
    )
}

/// Evaluation settings shared by every episode of a batch.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub agent: AgentConfig,
    pub condition: Condition,
    pub env: EnvConfig,
    pub master_seed: u64,
    pub runs: usize,
    pub workers: usize,
}

impl EvalConfig {
    pub fn new(agent: AgentConfig, condition: Condition, master_seed: u64) -> Self {
        Self {
            agent,
            condition,
            env: EnvConfig::default(),
            master_seed,
            runs: 1,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.env.normalization.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("run count must be at least 1".into()));
        }
        Ok(())
    }

    fn env_config(&self) -> EnvConfig {
        EnvConfig {
            render_audio: self.env.render_audio && self.agent.kind.needs_audio(),
            ..self.env
        }
    }
}

/// Runs one episode to termination.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    scene: Arc<Scene>,
    spec: &EpisodeSpec,
    bank: SoundBank,
    condition: Condition,
    agent_cfg: &AgentConfig,
    env_cfg: EnvConfig,
    seed: u64,
    run: usize,
    kit: Option<ListeningKit>,
) -> Result<EpisodeTrace> {
    run_episode_observed(
        scene,
        spec,
        bank,
        condition,
        agent_cfg,
        env_cfg,
        seed,
        run,
        kit,
        |_, _| {},
    )
}

/// Like [`run_episode`], calling `observe` after each decision with the
/// environment still at the observation the decision was made from.
#[allow(clippy::too_many_arguments)]
pub fn run_episode_observed(
    scene: Arc<Scene>,
    spec: &EpisodeSpec,
    bank: SoundBank,
    condition: Condition,
    agent_cfg: &AgentConfig,
    env_cfg: EnvConfig,
    seed: u64,
    run: usize,
    kit: Option<ListeningKit>,
    mut observe: impl FnMut(&Environment, &Agent),
) -> Result<EpisodeTrace> {
    let (mut env, mut obs) = Environment::reset(scene, spec, bank, condition, env_cfg, seed)?;
    let agent_seed = derive_seed(seed ^ agent_cfg.seed, "agent", 0);
    let mut agent = Agent::new(agent_cfg, agent_seed, kit)?;
    let mode = match agent_cfg.kind {
        AgentKind::Oracle1 => OracleMode::Oracle1,
        _ => OracleMode::Oracle2,
    };
    let mut steps = Vec::new();
    let mut last = None;
    while !env.is_done() {
        let label = env.label(mode);
        let truth = env.label(OracleMode::Oracle2);
        let goal_active = env.goal_active();
        let action = agent.act(&obs, &label, env.normalized_pose())?;
        observe(&env, &agent);
        let (next, outcome) = env.step(action)?;
        let pose = env.pose();
        steps.push(TraceStep {
            t: obs.t,
            action,
            pose: [pose.x, pose.y, pose.theta()],
            reward: outcome.reward,
            goal_active,
            estimate: agent.estimate().cloned(),
            label: Some(truth),
        });
        last = Some(outcome);
        obs = next;
    }
    let schedule = env.schedule();
    let dtg = last.map_or(env.geodesic(), |o| o.dtg);
    Ok(EpisodeTrace {
        steps,
        summary: TraceSummary {
            termination: env.termination(),
            dtg,
            path_length: env.path_length(),
            num_actions: env.num_actions(),
            episode_id: spec.id.clone(),
            agent: agent_cfg.kind.to_string(),
            condition,
            run,
            seed,
            geodesic_start_goal: spec.geodesic_start_goal,
            oracle_actions: spec.oracle_actions,
            duration_s: spec.duration_s,
            onset_step: schedule.onset_step,
            active_steps: schedule.steps,
            goal_category: spec.goal.category_id,
            num_categories: bank.goal_categories as usize,
        },
    })
}

/// Shared listening state for a batch: templates plus per-scene calibration.
fn listening_kits(
    dataset: &Dataset,
    episodes: &[EpisodeSpec],
    train_variants: Range<u32>,
) -> Result<BTreeMap<String, ListeningKit>> {
    let bank = dataset.manifest.bank;
    let templates = Arc::new(CategoryTemplates::build(&bank, train_variants)?);
    let mut ids: Vec<&str> = episodes.iter().map(|e| e.scene_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.par_iter()
        .map(|id| {
            let scene = dataset.scene(id)?.clone();
            Ok((
                id.to_string(),
                ListeningKit {
                    num_categories: bank.goal_categories as usize,
                    calibration: DistanceCalibration::for_scene(&scene.plan)?,
                    templates: Some(templates.clone()),
                },
            ))
        })
        .collect()
}

/// Evaluates `episodes` under `cfg`; output is ordered by (episode id, run)
/// and does not depend on the worker count.
pub fn run_batch(
    dataset: &Dataset,
    episodes: &[EpisodeSpec],
    cfg: &EvalConfig,
) -> Result<Vec<EpisodeTrace>> {
    cfg.validate()?;
    let bank = dataset.manifest.bank;
    let env_cfg = cfg.env_config();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        let kits = if cfg.agent.kind.needs_audio() {
            let train = dataset.manifest.split(SplitName::Train)?.variant_range();
            listening_kits(dataset, episodes, train)?
        } else {
            BTreeMap::new()
        };
        let mut jobs: Vec<(&EpisodeSpec, usize)> = episodes
            .iter()
            .flat_map(|e| (0..cfg.runs).map(move |r| (e, r)))
            .collect();
        jobs.sort_by(|a, b| (&a.0.id, a.1).cmp(&(&b.0.id, b.1)));
        jobs.par_iter()
            .map(|(spec, run)| {
                let scene = dataset.scene(&spec.scene_id)?.clone();
                run_episode(
                    scene,
                    spec,
                    bank,
                    cfg.condition,
                    &cfg.agent,
                    env_cfg,
                    episode_seed(cfg.master_seed, &spec.id, *run),
                    *run,
                    kits.get(&spec.scene_id).cloned(),
                )
            })
            .collect()
    })
}

/// Runs the tracker agent over `episodes` and pairs each memory record with
/// its goal-only training target.
pub fn collect_training_episodes(
    dataset: &Dataset,
    episodes: &[EpisodeSpec],
    cfg: &EvalConfig,
) -> Result<Vec<TrainingEpisode>> {
    cfg.validate()?;
    if cfg.agent.kind != AgentKind::Tracker {
        return Err(Error::Config(
            "training data is collected with the tracker agent".into(),
        ));
    }
    let bank = dataset.manifest.bank;
    let c = bank.goal_categories as usize;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        let train = dataset.manifest.split(SplitName::Train)?.variant_range();
        let kits = listening_kits(dataset, episodes, train)?;
        episodes
            .par_iter()
            .map(|spec| {
                let mut ep = TrainingEpisode::default();
                run_episode_observed(
                    dataset.scene(&spec.scene_id)?.clone(),
                    spec,
                    bank,
                    cfg.condition,
                    &cfg.agent,
                    cfg.env_config(),
                    episode_seed(cfg.master_seed, &spec.id, 0),
                    0,
                    kits.get(&spec.scene_id).cloned(),
                    |env, agent| {
                        if let Some(r) = agent.last_record() {
                            ep.records.push(r.to_vec());
                            ep.targets.push(training_target(
                                &env.pose(),
                                env.goal_point(),
                                spec.goal.category_id as usize,
                                c,
                                env.goal_active(),
                            ));
                        }
                    },
                )?;
                Ok(ep)
            })
            .collect()
    })
}

/// Evaluates every episode of a split.
pub fn run_split(
    dataset: &Dataset,
    split: SplitName,
    cfg: &EvalConfig,
) -> Result<Vec<EpisodeTrace>> {
    run_batch(dataset, dataset.split(split), cfg)
}

/// Re-renders the binaural stream an episode trace observed, replaying its
/// actions. The first frame is the reset observation.
pub fn replay_audio(
    dataset: &Dataset,
    spec: &EpisodeSpec,
    trace: &EpisodeTrace,
    env_cfg: EnvConfig,
) -> Result<Vec<BinauralFrame>> {
    let s = &trace.summary;
    if s.episode_id != spec.id {
        return Err(Error::Config(format!(
            "trace is for episode {} but spec is {}",
            s.episode_id, spec.id
        )));
    }
    let scene = dataset.scene(&spec.scene_id)?.clone();
    let cfg = EnvConfig {
        render_audio: true,
        ..env_cfg
    };
    let (mut env, obs) =
        Environment::reset(scene, spec, dataset.manifest.bank, s.condition, cfg, s.seed)?;
    let mut frames = vec![obs.binaural];
    for (k, step) in trace.steps.iter().enumerate() {
        if env.is_done() {
            return Err(Error::Config(format!(
                "trace for {} continues after the episode ended at step {k}",
                spec.id
            )));
        }
        let (obs, _) = env.step(step.action)?;
        let p = env.pose();
        if (p.x - step.pose[0]).abs() > 1e-9 || (p.y - step.pose[1]).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "replay of {} diverged from the trace at step {k}",
                spec.id
            )));
        }
        if !env.is_done() {
            frames.push(obs.binaural);
        }
    }
    Ok(frames)
}
