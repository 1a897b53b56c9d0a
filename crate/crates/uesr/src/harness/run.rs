//! Experiment execution: synchronized parallel environments, per-agent
//! acting with message exchange, segment updates, metrics, checkpoints,
//! few-shot transfer and frozen evaluation.
//!
//! All environments run in lockstep (episodes share the 50-step clock), so
//! segment boundaries, episode boundaries and update cadence coincide
//! across the batch and every run is a pure function of (config, seed).

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::agent::{assemble_message, A2cAgent, Scheme, UpdateError};
use crate::comm::{CommError, MessageBuffer, MessageVector};
use crate::env::{
    create_env_with_agents, observe, Action, EnvError, ObservationVector, WarehouseState,
    EPISODE_LEN, OBS_LEN,
};
use crate::nn::checkpoint::{self, CheckpointError};
use crate::nn::params::OptimizerConfig;
use crate::uem::{Uem, UemError, UemSample};

use super::config::{ConfigError, ExperimentConfig};
use super::metrics::{MetricsError, MetricsRecord, MetricsWriter, RunTags};

pub const N_ACTIONS: usize = Action::COUNT;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("message bus: {0}")]
    Comm(#[from] CommError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("run diverged at env step {env_step}: {detail}")]
    NanAbort { env_step: u64, detail: String },
}

/// Everything a finished training run reports.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub env_steps: u64,
    pub episodes_completed: u64,
    /// Cumulative average over the whole run.
    pub final_deliveries_per_episode: f64,
    /// Best per-window average seen during the run, with its env step.
    pub best_window_deliveries: f64,
    pub best_window_step: u64,
    pub updates_performed: u64,
    pub checkpoint_path: Option<PathBuf>,
    pub best_checkpoint_path: Option<PathBuf>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub episodes: u64,
    pub mean_deliveries: f64,
    pub std_deliveries: f64,
    pub per_episode: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TransferOutput {
    pub updates_performed: u64,
    pub episodes: u64,
    pub deliveries_per_episode: f64,
    pub env_steps: u64,
    /// Set when no fine-tuning batches ran (pure zero-shot evaluation).
    pub zero_shot: bool,
}

struct LossWindow {
    actor: (f64, u64),
    critic: (f64, u64),
    pred: (f64, u64),
    enc: (f64, u64),
}

impl LossWindow {
    fn new() -> Self {
        LossWindow {
            actor: (0.0, 0),
            critic: (0.0, 0),
            pred: (0.0, 0),
            enc: (0.0, 0),
        }
    }

    fn mean(acc: (f64, u64)) -> f64 {
        if acc.1 == 0 {
            0.0
        } else {
            acc.0 / acc.1 as f64
        }
    }
}

/// One experiment in motion: environments, buses, agents and their
/// unexpectedness modules, plus the counters that feed metrics.
pub struct Runner {
    pub cfg: ExperimentConfig,
    envs: Vec<WarehouseState>,
    buffers: Vec<MessageBuffer>,
    pub agents: Vec<A2cAgent>,
    pub uems: Vec<Option<Uem>>,
    prev_obs: Vec<Vec<Option<ObservationVector>>>,
    prev_action: Vec<Vec<Option<usize>>>,
    uem_samples: Vec<Vec<UemSample>>,
    episode_t: u32,
    pub env_step: u64,
    pub episodes_completed: u64,
    pub total_deliveries: u64,
    pub updates_performed: u64,
    window: LossWindow,
    window_deliveries: u64,
    window_episodes: u64,
    started: Instant,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let n_envs = cfg.a2c.batch_envs;
        let n_agents = cfg.n_agents;
        let envs: Vec<WarehouseState> = (0..n_envs)
            .map(|e| {
                create_env_with_agents(
                    cfg.layout,
                    cfg.seed ^ crate::rng::fnv1a(format!("env/{e}").as_bytes()),
                    n_agents,
                )
            })
            .collect();
        let buffers = (0..n_envs)
            .map(|_| MessageBuffer::new(n_agents, cfg.message_len()))
            .collect();
        let agents: Vec<A2cAgent> = (0..n_agents)
            .map(|i| {
                A2cAgent::new(
                    cfg.policy_input_len(),
                    cfg.reward_bits,
                    n_envs,
                    cfg.seed ^ crate::rng::fnv1a(format!("agent/{i}").as_bytes()),
                )
            })
            .collect();
        let uems: Vec<Option<Uem>> = (0..n_agents)
            .map(|i| {
                cfg.scheme.uses_ues().then(|| {
                    Uem::new(
                        OBS_LEN,
                        N_ACTIONS,
                        cfg.uem_inbox_len(),
                        cfg.ues_channels,
                        cfg.seed ^ crate::rng::fnv1a(format!("uem/{i}").as_bytes()),
                    )
                })
            })
            .collect();
        Ok(Runner {
            prev_obs: vec![vec![None; n_envs]; n_agents],
            prev_action: vec![vec![None; n_envs]; n_agents],
            uem_samples: vec![Vec::new(); n_agents],
            cfg,
            envs,
            buffers,
            agents,
            uems,
            episode_t: 0,
            env_step: 0,
            episodes_completed: 0,
            total_deliveries: 0,
            updates_performed: 0,
            window: LossWindow::new(),
            window_deliveries: 0,
            window_episodes: 0,
            started: Instant::now(),
        })
    }

    pub fn cumulative_deliveries_per_episode(&self) -> f64 {
        if self.episodes_completed == 0 {
            0.0
        } else {
            self.total_deliveries as f64 / self.episodes_completed as f64
        }
    }

    fn begin_episode(&mut self) {
        for env in &mut self.envs {
            env.reset_episode();
        }
        for buf in &mut self.buffers {
            buf.reset();
        }
        for (i, agent) in self.agents.iter_mut().enumerate() {
            for e in 0..self.envs.len() {
                agent.reset_hidden(e);
                self.prev_obs[i][e] = None;
                self.prev_action[i][e] = None;
            }
        }
        self.episode_t = 0;
    }

    fn ensure_segments(&mut self) {
        for agent in &mut self.agents {
            if !agent.segment_active() {
                agent.begin_segment();
            }
        }
    }

    /// One synchronized step of every environment. In training mode the
    /// agents and unexpectedness modules update at segment boundaries.
    fn play_round(&mut self, train_mode: bool) -> Result<(), HarnessError> {
        let n_envs = self.envs.len();
        let n_agents = self.cfg.n_agents;
        let t = self.episode_t;
        if t == 0 {
            self.begin_episode();
        }
        self.ensure_segments();

        let observations: Vec<Vec<ObservationVector>> = (0..n_agents)
            .map(|i| (0..n_envs).map(|e| observe(&self.envs[e], i)).collect())
            .collect();

        // Unexpectedness messages come from the hindsight prediction of the
        // current observation, computed before acting.
        let mut ues_parts: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_agents];
        if self.cfg.scheme.uses_ues() {
            for i in 0..n_agents {
                let uem = self.uems[i].as_ref().expect("ues scheme without uem");
                for e in 0..n_envs {
                    let inbox = self.buffers[e].uem_inbox(i, t);
                    let prev = self.prev_obs[i][e].as_ref().map(|o| o.as_slice().to_vec());
                    let (mut part, _x) = uem.message_for_step(
                        prev.as_deref(),
                        self.prev_action[i][e],
                        &inbox,
                        observations[i][e].as_slice(),
                    );
                    if self.cfg.force_zero_ues {
                        part.iter_mut().for_each(|v| *v = 0.0);
                    }
                    self.uem_samples[i].push(UemSample {
                        prev_obs: prev,
                        prev_action: self.prev_action[i][e],
                        uem_inbox: inbox,
                        curr_obs: observations[i][e].as_slice().to_vec(),
                    });
                    ues_parts[i].push(part);
                }
            }
        }

        // Act.
        let mut joint_actions: Vec<Vec<Action>> = vec![Vec::with_capacity(n_agents); n_envs];
        let mut bits: Vec<Vec<Vec<u8>>> = vec![Vec::with_capacity(n_envs); n_agents];
        for i in 0..n_agents {
            for e in 0..n_envs {
                let mut input =
                    Vec::with_capacity(OBS_LEN + n_agents * self.cfg.message_len());
                input.extend_from_slice(observations[i][e].as_slice());
                input.extend_from_slice(&self.buffers[e].policy_inbox(i, t));
                let out = self.agents[i].act(e, &input);
                joint_actions[e].push(Action::from_index(out.action));
                bits[i].push(out.bits);
            }
        }

        // Publish this step's messages (message schemes only).
        if self.cfg.message_len() > 0 && self.cfg.scheme != Scheme::Ia2c {
            for e in 0..n_envs {
                let dead_zeros = vec![0.0; self.cfg.ues_channels];
                let msgs: Vec<MessageVector> = (0..n_agents)
                    .map(|i| {
                        // Non-ues schemes may still carry dead zero slots.
                        let ues = if self.cfg.scheme.uses_ues() {
                            ues_parts[i][e].as_slice()
                        } else {
                            dead_zeros.as_slice()
                        };
                        assemble_message(self.cfg.scheme, &bits[i][e], ues)
                            .expect("message scheme must produce a message")
                    })
                    .collect();
                self.buffers[e].publish(t, msgs)?;
            }
        }

        // Step the world.
        let mut episode_done = false;
        for e in 0..n_envs {
            let outcome = self.envs[e].step(&joint_actions[e])?;
            episode_done = outcome.episode_done;
            self.total_deliveries += outcome.deliveries_this_step as u64;
            self.window_deliveries += outcome.deliveries_this_step as u64;
            for i in 0..n_agents {
                self.agents[i].record_outcome(e, outcome.rewards[i], outcome.episode_done);
            }
        }
        self.env_step += n_envs as u64;

        // Trackers for the next hindsight prediction.
        for i in 0..n_agents {
            for e in 0..n_envs {
                self.prev_obs[i][e] = Some(observations[i][e].clone());
                self.prev_action[i][e] = Some(joint_actions[e][i].index());
            }
        }

        self.episode_t += 1;

        let segment_full = self.episode_t as usize % self.cfg.a2c.n_steps == 0;
        if train_mode && (segment_full || episode_done) {
            self.run_updates()?;
        } else if !train_mode && episode_done {
            for agent in &mut self.agents {
                agent.discard_segment();
            }
            for samples in &mut self.uem_samples {
                samples.clear();
            }
        }

        if episode_done {
            self.episodes_completed += n_envs as u64;
            self.window_episodes += n_envs as u64;
            self.episode_t = 0;
        }
        Ok(())
    }

    fn run_updates(&mut self) -> Result<(), HarnessError> {
        let n_envs = self.envs.len();
        let n_agents = self.cfg.n_agents;
        let t = self.episode_t;
        for i in 0..n_agents {
            let boots: Vec<Vec<f64>> = (0..n_envs)
                .map(|e| {
                    let obs = observe(&self.envs[e], i);
                    let mut input = Vec::with_capacity(self.cfg.policy_input_len());
                    input.extend_from_slice(obs.as_slice());
                    input.extend_from_slice(&self.buffers[e].policy_inbox(i, t));
                    input
                })
                .collect();
            let report = self.agents[i]
                .update(&boots, &self.cfg.a2c)
                .map_err(|e: UpdateError| HarnessError::NanAbort {
                    env_step: self.env_step,
                    detail: format!("agent {i}: {e}"),
                })?;
            self.window.actor.0 += report.actor_loss;
            self.window.actor.1 += 1;
            self.window.critic.0 += report.critic_loss;
            self.window.critic.1 += 1;

            if let Some(uem) = self.uems[i].as_mut() {
                let opt = OptimizerConfig {
                    learning_rate: self.cfg.uem_learning_rate,
                    ..self.cfg.a2c.optimizer
                };
                let losses = uem
                    .update(&self.uem_samples[i], &opt)
                    .map_err(|e: UemError| HarnessError::NanAbort {
                        env_step: self.env_step,
                        detail: format!("uem {i}: {e}"),
                    })?;
                self.window.pred.0 += losses.pred;
                self.window.pred.1 += 1;
                self.window.enc.0 += losses.enc;
                self.window.enc.1 += 1;
                self.uem_samples[i].clear();
            }
        }
        self.updates_performed += 1;
        Ok(())
    }

    fn take_metrics_record(&mut self) -> MetricsRecord {
        let rec = MetricsRecord {
            env_step: self.env_step,
            episodes_completed: self.episodes_completed,
            deliveries_per_episode: self.cumulative_deliveries_per_episode(),
            actor_loss: LossWindow::mean(self.window.actor),
            critic_loss: LossWindow::mean(self.window.critic),
            pred_loss: LossWindow::mean(self.window.pred),
            enc_loss: LossWindow::mean(self.window.enc),
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        self.window = LossWindow::new();
        rec
    }

    fn window_deliveries_per_episode(&self) -> Option<f64> {
        (self.window_episodes > 0)
            .then(|| self.window_deliveries as f64 / self.window_episodes as f64)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), HarnessError> {
        save_checkpoint(path, &self.cfg, &self.agents, &self.uems)?;
        Ok(())
    }

    pub fn load_checkpoint_params(&mut self, path: &Path) -> Result<(), HarnessError> {
        let ck = checkpoint::load(path)?;
        let expected = self.cfg.fingerprint();
        if ck.meta != expected {
            return Err(HarnessError::Checkpoint(CheckpointError::Mismatch(
                format!("fingerprint {:?} does not match config {expected:?}", ck.meta),
            )));
        }
        for (i, agent) in self.agents.iter_mut().enumerate() {
            ck.set(&format!("agent{i}/actor"))?
                .apply_to(&mut agent.actor.params)?;
            ck.set(&format!("agent{i}/critic"))?
                .apply_to(&mut agent.critic.online)?;
            ck.set(&format!("agent{i}/critic_target"))?
                .apply_to(&mut agent.critic.target)?;
            if let Some(uem) = self.uems[i].as_mut() {
                ck.set(&format!("agent{i}/uem_g"))?
                    .apply_to(&mut uem.projection)?;
                ck.set(&format!("agent{i}/uem_f"))?
                    .apply_to(&mut uem.dynamics)?;
                ck.set(&format!("agent{i}/uem_ae"))?
                    .apply_to(&mut uem.autoencoder)?;
            }
        }
        Ok(())
    }

    /// Frozen-parameter rollouts; per-episode deliveries for `episodes`
    /// episodes (rounded up to whole batches, then truncated).
    pub fn evaluate_episodes(&mut self, episodes: u64) -> Result<Vec<f64>, HarnessError> {
        let n_envs = self.envs.len() as u64;
        let rounds = episodes.div_ceil(n_envs);
        let mut per_episode = Vec::with_capacity((rounds * n_envs) as usize);
        for _ in 0..rounds {
            for _ in 0..EPISODE_LEN {
                self.play_round(false)?;
            }
            for env in &self.envs {
                per_episode.push(env.delivered_count as f64);
            }
        }
        per_episode.truncate(episodes as usize);
        Ok(per_episode)
    }
}

/// Writes every parameter set of every agent (and its unexpectedness
/// module, when present) under the config's architecture fingerprint.
pub fn save_checkpoint(
    path: &Path,
    cfg: &ExperimentConfig,
    agents: &[A2cAgent],
    uems: &[Option<Uem>],
) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut names: Vec<String> = Vec::new();
    for i in 0..agents.len() {
        names.push(format!("agent{i}/actor"));
        names.push(format!("agent{i}/critic"));
        names.push(format!("agent{i}/critic_target"));
        if uems[i].is_some() {
            names.push(format!("agent{i}/uem_g"));
            names.push(format!("agent{i}/uem_f"));
            names.push(format!("agent{i}/uem_ae"));
        }
    }
    let mut sets = Vec::new();
    let mut k = 0;
    for (i, agent) in agents.iter().enumerate() {
        sets.push((names[k].as_str(), &agent.actor.params));
        sets.push((names[k + 1].as_str(), &agent.critic.online));
        sets.push((names[k + 2].as_str(), &agent.critic.target));
        k += 3;
        if let Some(uem) = uems[i].as_ref() {
            sets.push((names[k].as_str(), &uem.projection));
            sets.push((names[k + 1].as_str(), &uem.dynamics));
            sets.push((names[k + 2].as_str(), &uem.autoencoder));
            k += 3;
        }
    }
    checkpoint::save(path, &cfg.fingerprint(), &sets)
}

/// Config-driven training: parallel envs, segment updates, metrics rows at
/// the flush interval, periodic and best-window checkpoints.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutput, HarnessError> {
    let mut runner = Runner::new(cfg.clone())?;
    let mut writer = match &cfg.metrics_path {
        Some(path) => Some(MetricsWriter::create(
            path,
            &RunTags {
                scheme: cfg.scheme.name().into(),
                seed: cfg.seed,
                layout: cfg.layout.name().into(),
            },
        )?),
        None => None,
    };

    let best_path = cfg
        .checkpoint_path
        .as_ref()
        .map(|p| PathBuf::from(format!("{}.best", p.display())));
    let mut best = f64::NEG_INFINITY;
    let mut best_step = 0;
    let mut next_flush = cfg.metric_flush_interval;
    let mut next_checkpoint = cfg.checkpoint_interval;

    let result = (|| -> Result<(), HarnessError> {
        while runner.env_step < cfg.total_env_steps {
            runner.play_round(true)?;

            if runner.env_step >= next_flush {
                // Track the best window before the counters reset.
                if let Some(w) = runner.window_deliveries_per_episode() {
                    if w > best {
                        best = w;
                        best_step = runner.env_step;
                        if let Some(p) = &best_path {
                            runner.save_checkpoint(p)?;
                        }
                    }
                }
                runner.window_deliveries = 0;
                runner.window_episodes = 0;
                let rec = runner.take_metrics_record();
                if let Some(w) = writer.as_mut() {
                    w.write(&rec)?;
                }
                next_flush += cfg.metric_flush_interval;
            }
            if cfg.checkpoint_interval > 0 && runner.env_step >= next_checkpoint {
                if let Some(p) = &cfg.checkpoint_path {
                    runner.save_checkpoint(p)?;
                }
                next_checkpoint += cfg.checkpoint_interval;
            }
        }
        Ok(())
    })();

    if let Err(err) = result {
        if let (HarnessError::NanAbort { env_step, detail }, Some(mpath)) = (&err, &cfg.metrics_path)
        {
            let dump = format!(
                "diverged at env_step {env_step}\n{detail}\nepisodes {}\n",
                runner.episodes_completed
            );
            let _ = std::fs::write(format!("{}.nan_dump.txt", mpath.display()), dump);
        }
        return Err(err);
    }

    if let Some(p) = &cfg.checkpoint_path {
        runner.save_checkpoint(p)?;
    }

    Ok(TrainOutput {
        env_steps: runner.env_step,
        episodes_completed: runner.episodes_completed,
        final_deliveries_per_episode: runner.cumulative_deliveries_per_episode(),
        best_window_deliveries: if best.is_finite() { best } else { 0.0 },
        best_window_step: best_step,
        updates_performed: runner.updates_performed,
        checkpoint_path: cfg.checkpoint_path.clone(),
        best_checkpoint_path: best_path,
        wall_clock_s: runner.started.elapsed().as_secs_f64(),
    })
}

/// Frozen evaluation of a checkpoint on a layout variant.
pub fn evaluate(
    checkpoint_path: &Path,
    variant: crate::env::LayoutVariant,
    episodes: u64,
    seed: u64,
) -> Result<EvalOutput, HarnessError> {
    let ck = checkpoint::load(checkpoint_path)?;
    let mut cfg = ExperimentConfig::from_fingerprint(&ck.meta)?;
    cfg.layout = variant;
    cfg.seed = seed;
    let mut runner = Runner::new(cfg)?;
    runner.load_checkpoint_params(checkpoint_path)?;
    let per_episode = runner.evaluate_episodes(episodes)?;
    Ok(summarize_eval(per_episode))
}

fn summarize_eval(per_episode: Vec<f64>) -> EvalOutput {
    let n = per_episode.len().max(1) as f64;
    let mean = per_episode.iter().sum::<f64>() / n;
    let var = per_episode
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / n;
    EvalOutput {
        episodes: per_episode.len() as u64,
        mean_deliveries: mean,
        std_deliveries: var.sqrt(),
        per_episode,
    }
}

/// Few-shot transfer: loads a training checkpoint (parameters, frozen
/// projection and optimizer moments included), switches the layout, and
/// fine-tunes for `batches` gradient updates, each over one full episode
/// of every parallel environment. `batches = 0` is pure zero-shot
/// evaluation over `zero_shot_episodes`.
pub fn transfer(
    checkpoint_path: &Path,
    variant: crate::env::LayoutVariant,
    batches: u64,
    seed: u64,
    zero_shot_episodes: u64,
) -> Result<TransferOutput, HarnessError> {
    let ck = checkpoint::load(checkpoint_path)?;
    let mut cfg = ExperimentConfig::from_fingerprint(&ck.meta)?;
    cfg.layout = variant;
    cfg.seed = seed;

    if batches == 0 {
        let mut runner = Runner::new(cfg)?;
        runner.load_checkpoint_params(checkpoint_path)?;
        let per_episode = runner.evaluate_episodes(zero_shot_episodes)?;
        let summary = summarize_eval(per_episode);
        return Ok(TransferOutput {
            updates_performed: 0,
            episodes: summary.episodes,
            deliveries_per_episode: summary.mean_deliveries,
            env_steps: summary.episodes * EPISODE_LEN as u64,
            zero_shot: true,
        });
    }

    // One gradient update per batch of full episodes.
    cfg.a2c.n_steps = EPISODE_LEN as usize;
    let mut runner = Runner::new(cfg)?;
    runner.load_checkpoint_params(checkpoint_path)?;
    for _ in 0..batches {
        for _ in 0..EPISODE_LEN {
            runner.play_round(true)?;
        }
    }
    Ok(TransferOutput {
        updates_performed: runner.updates_performed,
        episodes: runner.episodes_completed,
        deliveries_per_episode: runner.cumulative_deliveries_per_episode(),
        env_steps: runner.env_step,
        zero_shot: false,
    })
}
