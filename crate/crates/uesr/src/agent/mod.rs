//! Per-agent actor-critic training: recurrent policy with the action head
//! and optional per-bit message heads sampled as separate channels, n-step
//! returns bootstrapped from a target critic, and one Adam step per network
//! per segment.
//!
//! The agent records its forward passes on a tape while acting, so the
//! update backpropagates through exactly the computations that produced the
//! behavior; hidden state carries across segments but gradients stop at
//! segment boundaries.

pub mod nets;

use thiserror::Error;

use crate::comm::MessageVector;
use crate::nn::params::OptimizerConfig;
use crate::nn::sample::sample_categorical;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::rng::Rng;

pub use nets::{ActorNetwork, CriticNetwork, HIDDEN, N_ACTIONS};

/// Communication scheme: which message channels exist and how they are
/// produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Independent A2C, no messages.
    Ia2c,
    /// Reward-trained binary bits only.
    Reward,
    /// Unexpectedness encoding only.
    Ues,
    /// Reward bits and unexpectedness encoding concatenated.
    UesR,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ia2c => "ia2c",
            Scheme::Reward => "m_r",
            Scheme::Ues => "m_ues",
            Scheme::UesR => "m_ues_r",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ia2c" => Some(Scheme::Ia2c),
            "m_r" => Some(Scheme::Reward),
            "m_ues" => Some(Scheme::Ues),
            "m_ues_r" => Some(Scheme::UesR),
            _ => None,
        }
    }

    /// (reward_len, ues_len); every messaging scheme totals 10.
    pub fn default_split(self) -> (usize, usize) {
        match self {
            Scheme::Ia2c => (0, 0),
            Scheme::Reward => (10, 0),
            Scheme::Ues => (0, 10),
            Scheme::UesR => (5, 5),
        }
    }

    pub fn uses_ues(self) -> bool {
        matches!(self, Scheme::Ues | Scheme::UesR)
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Scheme::Ues => 0.001,
            _ => 0.0005,
        }
    }

    pub fn default_entropy_coef(self) -> f64 {
        match self {
            Scheme::UesR => 0.05,
            _ => 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2cConfig {
    pub scheme: Scheme,
    pub optimizer: OptimizerConfig,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub n_steps: usize,
    pub batch_envs: usize,
}

impl A2cConfig {
    pub fn defaults_for(scheme: Scheme) -> Self {
        A2cConfig {
            scheme,
            optimizer: OptimizerConfig::with_lr(scheme.default_learning_rate()),
            entropy_coef: scheme.default_entropy_coef(),
            gamma: 0.99,
            n_steps: 5,
            batch_envs: 10,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.optimizer.validate()?;
        if self.entropy_coef < 0.0 {
            return Err(format!("entropy_coef must be >= 0, got {}", self.entropy_coef));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if self.n_steps == 0 || self.batch_envs == 0 {
            return Err("n_steps and batch_envs must be positive".into());
        }
        Ok(())
    }
}

/// n-step discounted returns for one environment's reward row, bootstrapped
/// with a (target-critic) value after the last step and truncated at
/// episode ends: a done step contributes its reward exactly, with nothing
/// discounted in from beyond it.
pub fn n_step_returns(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len());
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = if dones[t] {
            rewards[t]
        } else {
            rewards[t] + gamma * acc
        };
        out[t] = acc;
    }
    out
}

/// One step of one environment's recorded trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub input: Vec<f64>,
    pub action: usize,
    pub bits: Vec<u8>,
    /// Per-channel log-probabilities: action first, then each bit.
    pub log_probs: Vec<f64>,
    /// Per-channel entropies, same order.
    pub entropies: Vec<f64>,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Recorded rollout segment across all parallel environments.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    /// steps[env][step].
    pub steps: Vec<Vec<TrajectoryStep>>,
    /// Target-critic value of the post-segment input, one per environment.
    pub bootstrap: Vec<f64>,
}

/// Per-environment n-step returns for a whole batch.
pub fn compute_returns(batch: &TrajectoryBatch, gamma: f64) -> Vec<Vec<f64>> {
    batch
        .steps
        .iter()
        .zip(&batch.bootstrap)
        .map(|(row, &boot)| {
            let rewards: Vec<f64> = row.iter().map(|s| s.reward).collect();
            let dones: Vec<bool> = row.iter().map(|s| s.done).collect();
            n_step_returns(&rewards, &dones, boot, gamma)
        })
        .collect()
}

/// Builds the outgoing message for a scheme: reward bits first, then the
/// unexpectedness part. Returns `None` for the no-message scheme.
///
/// Panics if the parts disagree with the scheme (bits present for a pure
/// UES scheme, a live UES part for a pure reward scheme, and so on).
pub fn assemble_message(scheme: Scheme, reward_bits: &[u8], ues_part: &[f64]) -> Option<MessageVector> {
    match scheme {
        Scheme::Ia2c => {
            assert!(
                reward_bits.is_empty() && ues_part.is_empty(),
                "no-message scheme given message parts"
            );
            return None;
        }
        Scheme::Reward => {
            assert!(!reward_bits.is_empty(), "reward scheme needs bits");
            assert!(
                ues_part.iter().all(|&v| v == 0.0),
                "reward scheme cannot carry a live ues part"
            );
        }
        Scheme::Ues => {
            assert!(reward_bits.is_empty(), "ues scheme has no reward bits");
            assert!(!ues_part.is_empty(), "ues scheme needs a ues part");
        }
        Scheme::UesR => {
            assert!(
                !reward_bits.is_empty() && !ues_part.is_empty(),
                "combined scheme needs both parts"
            );
        }
    }

    let mut values: Vec<f64> = reward_bits.iter().map(|&b| b as f64).collect();
    values.extend_from_slice(ues_part);
    Some(MessageVector::new(values, reward_bits.len(), ues_part.len()))
}

/// Everything sampled in one act call.
#[derive(Debug, Clone)]
pub struct ActOutput {
    pub action: usize,
    pub bits: Vec<u8>,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_entropy: f64,
}

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("non-finite loss (actor {actor}, critic {critic}); run diverged")]
    NonFiniteLoss { actor: f64, critic: f64 },
}

struct StepRecord {
    input: Vec<f64>,
    action: usize,
    bits: Vec<u8>,
    logp_vars: Vec<Var>,
    ent_vars: Vec<Var>,
    log_probs: Vec<f64>,
    entropies: Vec<f64>,
    value_var: Var,
    value: f64,
    reward: f64,
    done: bool,
    outcome_recorded: bool,
}

struct Segment {
    actor_tape: Tape,
    critic_tape: Tape,
    actor_vars: nets::ActorVars,
    critic_vars: nets::CriticVars,
    hidden_vars: Vec<Var>,
    records: Vec<Vec<StepRecord>>,
}

/// One learning agent: actor, critic pair (online + target), per-environment
/// recurrent state, and the recording machinery for segment updates.
pub struct A2cAgent {
    pub actor: ActorNetwork,
    pub critic: CriticNetwork,
    n_envs: usize,
    hidden: Vec<Tensor>,
    sample_rng: Rng,
    segment: Option<Segment>,
}

impl A2cAgent {
    pub fn new(input_len: usize, n_bits: usize, n_envs: usize, seed: u64) -> Self {
        let actor = ActorNetwork::new(input_len, n_bits, seed ^ crate::rng::fnv1a(b"actor"));
        let critic = CriticNetwork::new(input_len, seed ^ crate::rng::fnv1a(b"critic"));
        A2cAgent {
            actor,
            critic,
            n_envs,
            hidden: vec![ActorNetwork::initial_hidden(); n_envs],
            sample_rng: Rng::derive(seed, "sample"),
            segment: None,
        }
    }

    pub fn n_envs(&self) -> usize {
        self.n_envs
    }

    pub fn input_len(&self) -> usize {
        self.actor.input_len()
    }

    /// Starts recording a new segment; parameters are snapshotted onto
    /// fresh tapes and hidden state continues from its stored values.
    pub fn begin_segment(&mut self) {
        assert!(self.segment.is_none(), "segment already active");
        let mut actor_tape = Tape::new();
        let actor_vars = self.actor.vars(&mut actor_tape);
        let hidden_vars = self
            .hidden
            .iter()
            .map(|h| actor_tape.leaf(h.clone()))
            .collect();
        let mut critic_tape = Tape::new();
        let critic_vars = CriticNetwork::vars(&mut critic_tape, &self.critic.online);
        self.segment = Some(Segment {
            actor_tape,
            critic_tape,
            actor_vars,
            critic_vars,
            hidden_vars,
            records: (0..self.n_envs).map(|_| Vec::new()).collect(),
        });
    }

    pub fn segment_active(&self) -> bool {
        self.segment.is_some()
    }

    /// Samples the action and message bits for one environment, advancing
    /// the recurrent state and recording the forward pass.
    pub fn act(&mut self, env: usize, input: &[f64]) -> ActOutput {
        let seg = self.segment.as_mut().expect("no active segment");
        let tape = &mut seg.actor_tape;
        let input_var = tape.leaf_slice(input);
        let (action_logits, bit_logits, h_new) =
            self.actor
                .forward_step(tape, &seg.actor_vars, input_var, seg.hidden_vars[env]);
        seg.hidden_vars[env] = h_new;

        let mut logp_vars = Vec::with_capacity(1 + bit_logits.len());
        let mut ent_vars = Vec::with_capacity(1 + bit_logits.len());
        let mut log_probs = Vec::with_capacity(1 + bit_logits.len());
        let mut entropies = Vec::with_capacity(1 + bit_logits.len());

        let probs = tape.softmax(action_logits);
        let draw = sample_categorical(tape.value(probs).data(), &mut self.sample_rng);
        let lsm = tape.log_softmax(action_logits);
        let lp = tape.pick(lsm, draw.index);
        let ent = tape.entropy_from_logits(action_logits);
        logp_vars.push(lp);
        ent_vars.push(ent);
        log_probs.push(tape.value(lp).item());
        entropies.push(tape.value(ent).item());
        let action = draw.index;

        let mut bits = Vec::with_capacity(bit_logits.len());
        for bl in bit_logits {
            let probs = tape.softmax(bl);
            let draw = sample_categorical(tape.value(probs).data(), &mut self.sample_rng);
            bits.push(draw.index as u8);
            let lsm = tape.log_softmax(bl);
            let lp = tape.pick(lsm, draw.index);
            let ent = tape.entropy_from_logits(bl);
            logp_vars.push(lp);
            ent_vars.push(ent);
            log_probs.push(tape.value(lp).item());
            entropies.push(tape.value(ent).item());
        }

        let ctape = &mut seg.critic_tape;
        let cinput = ctape.leaf_slice(input);
        let value_var = CriticNetwork::forward(ctape, &seg.critic_vars, cinput);
        let value = ctape.value(value_var).item();

        seg.records[env].push(StepRecord {
            input: input.to_vec(),
            action,
            bits: bits.clone(),
            logp_vars,
            ent_vars,
            log_probs: log_probs.clone(),
            entropies: entropies.clone(),
            value_var,
            value,
            reward: 0.0,
            done: false,
            outcome_recorded: false,
        });

        ActOutput {
            action,
            bits,
            log_probs,
            entropies,
        }
    }

    /// Attaches the environment outcome to the most recent act call.
    pub fn record_outcome(&mut self, env: usize, reward: f64, done: bool) {
        let seg = self.segment.as_mut().expect("no active segment");
        let rec = seg.records[env]
            .last_mut()
            .expect("record_outcome before act");
        assert!(!rec.outcome_recorded, "outcome already recorded");
        rec.reward = reward;
        rec.done = done;
        rec.outcome_recorded = true;
    }

    /// Snapshot of the recorded segment as plain data, with bootstrap
    /// values from the target critic on the post-segment inputs.
    pub fn trajectory_batch(&self, bootstrap_inputs: &[Vec<f64>]) -> TrajectoryBatch {
        let seg = self.segment.as_ref().expect("no active segment");
        assert_eq!(bootstrap_inputs.len(), self.n_envs);
        let steps = seg
            .records
            .iter()
            .map(|row| {
                row.iter()
                    .map(|r| {
                        assert!(r.outcome_recorded, "missing outcome for a step");
                        TrajectoryStep {
                            input: r.input.clone(),
                            action: r.action,
                            bits: r.bits.clone(),
                            log_probs: r.log_probs.clone(),
                            entropies: r.entropies.clone(),
                            reward: r.reward,
                            value: r.value,
                            done: r.done,
                        }
                    })
                    .collect()
            })
            .collect();
        let bootstrap = bootstrap_inputs
            .iter()
            .map(|input| self.critic.evaluate(input, true))
            .collect();
        TrajectoryBatch { steps, bootstrap }
    }

    /// One A2C update over the recorded segment.
    ///
    /// Actor loss: -(mean over steps of joint log-prob times advantage)
    /// minus the entropy bonus; the joint log-prob is the sum over channels
    /// and the advantage (return minus online value) is a constant. Critic
    /// loss: mean squared (return - value). One Adam step per network, then
    /// a soft target update.
    pub fn update(
        &mut self,
        bootstrap_inputs: &[Vec<f64>],
        cfg: &A2cConfig,
    ) -> Result<UpdateReport, UpdateError> {
        let batch = self.trajectory_batch(bootstrap_inputs);
        let returns = compute_returns(&batch, cfg.gamma);

        let mut seg = self.segment.take().expect("no active segment");
        let n_samples: usize = batch.steps.iter().map(|r| r.len()).sum();
        assert!(n_samples > 0, "empty segment");
        let inv = 1.0 / n_samples as f64;

        let mut entropy_sum = 0.0;

        // Actor loss.
        let mut parts: Vec<Var> = Vec::with_capacity(2 * n_samples);
        for (e, row) in seg.records.iter().enumerate() {
            for (t, rec) in row.iter().enumerate() {
                let advantage = returns[e][t] - rec.value;
                let tape = &mut seg.actor_tape;
                let joint_logp = tape.add_n(&rec.logp_vars);
                parts.push(tape.scale(joint_logp, -advantage));
                let joint_ent = tape.add_n(&rec.ent_vars);
                parts.push(tape.scale(joint_ent, -cfg.entropy_coef));
                entropy_sum += rec.entropies.iter().sum::<f64>();
            }
        }
        let actor_loss_var = {
            let tape = &mut seg.actor_tape;
            let total = tape.add_n(&parts);
            tape.scale(total, inv)
        };
        let actor_loss = seg.actor_tape.value(actor_loss_var).item();

        // Critic loss.
        let mut cparts: Vec<Var> = Vec::with_capacity(n_samples);
        for (e, row) in seg.records.iter().enumerate() {
            for (t, rec) in row.iter().enumerate() {
                let tape = &mut seg.critic_tape;
                let diff = tape.add_scalar(rec.value_var, -returns[e][t]);
                cparts.push(tape.mul(diff, diff));
            }
        }
        let critic_loss_var = {
            let tape = &mut seg.critic_tape;
            let total = tape.add_n(&cparts);
            tape.scale(total, inv)
        };
        let critic_loss = seg.critic_tape.value(critic_loss_var).item();

        if !actor_loss.is_finite() || !critic_loss.is_finite() {
            // Save the hidden state anyway so the caller can dump it.
            self.store_hidden(&seg);
            return Err(UpdateError::NonFiniteLoss {
                actor: actor_loss,
                critic: critic_loss,
            });
        }

        seg.actor_tape.backward(actor_loss_var);
        self.actor.params.zero_grads();
        seg.actor_tape.accumulate_param_grads(&mut self.actor.params);
        self.actor.params.adam_step(&cfg.optimizer);

        seg.critic_tape.backward(critic_loss_var);
        self.critic.online.zero_grads();
        seg.critic_tape
            .accumulate_param_grads(&mut self.critic.online);
        self.critic.online.adam_step(&cfg.optimizer);
        self.critic.soft_update_target(cfg.optimizer.soft_update_tau);

        self.store_hidden(&seg);

        Ok(UpdateReport {
            actor_loss,
            critic_loss,
            mean_entropy: entropy_sum * inv,
        })
    }

    /// Ends the segment without updating (evaluation mode), keeping the
    /// recurrent state.
    pub fn discard_segment(&mut self) {
        let seg = self.segment.take().expect("no active segment");
        self.store_hidden(&seg);
    }

    fn store_hidden(&mut self, seg: &Segment) {
        for (e, &hv) in seg.hidden_vars.iter().enumerate() {
            self.hidden[e] = seg.actor_tape.value(hv).clone();
        }
    }

    /// Zeroes the recurrent state of one environment (episode boundary).
    /// Mid-segment this inserts a fresh zero leaf, which also truncates
    /// backpropagation at the boundary.
    pub fn reset_hidden(&mut self, env: usize) {
        self.hidden[env] = ActorNetwork::initial_hidden();
        if let Some(seg) = self.segment.as_mut() {
            seg.hidden_vars[env] = seg.actor_tape.leaf(ActorNetwork::initial_hidden());
        }
    }

    pub fn reset_all_hidden(&mut self) {
        for e in 0..self.n_envs {
            self.reset_hidden(e);
        }
    }

    pub fn hidden_state(&self, env: usize) -> &Tensor {
        &self.hidden[env]
    }
}

#[cfg(test)]
mod tests;
