//! DQN threshold controller.
//!
//! Training follows the usual DQN recipe (uniform replay, periodically
//! synchronized target network, ε-greedy exploration) with two twists: the
//! action may only change every `l` steps, and the Q-network takes its
//! gradient step only when an episode ends.

mod replay;

pub use replay::{ReplayMemory, Transition};

use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, EnvState, ThresholdEnv};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Mlp, Optimizer, OutputActivation};
use crate::scorer::ScoredWindow;
use crate::Rng;

/// DQN hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Multiplicative decay applied once per episode.
    pub epsilon_decay: f64,
    /// Action-hold period `l`; set from the experiment's top-level `l`.
    #[serde(skip)]
    pub l: usize,
    /// Copy the Q-network into the target network every this many episodes.
    pub target_sync: usize,
    pub minibatch: usize,
    pub replay_capacity: usize,
    pub episodes: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Gradient steps taken at the end of each episode.
    pub updates_per_episode: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_min: 0.01,
            epsilon_decay: 0.999,
            l: 1,
            target_sync: 10,
            minibatch: 32,
            replay_capacity: 10_000,
            episodes: 20_000,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            updates_per_episode: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.epsilon_min > 0.0
            && self.epsilon_min <= self.epsilon_start
            && self.epsilon_start <= 1.0)
        {
            return bad("need 0 < epsilon_min <= epsilon_start <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must lie in (0, 1]");
        }
        if self.l < 1 {
            return bad("action hold l must be at least 1");
        }
        if self.target_sync == 0 || self.minibatch == 0 || self.episodes == 0 {
            return bad("target_sync, minibatch and episodes must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![EnvState::DIM];
        sizes.extend(&self.hidden);
        sizes.push(Action::ALL.len());
        sizes
    }
}

/// A trained Q-network used greedily.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    q_net: Mlp,
}

impl Policy {
    pub fn new(q_net: Mlp) -> Result<Self> {
        if q_net.input_len() != EnvState::DIM || q_net.output_len() != 2 {
            return Err(Error::invalid(format!(
                "Q-network must map {} inputs to 2 outputs, got {:?}",
                EnvState::DIM,
                q_net.sizes()
            )));
        }
        Ok(Self { q_net })
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q_net
    }

    pub fn q_values(&self, state: &EnvState) -> Result<Vec<f64>> {
        self.q_net.predict(&state.to_array())
    }

    pub fn greedy(&self, state: &EnvState) -> Result<Action> {
        Ok(greedy(&self.q_values(state)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.q_net.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(Mlp::load(path)?)
    }
}

/// Argmax over the two Q-values; ties go to the active action.
pub fn greedy(q: &[f64]) -> Action {
    if q[1] > q[0] {
        Action::Passive
    } else {
        Action::Active
    }
}

/// ε-greedy choice on steps where `t % l == 0`; otherwise the previous
/// action is kept and the network is not evaluated.
pub fn select_action(
    q_net: &Mlp,
    state: &EnvState,
    t: usize,
    epsilon: f64,
    l: usize,
    previous: Action,
    rng: &mut Rng,
) -> Result<Action> {
    if l == 0 {
        return Err(Error::invalid("action hold l must be at least 1"));
    }
    if !t.is_multiple_of(l) {
        return Ok(previous);
    }
    if rng.gen::<f64>() < epsilon {
        return Ok(if rng.gen::<bool>() {
            Action::Passive
        } else {
            Action::Active
        });
    }
    Ok(greedy(&q_net.predict(&state.to_array())?))
}

/// Bootstrapped targets: `r` for terminal transitions, otherwise
/// `r + γ · max_a′ Q̂(s′, a′)`.
pub fn compute_targets(batch: &[&Transition], target: &Mlp, gamma: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.reward);
            }
            let q = target.predict(&t.next_state.to_array())?;
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.reward + gamma * best)
        })
        .collect()
}

/// Per-episode training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub total_reward: f64,
    pub epsilon: f64,
}

/// What happened during training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    pub transitions_stored: usize,
    pub gradient_updates: usize,
    /// Episodes (1-based) after which the target network was refreshed.
    pub target_syncs: Vec<usize>,
}

impl TrainingLog {
    /// CSV with columns `episode,total_reward,epsilon`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "total_reward", "epsilon"])?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                e.total_reward.to_string(),
                e.epsilon.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mutable training state: online and target networks, optimizer, replay.
pub struct DqnTrainer {
    cfg: AgentConfig,
    env_cfg: EnvConfig,
    q_net: Mlp,
    target: Mlp,
    optimizer: Optimizer,
    memory: ReplayMemory,
    epsilon: f64,
    log: TrainingLog,
}

impl DqnTrainer {
    pub fn new(cfg: &AgentConfig, env_cfg: EnvConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        let q_net = Mlp::new(&cfg.layer_sizes(), OutputActivation::Identity, rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            env_cfg,
            target: q_net.clone(),
            q_net,
            optimizer: Optimizer::adam(cfg.learning_rate)?,
            memory: ReplayMemory::new(cfg.replay_capacity)?,
            epsilon: cfg.epsilon_start,
            log: TrainingLog::default(),
        })
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q_net
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    /// Runs one episode over `segment`, then performs the end-of-episode
    /// update, ε decay and (on schedule) the target sync. Returns the actions
    /// taken, in step order.
    pub fn run_episode(&mut self, segment: &[ScoredWindow], rng: &mut Rng) -> Result<Vec<Action>> {
        let episode = self.log.episodes.len() + 1;
        let mut env = ThresholdEnv::new(segment, self.env_cfg)?;
        let mut state = env.reset()?;
        let mut action = Action::Active;
        let mut total = 0.0;
        let mut actions = Vec::with_capacity(env.episode_len());
        let mut t = 0;
        while !env.is_terminal() {
            action = select_action(
                &self.q_net,
                &state,
                t,
                self.epsilon,
                self.cfg.l,
                action,
                rng,
            )?;
            let out = env.step(action)?;
            self.memory.push(Transition {
                state,
                action,
                reward: out.reward,
                next_state: out.next_state,
                terminal: out.terminal,
            });
            self.log.transitions_stored += 1;
            total += out.reward;
            actions.push(action);
            state = out.next_state;
            t += 1;
        }

        for _ in 0..self.cfg.updates_per_episode {
            self.update(rng).map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("episode {episode}: {msg}")),
                other => other,
            })?;
        }

        self.log.episodes.push(EpisodeLog {
            episode,
            total_reward: total,
            epsilon: self.epsilon,
        });
        self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_min);
        if episode.is_multiple_of(self.cfg.target_sync) {
            self.target.copy_from(&self.q_net)?;
            self.log.target_syncs.push(episode);
        }
        Ok(actions)
    }

    /// One minibatch step on the mean of `(y − Q(s, a))²`. Skipped when the
    /// memory is empty.
    fn update(&mut self, rng: &mut Rng) -> Result<()> {
        if self.memory.is_empty() {
            return Ok(());
        }
        let batch = self.memory.sample(self.cfg.minibatch, rng);
        let targets = compute_targets(&batch, &self.target, self.cfg.gamma)?;
        let mut grads = Gradients::zeros_like(&self.q_net);
        let scale = 2.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(&targets) {
            let (q, cache) = self.q_net.forward(&t.state.to_array())?;
            let a = t.action.index();
            let diff = q[a] - y;
            loss += diff * diff;
            let mut err = [0.0; 2];
            err[a] = scale * diff;
            self.q_net.accumulate_backward(&cache, &err, &mut grads)?;
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("Q-network loss is {loss}")));
        }
        self.optimizer.apply(&mut self.q_net, &grads)?;
        self.log.gradient_updates += 1;
        Ok(())
    }

    pub fn into_parts(self) -> (Policy, TrainingLog) {
        (Policy { q_net: self.q_net }, self.log)
    }
}

/// Trains for `cfg.episodes` episodes, each a full pass over `segment`.
pub fn train(
    segment: &[ScoredWindow],
    cfg: &AgentConfig,
    env_cfg: EnvConfig,
    rng: &mut Rng,
) -> Result<(Policy, TrainingLog)> {
    let mut trainer = DqnTrainer::new(cfg, env_cfg, rng)?;
    for episode in 0..cfg.episodes {
        trainer.run_episode(segment, rng)?;
        if log::log_enabled!(log::Level::Debug) && (episode + 1) % 100 == 0 {
            let last = trainer.log.episodes.last().unwrap();
            log::debug!(
                "episode {}: reward {:.2}, epsilon {:.3}",
                last.episode,
                last.total_reward,
                last.epsilon
            );
        }
    }
    Ok(trainer.into_parts())
}

/// Per-window output of greedy inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub thresholds: Vec<f64>,
    pub predictions: Vec<u8>,
}

/// Greedy detection over `windows` with `l = 1`. The first `k` windows get
/// the passive threshold; labels of classified windows feed back into the
/// state one step later.
pub fn infer(policy: &Policy, windows: &[ScoredWindow], env_cfg: EnvConfig) -> Result<Inference> {
    let mut env = ThresholdEnv::new(windows, env_cfg)?;
    let mut state = env.reset()?;
    let mut thresholds = Vec::with_capacity(windows.len());
    let mut predictions = Vec::with_capacity(windows.len());
    for r in env.recent() {
        thresholds.push(Action::Passive.threshold());
        predictions.push(r.prediction);
    }
    while !env.is_terminal() {
        let action = policy.greedy(&state)?;
        let out = env.step(action)?;
        thresholds.push(action.threshold());
        predictions.push(out.prediction);
        state = out.next_state;
    }
    Ok(Inference {
        thresholds,
        predictions,
    })
}

#[cfg(test)]
mod tests;
