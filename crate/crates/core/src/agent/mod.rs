//! Deep Q-learning over the phase-competition network: one agent per intersection, all
//! sharing a single parameter set.

mod checkpoint;
mod observation;
mod replay;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use observation::{build_observation, compute_reward, AgentGeometry, Observation, RewardMode};
pub use replay::{ReplayBuffer, Transition};

use crate::controllers::Controller;
use crate::error::{Error, Result};
use crate::frap::{backward, forward_cached, FrapConfig, MovementFeatures, ParamStore};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator};
use crate::network::RoadNetwork;
use crate::sim::{FlowSpec, SimConfig, SimState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub decay: f64,
    pub minimum: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { initial: 0.8, decay: 0.9995, minimum: 0.01 }
    }
}

impl EpsilonSchedule {
    /// Exploration rate at the given global decision index.
    pub fn value(&self, decision_index: u64) -> f64 {
        let k = i32::try_from(decision_index).unwrap_or(i32::MAX);
        (self.initial * self.decay.powi(k)).max(self.minimum)
    }
}

/// Uniform action with probability `epsilon`, otherwise the lowest-index argmax.
pub fn select_action<R: Rng>(q: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::EmptyQ);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..q.len()));
    }
    Ok(argmax(q))
}

fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub episodes: usize,
    pub gamma: f64,
    /// Train steps between target-network copies.
    pub target_sync_every: u64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub buffer_capacity: usize,
    pub epsilon: EpsilonSchedule,
    pub optimizer: OptimizerKind,
    pub reward: RewardMode,
    pub network: FrapConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            learning_rate: 0.001,
            batch_size: 64,
            episodes: 200,
            gamma: 0.95,
            target_sync_every: 500,
            grad_clip: 5.0,
            buffer_capacity: 50_000,
            epsilon: EpsilonSchedule::default(),
            optimizer: OptimizerKind::Adam,
            reward: RewardMode::AbsPressure,
            network: FrapConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.buffer_capacity
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) {
            return bad("learning rate and gradient clip must be positive".into());
        }
        if self.target_sync_every == 0 {
            return bad("target_sync_every must be positive".into());
        }
        self.network.check()
    }
}

/// Network inputs of intersection `i` (self features, neighbor features).
pub fn network_inputs(
    geoms: &[AgentGeometry],
    obs: &[Observation],
    i: usize,
) -> (Vec<MovementFeatures>, Vec<Vec<MovementFeatures>>) {
    let own = geoms[i].features(&obs[i]);
    let nbs = geoms[i].neighbors.iter().map(|&j| geoms[j].features(&obs[j])).collect();
    (own, nbs)
}

/// Q-vector of intersection `i` given every intersection's observation.
pub fn q_values(
    params: &ParamStore,
    cfg: &FrapConfig,
    geoms: &[AgentGeometry],
    obs: &[Observation],
    i: usize,
) -> Result<Vec<f64>> {
    let (own, nbs) = network_inputs(geoms, obs, i);
    let refs: Vec<&[MovementFeatures]> = nbs.iter().map(Vec::as_slice).collect();
    crate::frap::forward(params, cfg, &geoms[i].layout, &own, &refs)
}

/// `y = r` for terminal transitions, `r + γ max_a Q(next_obs, a; target)` otherwise.
pub fn td_targets(
    batch: &[&Transition],
    target: &ParamStore,
    gamma: f64,
    cfg: &FrapConfig,
    geoms: &[AgentGeometry],
) -> Result<Vec<f64>> {
    target.check(cfg)?;
    batch
        .par_iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.reward);
            }
            let q = q_values(target, cfg, geoms, &t.next_obs, t.intersection)?;
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.reward + gamma * best)
        })
        .collect()
}

/// Adam or plain gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: ParamStore,
    v: ParamStore,
    t: u64,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, like: &ParamStore) -> Self {
        Optimizer { kind, lr, m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }

    pub fn apply(&mut self, params: &mut ParamStore, grads: &ParamStore) {
        match self.kind {
            OptimizerKind::Sgd => params.add_scaled(-self.lr, grads),
            OptimizerKind::Adam => {
                self.t += 1;
                let t = i32::try_from(self.t).unwrap_or(i32::MAX);
                let c1 = 1.0 - Self::BETA1.powi(t);
                let c2 = 1.0 - Self::BETA2.powi(t);
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
                for ((p, g), (m, v)) in tensors {
                    for k in 0..p.data.len() {
                        let gk = g.data[k];
                        m.data[k] = Self::BETA1 * m.data[k] + (1.0 - Self::BETA1) * gk;
                        v.data[k] = Self::BETA2 * v.data[k] + (1.0 - Self::BETA2) * gk * gk;
                        let mh = m.data[k] / c1;
                        let vh = v.data[k] / c2;
                        p.data[k] -= self.lr * mh / (vh.sqrt() + Self::EPS);
                    }
                }
            }
        }
    }
}

/// Samples per parallel gradient chunk. Fixed so the reduction order, and hence the
/// result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Online and target parameters plus optimizer state.
#[derive(Clone, Debug)]
pub struct Learner {
    pub params: ParamStore,
    pub target: ParamStore,
    pub optimizer: Optimizer,
    pub train_steps: u64,
    pub cfg: AgentConfig,
}

impl Learner {
    pub fn new(cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.check()?;
        let params = ParamStore::init(&cfg.network, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Learner::from_params(cfg, params))
    }

    pub fn from_params(cfg: AgentConfig, params: ParamStore) -> Self {
        let optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params);
        Learner { target: sync_target(&params), params, optimizer, train_steps: 0, cfg }
    }

    /// Gradient of the mean squared TD error; returns `(loss, gradients)`.
    pub fn loss_and_gradients(
        &self,
        batch: &[&Transition],
        targets: &[f64],
        geoms: &[AgentGeometry],
    ) -> Result<(f64, ParamStore)> {
        if batch.len() != targets.len() || batch.is_empty() {
            return Err(Error::Shape(format!("{} targets for {} transitions", targets.len(), batch.len())));
        }
        let n = batch.len() as f64;
        let cfg = &self.cfg.network;
        let parts = batch
            .par_chunks(GRAD_CHUNK)
            .zip(targets.par_chunks(GRAD_CHUNK))
            .map(|(ts, ys)| -> Result<(f64, ParamStore)> {
                let mut grads = self.params.zeros_like();
                let mut sq = 0.0;
                for (t, &y) in ts.iter().zip(ys) {
                    let geo = &geoms[t.intersection];
                    let (own, nbs) = network_inputs(geoms, &t.obs, t.intersection);
                    let refs: Vec<&[MovementFeatures]> = nbs.iter().map(Vec::as_slice).collect();
                    let cache = forward_cached(&self.params, cfg, &geo.layout, &own, &refs)?;
                    let q = cache.q();
                    if t.action >= q.len() {
                        return Err(Error::InvalidPhase { intersection: t.intersection, phase: t.action });
                    }
                    let diff = q[t.action] - y;
                    sq += diff * diff;
                    let mut gq = vec![0.0; q.len()];
                    gq[t.action] = 2.0 * diff / n;
                    backward(&self.params, cfg, &geo.layout, &cache, &gq, &mut grads)?;
                }
                Ok((sq, grads))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut grads = self.params.zeros_like();
        for (sq, g) in &parts {
            total += sq;
            grads.add_scaled(1.0, g);
        }
        Ok((total / n, grads))
    }

    /// One clipped optimizer step on the batch's mean squared TD error.
    pub fn train_step(&mut self, batch: &[&Transition], geoms: &[AgentGeometry]) -> Result<f64> {
        let targets = td_targets(batch, &self.target, self.cfg.gamma, &self.cfg.network, geoms)?;
        let (loss, mut grads) = self.loss_and_gradients(batch, &targets, geoms)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss { loss, step: self.train_steps });
        }
        let norm = grads.global_norm();
        if norm > self.cfg.grad_clip {
            grads.scale(self.cfg.grad_clip / norm);
        }
        self.optimizer.apply(&mut self.params, &grads);
        self.train_steps += 1;
        if self.train_steps % self.cfg.target_sync_every == 0 {
            self.target = sync_target(&self.params);
        }
        Ok(loss)
    }
}

/// Independent copy of the online parameters.
pub fn sync_target(params: &ParamStore) -> ParamStore {
    params.clone()
}

/// Every intersection's observation at the current state.
pub fn observe_all(state: &SimState, net: &RoadNetwork, cfg: &SimConfig) -> Result<Arc<[Observation]>> {
    (0..net.intersections.len())
        .map(|i| build_observation(state, net, i, cfg))
        .collect::<Result<Vec<_>>>()
        .map(Arc::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub sim_seed: u64,
    pub metrics: EpisodeMetrics,
    /// Mean training loss over the episode's train steps; `None` before training starts.
    pub mean_loss: Option<f64>,
    pub total_reward: f64,
    pub epsilon: f64,
    pub train_steps: u64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub params: ParamStore,
    pub episodes: Vec<EpisodeRecord>,
    pub train_steps: u64,
}

/// Simulation seed of a training episode.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    rng.random()
}

pub fn run_training(
    net: &RoadNetwork,
    flows: &FlowSpec,
    agent_cfg: &AgentConfig,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<TrainingOutcome> {
    run_training_with(net, flows, agent_cfg, sim_cfg, seed, |_| {})
}

/// [`run_training`] with a callback after each episode.
pub fn run_training_with(
    net: &RoadNetwork,
    flows: &FlowSpec,
    agent_cfg: &AgentConfig,
    sim_cfg: &SimConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<TrainingOutcome> {
    sim_cfg.check()?;
    let geoms = AgentGeometry::for_network(net, agent_cfg.network.max_neighbors)?;
    let mut learner = Learner::new(agent_cfg.clone(), seed)?;
    let mut buffer = ReplayBuffer::new(agent_cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a6e7);
    let mut decision_index = 0u64;
    let mut episodes = Vec::with_capacity(agent_cfg.episodes);
    let interval = sim_cfg.decision_interval_s;
    let n = net.intersections.len();

    for episode in 0..agent_cfg.episodes {
        let sim_seed = episode_seed(seed, episode);
        let mut state = SimState::new(net, flows, sim_cfg, sim_seed)?;
        let mut acc = MetricsAccumulator::new(net);
        let mut pending: Option<(Arc<[Observation]>, Vec<usize>)> = None;
        let mut actions = vec![0; n];
        let (mut loss_sum, mut loss_count, mut total_reward) = (0.0, 0u64, 0.0);
        let mut epsilon = agent_cfg.epsilon.value(decision_index);

        for t in 0..sim_cfg.horizon_steps {
            if t % interval == 0 {
                let obs = observe_all(&state, net, sim_cfg)?;
                if let Some((prev, acted)) = pending.take() {
                    total_reward += push_transitions(&mut buffer, &state, net, sim_cfg, agent_cfg, prev, &obs, &acted, false)?;
                }
                epsilon = agent_cfg.epsilon.value(decision_index);
                for (i, a) in actions.iter_mut().enumerate() {
                    let q = q_values(&learner.params, &agent_cfg.network, &geoms, &obs, i)?;
                    *a = select_action(&q, epsilon, &mut rng)?;
                }
                decision_index += 1;
                if buffer.len() >= agent_cfg.batch_size {
                    let batch = buffer.sample(agent_cfg.batch_size, &mut rng)?;
                    loss_sum += learner.train_step(&batch, &geoms)?;
                    loss_count += 1;
                }
                pending = Some((obs, actions.clone()));
            }
            state.step(net, flows, sim_cfg, &actions)?;
            acc.record_step(&state, net);
        }
        if let Some((prev, acted)) = pending.take() {
            let obs = observe_all(&state, net, sim_cfg)?;
            total_reward += push_transitions(&mut buffer, &state, net, sim_cfg, agent_cfg, prev, &obs, &acted, true)?;
        }
        let record = EpisodeRecord {
            episode,
            sim_seed,
            metrics: acc.finalize(sim_cfg.horizon_steps),
            mean_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
            total_reward,
            epsilon,
            train_steps: learner.train_steps,
        };
        on_episode(&record);
        episodes.push(record);
    }
    Ok(TrainingOutcome { params: learner.params, episodes, train_steps: learner.train_steps })
}

#[allow(clippy::too_many_arguments)]
fn push_transitions(
    buffer: &mut ReplayBuffer<Transition>,
    state: &SimState,
    net: &RoadNetwork,
    sim_cfg: &SimConfig,
    agent_cfg: &AgentConfig,
    prev: Arc<[Observation]>,
    next: &Arc<[Observation]>,
    actions: &[usize],
    terminal: bool,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, &action) in actions.iter().enumerate() {
        let reward = compute_reward(state, net, i, sim_cfg, agent_cfg.reward)?;
        total += reward;
        buffer.push(Transition {
            intersection: i,
            obs: prev.clone(),
            action,
            reward,
            next_obs: next.clone(),
            terminal,
        });
    }
    Ok(total)
}

/// Greedy controller over trained parameters.
pub struct MoveLight {
    params: ParamStore,
    cfg: FrapConfig,
    geoms: Vec<AgentGeometry>,
}

impl MoveLight {
    pub fn new(net: &RoadNetwork, params: ParamStore, cfg: FrapConfig) -> Result<Self> {
        cfg.check()?;
        params.check(&cfg)?;
        let geoms = AgentGeometry::for_network(net, cfg.max_neighbors)?;
        Ok(MoveLight { params, cfg, geoms })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }
}

impl Controller for MoveLight {
    fn name(&self) -> &str {
        "movelight"
    }

    fn decide(&mut self, state: &SimState, net: &RoadNetwork, cfg: &SimConfig) -> Result<Vec<usize>> {
        let obs = observe_all(state, net, cfg)?;
        (0..net.intersections.len())
            .map(|i| Ok(argmax(&q_values(&self.params, &self.cfg, &self.geoms, &obs, i)?)))
            .collect()
    }
}

#[cfg(test)]
mod tests;
