//! Centralized-critic, decentralized-actor deterministic policy gradients
//! with prioritized replay and Ornstein-Uhlenbeck exploration.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, ACTION_DIM};
use crate::error::{Error, Result};
use crate::nn::{polyak_update, AdamState, Mlp, MlpSpec, OutputActivation};
use crate::replay::{PrioritizedReplay, ReplayConfig, Transition};
use crate::world::{rng_stream, streams, World};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuConfig {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Multiplier applied to `sigma` after every step, down to `sigma_min`.
    pub sigma_decay: f64,
    pub sigma_min: f64,
    pub dt: f64,
}

impl Default for OuConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            mu: 0.0,
            sigma: 0.2,
            sigma_decay: 0.9999,
            sigma_min: 0.01,
            dt: 1.0,
        }
    }
}

/// `N_t = N_{t-1} + theta (mu - N_{t-1}) dt + sigma W_t` per agent and
/// action component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    pub config: OuConfig,
    pub sigma: f64,
    pub state: Vec<[f64; ACTION_DIM]>,
}

impl OuNoise {
    pub fn new(config: OuConfig, agents: usize) -> Self {
        Self {
            sigma: config.sigma,
            state: vec![[config.mu; ACTION_DIM]; agents],
            config,
        }
    }

    /// Restarts the process at `mu`; `sigma` keeps its decayed value.
    pub fn reset(&mut self) {
        let mu = self.config.mu;
        self.state.iter_mut().for_each(|s| *s = [mu; ACTION_DIM]);
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[[f64; ACTION_DIM]] {
        let c = &self.config;
        for s in self.state.iter_mut() {
            for x in s.iter_mut() {
                let w: f64 = rng.sample(StandardNormal);
                *x += c.theta * (c.mu - *x) * c.dt + self.sigma * w;
            }
        }
        if self.sigma > c.sigma_min {
            self.sigma = (self.sigma * c.sigma_decay).max(c.sigma_min);
        }
        &self.state
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// Transitions collected before the first update.
    pub warmup_steps: usize,
    /// Environment steps between updates.
    pub update_interval: usize,
    pub grad_clip: Option<f64>,
    /// Weight of the squared actor pre-activation penalty; keeps the tanh
    /// outputs away from saturation.
    pub preactivation_l2: f64,
    /// First episode without exploration noise; defaults to 80% of `episodes`.
    pub explore_off_episode: Option<usize>,
    /// Episode at which learning rates are multiplied by `lr_decay_factor`;
    /// defaults to 20% of `episodes`.
    pub lr_decay_episode: Option<usize>,
    pub lr_decay_factor: f64,
    /// Episodes between checkpoints; 0 saves only at the end.
    pub checkpoint_interval: usize,
    /// When false, the last step of an episode is treated as terminal.
    pub bootstrap_at_horizon: bool,
    pub beta_start: f64,
    pub beta_end: f64,
    pub replay: ReplayConfig,
    pub noise: OuConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 3000,
            actor_hidden: vec![128, 128],
            critic_hidden: vec![128, 128],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            tau: 0.01,
            batch_size: 256,
            warmup_steps: 1000,
            update_interval: 1,
            grad_clip: Some(1.0),
            preactivation_l2: 1e-2,
            explore_off_episode: None,
            lr_decay_episode: None,
            lr_decay_factor: 0.5,
            checkpoint_interval: 0,
            bootstrap_at_horizon: true,
            beta_start: 0.4,
            beta_end: 1.0,
            replay: ReplayConfig::default(),
            noise: OuConfig::default(),
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0 < self.tau && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.update_interval == 0 {
            return bad("batch_size and update_interval must be positive");
        }
        if self.replay.capacity < self.batch_size {
            return bad("replay capacity must hold at least one batch");
        }
        if !(self.replay.alpha >= 0.0) {
            return bad("replay alpha must be non-negative");
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        if !(self.preactivation_l2 >= 0.0) {
            return bad("preactivation_l2 must be non-negative");
        }
        if !(self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor must be positive");
        }
        if !(0.0..=1.0).contains(&self.beta_start) || !(0.0..=1.0).contains(&self.beta_end) {
            return bad("beta must lie in [0, 1]");
        }
        let n = &self.noise;
        if !(n.theta >= 0.0 && n.sigma >= 0.0 && n.sigma_min > 0.0 && n.dt > 0.0) {
            return bad("noise theta, sigma must be non-negative and sigma_min, dt positive");
        }
        if !(0.0 < n.sigma_decay && n.sigma_decay <= 1.0) {
            return bad("sigma_decay must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn explore_off(&self) -> usize {
        self.explore_off_episode
            .unwrap_or((self.episodes as f64 * 0.8).round() as usize)
    }

    pub fn lr_decay_at(&self) -> usize {
        self.lr_decay_episode
            .unwrap_or((self.episodes as f64 * 0.2).round() as usize)
    }

    /// Linear anneal over the training run.
    pub fn beta(&self, episode: usize) -> f64 {
        let frac = if self.episodes <= 1 {
            1.0
        } else {
            (episode as f64 / (self.episodes - 1) as f64).min(1.0)
        };
        self.beta_start + (self.beta_end - self.beta_start) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentNets {
    pub actor: Mlp<f64>,
    pub critic: Mlp<f64>,
    pub target_actor: Mlp<f64>,
    pub target_critic: Mlp<f64>,
    pub actor_opt: AdamState<f64>,
    pub critic_opt: AdamState<f64>,
}

impl AgentNets {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, critic_in: usize, config: &TrainConfig, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.actor_hidden);
        sizes.push(ACTION_DIM);
        let actor_spec = MlpSpec::new(sizes, OutputActivation::Tanh)?;
        let mut sizes = vec![critic_in];
        sizes.extend(&config.critic_hidden);
        sizes.push(1);
        let critic_spec = MlpSpec::new(sizes, OutputActivation::Identity)?;
        let actor = Mlp::new(actor_spec.clone(), Some(1e-3), rng);
        let critic = Mlp::new(critic_spec.clone(), Some(3e-3), rng);
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: AdamState::new(&actor_spec, config.actor_lr, config.grad_clip),
            critic_opt: AdamState::new(&critic_spec, config.critic_lr, config.grad_clip),
            actor,
            critic,
        })
    }
}

/// A replay sample laid out as row-major matrices.
#[derive(Clone, Debug)]
pub struct JointBatch {
    pub size: usize,
    pub agents: usize,
    /// Per agent, `size x obs_dim`.
    pub obs: Vec<Vec<f64>>,
    pub next_obs: Vec<Vec<f64>>,
    /// `size x (agents * 3)`.
    pub actions: Vec<f64>,
    /// Per agent, `size`.
    pub rewards: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    /// 1 for terminal transitions.
    pub done: Vec<f64>,
    pub weights: Vec<f64>,
}

impl JointBatch {
    pub fn new(items: &[&Transition], weights: Vec<f64>, bootstrap_at_horizon: bool) -> Result<Self> {
        let size = items.len();
        if size == 0 || weights.len() != size {
            return Err(Error::Shape {
                context: "batch weights",
                expected: size,
                got: weights.len(),
            });
        }
        let agents = items[0].actions.len();
        let mut b = Self {
            size,
            agents,
            obs: vec![Vec::new(); agents],
            next_obs: vec![Vec::new(); agents],
            actions: Vec::with_capacity(size * agents * ACTION_DIM),
            rewards: vec![Vec::with_capacity(size); agents],
            state: Vec::new(),
            next_state: Vec::new(),
            done: Vec::with_capacity(size),
            weights,
        };
        for tr in items {
            if tr.actions.len() != agents || tr.rewards.len() != agents || tr.observations.len() != agents {
                return Err(Error::Shape {
                    context: "transition agents",
                    expected: agents,
                    got: tr.actions.len(),
                });
            }
            for k in 0..agents {
                b.obs[k].extend(&tr.observations[k]);
                b.next_obs[k].extend(&tr.next_observations[k]);
                b.rewards[k].push(tr.rewards[k]);
                b.actions.extend(tr.actions[k]);
            }
            b.state.extend(&tr.global_state);
            b.next_state.extend(&tr.next_global_state);
            b.done.push(if tr.done && !bootstrap_at_horizon { 1.0 } else { 0.0 });
        }
        Ok(b)
    }
}

/// Rows of `[state | actions]`.
fn critic_input(state: &[f64], actions: &[f64], batch: usize) -> Vec<f64> {
    let sd = state.len() / batch;
    let ad = actions.len() / batch;
    let mut x = Vec::with_capacity(batch * (sd + ad));
    for b in 0..batch {
        x.extend(&state[b * sd..(b + 1) * sd]);
        x.extend(&actions[b * ad..(b + 1) * ad]);
    }
    x
}

/// Copies `agent_actions` (`batch x 3`) into agent `i`'s slot of the joint
/// action matrix.
fn splice_actions(joint: &mut [f64], agent_actions: &[f64], i: usize, agents: usize) {
    let w = agents * ACTION_DIM;
    for (row, a) in joint.chunks_mut(w).zip(agent_actions.chunks(ACTION_DIM)) {
        row[i * ACTION_DIM..(i + 1) * ACTION_DIM].copy_from_slice(a);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_step_reward: f64,
    pub sigma: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub num_agents: usize,
    pub observation_dim: usize,
    pub global_state_dim: usize,
    pub world_fingerprint: String,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub episodes_completed: usize,
    pub total_steps: u64,
    pub updates: u64,
    pub noise: OuNoise,
    pub rng: ChaCha8Rng,
}

pub struct Maddpg {
    config: TrainConfig,
    env_config: EnvConfig,
    gamma: f64,
    world_fingerprint: String,
    obs_dim: usize,
    state_dim: usize,
    agents: Vec<AgentNets>,
    noise: OuNoise,
    replay: PrioritizedReplay<Transition>,
    rng: ChaCha8Rng,
    episodes_completed: usize,
    total_steps: u64,
    updates: u64,
}

impl Maddpg {
    /// Fresh networks sized for `env`.
    pub fn new(env: &Env, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = env.num_agents();
        let obs_dim = env.observation_dim();
        let state_dim = env.global_state_dim();
        let mut init = rng_stream(config.seed, streams::INIT);
        let agents = (0..n)
            .map(|_| AgentNets::new(obs_dim, state_dim + n * ACTION_DIM, &config, &mut init))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gamma: env.config().reward.gamma,
            env_config: env.config().clone(),
            world_fingerprint: env.world().fingerprint(),
            obs_dim,
            state_dim,
            agents,
            noise: OuNoise::new(config.noise.clone(), n),
            replay: PrioritizedReplay::new(config.replay.clone()),
            rng: rng_stream(config.seed, streams::TRAINER),
            episodes_completed: 0,
            total_steps: 0,
            updates: 0,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentNets] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentNets] {
        &mut self.agents
    }

    pub fn actors(&self) -> Vec<Mlp<f64>> {
        self.agents.iter().map(|a| a.actor.clone()).collect()
    }

    pub fn noise(&self) -> &OuNoise {
        &self.noise
    }

    pub fn replay(&self) -> &PrioritizedReplay<Transition> {
        &self.replay
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.gamma = gamma;
    }

    /// `clip(actor_i(o_i) [+ N_i], -1, 1)` per agent; the noise process
    /// advances only when exploring.
    pub fn select_actions(&mut self, observations: &[Vec<f64>], explore: bool) -> Result<Vec<[f64; ACTION_DIM]>> {
        let mut out = Vec::with_capacity(self.agents.len());
        for (agent, o) in self.agents.iter().zip(observations) {
            let y = agent.actor.predict(o)?;
            out.push([y[0], y[1], y[2]]);
        }
        if explore {
            let noise = self.noise.advance(&mut self.rng);
            for (a, n) in out.iter_mut().zip(noise) {
                for (x, e) in a.iter_mut().zip(n) {
                    *x = (*x + e).clamp(-1.0, 1.0);
                }
            }
        }
        Ok(out)
    }

    /// Target-actor joint actions at the next observations, `size x (N*3)`.
    pub fn target_actions(&self, batch: &JointBatch) -> Result<Vec<f64>> {
        let mut joint = vec![0.0; batch.size * batch.agents * ACTION_DIM];
        for (k, agent) in self.agents.iter().enumerate() {
            let cache = agent.target_actor.forward_batch(&batch.next_obs[k], batch.size)?;
            splice_actions(&mut joint, cache.output(), k, batch.agents);
        }
        Ok(joint)
    }

    /// One IS-weighted squared-TD step on critic `i`. Returns `|delta|` per
    /// sample and the weighted loss before the step.
    pub fn critic_update(&mut self, batch: &JointBatch, target_actions: &[f64], i: usize) -> Result<(Vec<f64>, f64)> {
        let bsz = batch.size;
        let gamma = self.gamma;
        let agent = &mut self.agents[i];
        let next_in = critic_input(&batch.next_state, target_actions, bsz);
        let q_next = agent.target_critic.forward_batch(&next_in, bsz)?;
        let y: Vec<f64> = (0..bsz)
            .map(|b| batch.rewards[i][b] + gamma * (1.0 - batch.done[b]) * q_next.output()[b])
            .collect();
        let cur_in = critic_input(&batch.state, &batch.actions, bsz);
        let cache = agent.critic.forward_batch(&cur_in, bsz)?;
        let q = cache.output();
        let scale = 1.0 / bsz as f64;
        let mut loss = 0.0;
        let mut td = Vec::with_capacity(bsz);
        let mut grad = Vec::with_capacity(bsz);
        for b in 0..bsz {
            let delta = y[b] - q[b];
            loss += batch.weights[b] * delta * delta * scale;
            td.push(delta.abs());
            grad.push(-2.0 * batch.weights[b] * delta * scale);
        }
        let grads = agent.critic.backward_params(&cache, &grad)?;
        agent.critic_opt.step(&mut agent.critic, &grads)?;
        Ok((td, loss))
    }

    /// One ascent step on `mean_b Q_i(s, a_1..actor_i(o_i)..a_N)` through the
    /// current critic, then Polyak updates of both targets of agent `i`.
    pub fn actor_update(&mut self, batch: &JointBatch, i: usize) -> Result<()> {
        let bsz = batch.size;
        let tau = self.config.tau;
        let state_dim = batch.state.len() / bsz;
        let agent = &mut self.agents[i];
        let actor_cache = agent.actor.forward_batch(&batch.obs[i], bsz)?;
        let mut joint = batch.actions.clone();
        splice_actions(&mut joint, actor_cache.output(), i, batch.agents);
        let x = critic_input(&batch.state, &joint, bsz);
        let critic_cache = agent.critic.forward_batch(&x, bsz)?;
        let (_, dx) = agent.critic.backward(&critic_cache, &vec![-1.0 / bsz as f64; bsz])?;
        let width = state_dim + batch.agents * ACTION_DIM;
        let off = state_dim + i * ACTION_DIM;
        let da: Vec<f64> = dx
            .chunks(width)
            .flat_map(|row| row[off..off + ACTION_DIM].iter().copied())
            .collect();
        let l2 = 2.0 * self.config.preactivation_l2 / bsz as f64;
        let dz: Vec<f64> = agent
            .actor
            .preactivations(&actor_cache)
            .iter()
            .map(|z| l2 * z)
            .collect();
        let grads = agent.actor.backward_params_with_preactivation(&actor_cache, &da, &dz)?;
        agent.actor_opt.step(&mut agent.actor, &grads)?;
        polyak_update(&mut agent.target_actor, &agent.actor, tau)?;
        polyak_update(&mut agent.target_critic, &agent.critic, tau)?;
        Ok(())
    }

    /// Samples a batch, updates every critic and actor, and refreshes the
    /// sampled priorities with the mean of the agents' `|delta|`.
    pub fn update(&mut self, beta: f64) -> Result<()> {
        let sample = self.replay.sample(self.config.batch_size, beta, &mut self.rng)?;
        let batch = JointBatch::new(&sample.items, sample.weights.clone(), self.config.bootstrap_at_horizon)?;
        let indices = sample.indices;
        let target = self.target_actions(&batch)?;
        let mut td_mean = vec![0.0; batch.size];
        let n = self.agents.len();
        for i in 0..n {
            let (td, _) = self.critic_update(&batch, &target, i)?;
            td_mean.iter_mut().zip(&td).for_each(|(m, d)| *m += d / n as f64);
            self.actor_update(&batch, i)?;
        }
        self.replay.update_priorities(&indices, &td_mean)?;
        self.updates += 1;
        Ok(())
    }

    fn scale_learning_rates(&mut self, factor: f64) {
        for a in &mut self.agents {
            a.actor_opt.lr *= factor;
            a.critic_opt.lr *= factor;
        }
    }

    /// Runs one training episode and returns the mean per-agent step reward.
    pub fn run_episode(&mut self, env: &mut Env, episode: usize) -> Result<f64> {
        let explore = episode < self.config.explore_off();
        let beta = self.config.beta(episode);
        let (mut obs, mut state) = env.reset(self.config.seed, episode as u64);
        self.noise.reset();
        let mut total = 0.0;
        let mut steps = 0usize;
        while !env.is_done() {
            let actions = self.select_actions(&obs, explore)?;
            let out = env.step(&actions)?;
            total += out.rewards.iter().sum::<f64>() / out.rewards.len() as f64;
            steps += 1;
            self.replay.push(Transition {
                observations: obs,
                actions,
                rewards: out.rewards,
                next_observations: out.observations.clone(),
                done: out.done,
                global_state: state,
                next_global_state: out.global_state.clone(),
            });
            obs = out.observations;
            state = out.global_state;
            self.total_steps += 1;
            let ready = self.replay.len() >= self.config.batch_size.max(self.config.warmup_steps);
            if ready && self.total_steps.is_multiple_of(self.config.update_interval as u64) {
                self.update(beta)?;
            }
        }
        self.episodes_completed = episode + 1;
        Ok(total / steps.max(1) as f64)
    }

    pub fn manifest(&self) -> CheckpointManifest {
        CheckpointManifest {
            format_version: CHECKPOINT_VERSION,
            num_agents: self.agents.len(),
            observation_dim: self.obs_dim,
            global_state_dim: self.state_dim,
            world_fingerprint: self.world_fingerprint.clone(),
            env: self.env_config.clone(),
            train: self.config.clone(),
            episodes_completed: self.episodes_completed,
            total_steps: self.total_steps,
            updates: self.updates,
            noise: self.noise.clone(),
            rng: self.rng.clone(),
        }
    }

    /// Writes `agent_<i>.json` per agent and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, a) in self.agents.iter().enumerate() {
            write_json(&dir.join(format!("agent_{i}.json")), a)?;
        }
        write_json(&dir.join(MANIFEST), &self.manifest())
    }

    /// Restores networks, optimizer, noise and RNG state. The replay buffer
    /// is not part of a checkpoint and starts empty.
    pub fn load(dir: &Path) -> Result<Self> {
        let ck = Checkpoint::load(dir)?;
        let m = ck.manifest;
        Ok(Self {
            gamma: m.env.reward.gamma,
            env_config: m.env,
            world_fingerprint: m.world_fingerprint,
            obs_dim: m.observation_dim,
            state_dim: m.global_state_dim,
            agents: ck.agents,
            noise: m.noise,
            replay: PrioritizedReplay::new(m.train.replay.clone()),
            rng: m.rng,
            episodes_completed: m.episodes_completed,
            total_steps: m.total_steps,
            updates: m.updates,
            config: m.train,
        })
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub agents: Vec<AgentNets>,
}

impl Checkpoint {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(Error::MissingCheckpoint);
        }
        let manifest: CheckpointManifest = read_json(&manifest_path)?;
        if manifest.format_version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(manifest.format_version));
        }
        let agents = (0..manifest.num_agents)
            .map(|i| read_json(&dir.join(format!("agent_{i}.json"))))
            .collect::<Result<Vec<AgentNets>>>()?;
        Ok(Self { manifest, agents })
    }
}

pub struct TrainOutcome {
    pub trainer: Maddpg,
    pub curve: Vec<CurvePoint>,
}

/// Trains from scratch on `world`. With `checkpoint_dir`, checkpoints are
/// written every `checkpoint_interval` episodes and after the last one.
pub fn train(
    world: Arc<World>,
    env_config: EnvConfig,
    config: TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut env = Env::new(world, env_config)?;
    let mut trainer = Maddpg::new(&env, config)?;
    let episodes = trainer.config.episodes;
    let decay_at = trainer.config.lr_decay_at();
    let every = trainer.config.checkpoint_interval;
    let mut curve = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        if ep == decay_at && ep > 0 {
            let f = trainer.config.lr_decay_factor;
            trainer.scale_learning_rates(f);
        }
        let mean = trainer.run_episode(&mut env, ep)?;
        curve.push(CurvePoint {
            episode: ep,
            mean_step_reward: mean,
            sigma: trainer.noise.sigma,
            lr: trainer.agents.first().map_or(0.0, |a| a.actor_opt.lr),
        });
        if let Some(dir) = checkpoint_dir {
            if every > 0 && (ep + 1) % every == 0 && ep + 1 < episodes {
                trainer.save(dir)?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        trainer.save(dir)?;
    }
    Ok(TrainOutcome { trainer, curve })
}

/// `episode,mean_step_reward,sigma,lr` rows.
pub fn write_curve_csv<W: std::io::Write>(curve: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("<curve>", e))?;
    Ok(())
}
