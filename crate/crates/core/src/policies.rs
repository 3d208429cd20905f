//! Controllers evaluated against the learned actors: uniform random actions,
//! the nearest-neighbour heuristic with fixed power, and the reference
//! configuration with every cell on and no UAVs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyLedger, EnergyParams, EnergyTrace};
use crate::env::cell_loads_and_gbs_service;
use crate::env::{clip_displacement, Action, Env};
use crate::error::{Error, Result};
use crate::maddpg::Checkpoint;
use crate::nn::Mlp;
use crate::world::{episode_stream, rng_stream, streams, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Maddpg,
    Random,
    Knn,
    AllOn,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Maddpg,
        PolicyKind::Random,
        PolicyKind::Knn,
        PolicyKind::AllOn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Maddpg => "maddpg",
            PolicyKind::Random => "random",
            PolicyKind::Knn => "knn",
            PolicyKind::AllOn => "allon",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}; expected maddpg, random, knn or allon")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub checkpoint: Option<PathBuf>,
    /// Neighbours per UAV for the heuristic.
    pub knn_k: usize,
    /// Heuristic transmit power; defaults to the fleet bound over `N`.
    pub fixed_power: Option<f64>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            checkpoint: None,
            knn_k: 6,
            fixed_power: None,
        }
    }
}

/// Moves every UAV at most `v_max` toward the centroid of its `k` nearest
/// UAV-needed users and transmits at `power`. UAVs hover when no user needs
/// them.
pub fn knn_fixed_actions(env: &Env, k: usize, power: f64) -> Vec<Action> {
    let world = env.world();
    let needy = env.needy_users();
    env.positions()
        .iter()
        .map(|p| {
            if needy.is_empty() || k == 0 {
                return Action {
                    dx: 0.0,
                    dy: 0.0,
                    power,
                };
            }
            let mut near: Vec<(f64, usize)> = needy
                .iter()
                .map(|&j| {
                    let u = world.users[j].position;
                    ((u[0] - p[0]).hypot(u[1] - p[1]), j)
                })
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(k);
            let m = near.len() as f64;
            let cx = near.iter().map(|&(_, j)| world.users[j].position[0]).sum::<f64>() / m;
            let cy = near.iter().map(|&(_, j)| world.users[j].position[1]).sum::<f64>() / m;
            let [dx, dy] = clip_displacement([cx - p[0], cy - p[1]], env.v_max());
            Action { dx, dy, power }
        })
        .collect()
}

/// Uniform raw actions in `[-1, 1]^3` per agent.
pub fn random_raw_actions<R: Rng + ?Sized>(agents: usize, rng: &mut R) -> Vec<[f64; 3]> {
    (0..agents)
        .map(|_| [0; 3].map(|_| rng.random_range(-1.0..=1.0)))
        .collect()
}

/// Per-agent actors executed greedily on local observations.
#[derive(Clone, Debug)]
pub struct LearnedPolicy {
    pub actors: Vec<Mlp<f64>>,
    pub world_fingerprint: String,
}

impl LearnedPolicy {
    pub fn from_checkpoint(ck: &Checkpoint) -> Self {
        Self {
            actors: ck.agents.iter().map(|a| a.actor.clone()).collect(),
            world_fingerprint: ck.manifest.world_fingerprint.clone(),
        }
    }

    /// Raw action of agent `i` from its own observation only.
    pub fn act_one(&self, i: usize, observation: &[f64]) -> Result<[f64; 3]> {
        let y = self.actors[i].predict(observation)?;
        Ok([y[0], y[1], y[2]])
    }
}

#[allow(clippy::large_enum_variant)]
pub enum Policy {
    Learned(LearnedPolicy),
    Random { rng: ChaCha8Rng },
    Knn { k: usize, power: Option<f64> },
    AllOn,
}

impl Policy {
    pub fn from_spec(spec: &PolicySpec) -> Result<Self> {
        if let Some(p) = spec.fixed_power {
            if !(p >= 0.0) {
                return Err(Error::InvalidValue {
                    what: "fixed_power",
                    value: p,
                });
            }
        }
        Ok(match spec.kind {
            PolicyKind::Maddpg => {
                let dir = spec.checkpoint.as_ref().ok_or(Error::MissingCheckpoint)?;
                Policy::Learned(LearnedPolicy::from_checkpoint(&Checkpoint::load(dir)?))
            }
            PolicyKind::Random => Policy::Random {
                rng: rng_stream(0, streams::POLICY),
            },
            PolicyKind::Knn => Policy::Knn {
                k: spec.knn_k,
                power: spec.fixed_power,
            },
            PolicyKind::AllOn => Policy::AllOn,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Learned(_) => PolicyKind::Maddpg,
            Policy::Random { .. } => PolicyKind::Random,
            Policy::Knn { .. } => PolicyKind::Knn,
            Policy::AllOn => PolicyKind::AllOn,
        }
    }

    /// Checks that a learned policy was trained on `world` and fits `env`.
    pub fn check_compatible(&self, world: &World, env: &Env) -> Result<()> {
        if let Policy::Learned(p) = self {
            let fp = world.fingerprint();
            if p.world_fingerprint != fp {
                return Err(Error::WorldMismatch(p.world_fingerprint.clone(), fp));
            }
            if p.actors.len() != env.num_agents() {
                return Err(Error::Shape {
                    context: "actors per UAV",
                    expected: env.num_agents(),
                    got: p.actors.len(),
                });
            }
        }
        Ok(())
    }

    /// Re-seeds per-episode randomness.
    pub fn reset(&mut self, seed: u64, episode: u64) {
        if let Policy::Random { rng } = self {
            *rng = rng_stream(seed, episode_stream(streams::POLICY, episode));
        }
    }

    /// Joint physical action for the current state of `env`.
    pub fn act(&mut self, env: &Env) -> Result<Vec<Action>> {
        let (v, p) = (env.v_max(), env.p_max());
        match self {
            Policy::Learned(lp) => (0..env.num_agents())
                .map(|i| Ok(Action::from_raw(lp.act_one(i, &env.observation(i))?, v, p)))
                .collect(),
            Policy::Random { rng } => Ok(random_raw_actions(env.num_agents(), rng)
                .into_iter()
                .map(|r| Action::from_raw(r, v, p))
                .collect()),
            Policy::Knn { k, power } => {
                let default = (env.fleet_power_max() / env.num_agents() as f64).min(p);
                Ok(knn_fixed_actions(env, *k, power.unwrap_or(default)))
            }
            Policy::AllOn => Err(Error::Config("the all-cells-on reference deploys no UAVs".into())),
        }
    }
}

/// One episode of the all-cells-on reference.
#[derive(Clone, Debug, PartialEq)]
pub struct AllOnEpisode {
    pub ledger: EnergyLedger<f64>,
    /// GBS-served users per step.
    pub served: Vec<usize>,
}

/// Overrides the schedule to all-on and runs one episode with no UAVs.
pub fn all_cells_on_eval(world: &World, params: &EnergyParams<f64>) -> Result<AllOnEpisode> {
    let on = world.with_all_cells_on();
    let mut params = params.clone();
    params.dt = world.config.dt;
    let mut trace = EnergyTrace::new(on.cells.iter().map(|c| c.site_id).collect(), on.sites.len());
    let mut served = Vec::with_capacity(on.episode_length());
    for t in 0..on.episode_length() {
        let (loads, gbs) = cell_loads_and_gbs_service(&on, t, &params);
        trace.push(vec![true; on.num_cells()], loads, Vec::new(), Vec::new());
        served.push(gbs.iter().filter(|&&s| s).count());
    }
    Ok(AllOnEpisode {
        ledger: energy::episode_ledger(&trace, &params)?,
        served,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::world::{build_world, build_world_with_schedule, ScenarioConfig};
    use std::sync::Arc;

    fn env_for(schedule: Option<Vec<Vec<bool>>>) -> Env {
        let sc = ScenarioConfig::default();
        let world = match schedule {
            Some(s) => build_world_with_schedule(&sc, s).unwrap(),
            None => build_world(&sc).unwrap(),
        };
        Env::new(Arc::new(world), EnvConfig::default()).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn knn_hovers_without_needy_users() {
        let sc = ScenarioConfig::default();
        let env = env_for(Some(vec![vec![true; sc.episode_length]; sc.num_cells()]));
        for a in knn_fixed_actions(&env, 6, 0.7) {
            assert_eq!(
                a,
                Action {
                    dx: 0.0,
                    dy: 0.0,
                    power: 0.7
                }
            );
        }
    }

    #[test]
    fn knn_actions_pass_enforcement() {
        let mut env = env_for(None);
        env.reset(1, 0);
        let mut policy = Policy::Knn { k: 6, power: None };
        while !env.is_done() {
            let a = policy.act(&env).unwrap();
            assert_eq!(env.enforce(&a), a);
            env.step_actions(&a).unwrap();
        }
    }

    #[test]
    fn random_components_bounded_and_reproducible() {
        let mut a = rng_stream(3, 0);
        let mut b = rng_stream(3, 0);
        let xs = random_raw_actions(5, &mut a);
        assert_eq!(xs, random_raw_actions(5, &mut b));
        assert!(xs.iter().flatten().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn maddpg_needs_checkpoint() {
        let spec = PolicySpec::new(PolicyKind::Maddpg);
        assert!(matches!(Policy::from_spec(&spec), Err(Error::MissingCheckpoint)));
    }

    #[test]
    fn all_on_has_no_uav_energy_and_more_cell_energy() {
        let sc = ScenarioConfig::default();
        let world = build_world(&sc).unwrap();
        let params = EnergyParams::default();
        let on = all_cells_on_eval(&world, &params).unwrap();
        assert_eq!(on.ledger.e_uav, 0.0);
        let mut env = Env::new(Arc::new(world), EnvConfig::default()).unwrap();
        env.reset(0, 0);
        while !env.is_done() {
            env.step_actions(
                &[Action {
                    dx: 0.0,
                    dy: 0.0,
                    power: 0.0,
                }; 2],
            )
            .unwrap();
        }
        let sleeping = env.ledger().unwrap();
        assert!(on.ledger.e_cell > sleeping.e_cell);
    }

    #[test]
    fn all_on_serves_everyone_with_unbounded_capacity() {
        let sc = ScenarioConfig::default();
        let world = build_world(&sc).unwrap();
        let params = EnergyParams {
            cell_capacity: f64::MAX,
            ..EnergyParams::default()
        };
        let on = all_cells_on_eval(&world, &params).unwrap();
        assert!(on.served.iter().all(|&s| s == sc.num_users));
    }
}
