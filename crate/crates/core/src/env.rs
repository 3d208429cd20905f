//! Multi-agent environment: local observations, joint continuous actions,
//! constraint enforcement, per-agent rewards and episode traces.

use std::io::Write;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, SinrReport, UserLink};
use crate::energy::{self, EnergyLedger, EnergyParams, EnergyTrace};
use crate::error::{Error, Result};
use crate::world::{episode_stream, rng_stream, streams, World};

/// Raw action components per agent: `dx`, `dy`, power, each in `[-1, 1]`.
pub const ACTION_DIM: usize = 3;
/// Features per observed user slot: `dx`, `dy`, demand, presence flag.
const USER_SLOT: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub omega1: f64,
    pub omega2: f64,
    /// Discount factor of the learning objective.
    pub gamma: f64,
    /// Energy weight of the reported evaluation objective, per joule.
    pub lambda: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            omega1: 0.8,
            omega2: 0.2,
            gamma: 0.99,
            lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub channel: ChannelParams<f64>,
    /// `dt` is taken from the scenario.
    pub energy: EnergyParams<f64>,
    pub reward: RewardWeights,
    /// Radius of the user neighbourhood in observations; defaults to twice
    /// the cell radius.
    pub observation_radius: Option<f64>,
    /// Users per observation.
    pub observed_users: usize,
    /// Bound on the summed UAV power; defaults to the per-UAV bound.
    pub fleet_power_max: Option<f64>,
    /// UAV start positions; defaults to the positions of sites whose cells
    /// are all ON at the first step, round-robin.
    pub spawn_points: Option<Vec<[f64; 2]>>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            channel: ChannelParams::default(),
            energy: EnergyParams::default(),
            reward: RewardWeights::default(),
            observation_radius: None,
            observed_users: 6,
            fleet_power_max: None,
            spawn_points: None,
        }
    }
}

/// Physical action of one UAV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub power: f64,
}

impl Action {
    /// Affine map from `[-1, 1]^3` to `[-v_max, v_max]^2 x [0, p_max]`.
    pub fn from_raw(raw: [f64; 3], v_max: f64, p_max: f64) -> Self {
        Self {
            dx: raw[0] * v_max,
            dy: raw[1] * v_max,
            power: 0.5 * (raw[2] + 1.0) * p_max,
        }
    }

    pub fn to_raw(&self, v_max: f64, p_max: f64) -> [f64; 3] {
        [self.dx / v_max, self.dy / v_max, 2.0 * self.power / p_max - 1.0]
    }

    pub fn displacement(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Radial projection onto the disc of radius `v_max`. The result satisfies
/// `hypot <= v_max` in floating point, so projecting twice is the identity.
pub fn clip_displacement(d: [f64; 2], v_max: f64) -> [f64; 2] {
    let norm = d[0].hypot(d[1]);
    if norm <= v_max {
        return d;
    }
    let k = v_max / norm;
    let mut out = [d[0] * k, d[1] * k];
    while out[0].hypot(out[1]) > v_max {
        out[0] *= 1.0 - f64::EPSILON;
        out[1] *= 1.0 - f64::EPSILON;
    }
    out
}

/// Radial projection of each displacement onto the `v_max` disc, clipping of
/// each power to `[0, p_max]`, then a common rescale of all powers when their
/// sum exceeds `fleet_max`. The summed power of the result is at most
/// `fleet_max` in floating point.
pub fn enforce_constraints(actions: &[Action], v_max: f64, p_max: f64, fleet_max: f64) -> Vec<Action> {
    let mut out: Vec<Action> = actions
        .iter()
        .map(|a| {
            let [dx, dy] = clip_displacement([a.dx, a.dy], v_max);
            Action {
                dx,
                dy,
                power: a.power.clamp(0.0, p_max),
            }
        })
        .collect();
    let total: f64 = out.iter().map(|a| a.power).sum();
    if total > fleet_max {
        let k = fleet_max / total;
        out.iter_mut().for_each(|a| a.power *= k);
        while out.iter().map(|a| a.power).sum::<f64>() > fleet_max {
            out.iter_mut().for_each(|a| a.power *= 1.0 - f64::EPSILON);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Served UAV-needed users over all UAV-needed users (1 when there are none).
    pub coverage: f64,
    pub uav_served: usize,
    pub gbs_served: usize,
    pub needy: usize,
    pub e_max: f64,
    pub throughput: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEnergy {
    /// Per UAV, joules.
    pub uav_prop: Vec<f64>,
    pub uav_comm: Vec<f64>,
    /// Per cell, watts.
    pub cell_power: Vec<f64>,
    /// Per site, watts.
    pub site_power: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub report: SinrReport<f64>,
    pub energy: StepEnergy,
    pub done: bool,
    pub info: StepInfo,
    /// Observations for the next decision.
    pub observations: Vec<Vec<f64>>,
    pub global_state: Vec<f64>,
    /// Actions after constraint enforcement.
    pub applied: Vec<Action>,
}

/// One line of the JSON-lines episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub positions: Vec<[f64; 2]>,
    pub displacements: Vec<[f64; 2]>,
    pub powers: Vec<f64>,
    pub assoc: Vec<Option<usize>>,
    pub served: Vec<bool>,
    pub rewards: Vec<f64>,
    /// `E_i` per UAV, joules.
    pub uav_energy: Vec<f64>,
    pub coverage: f64,
    pub uav_served: usize,
    pub gbs_served: usize,
    pub needy: usize,
    pub throughput: f64,
}

/// Writes one JSON document per line.
pub fn write_trace_jsonl<W: Write>(records: &[StepRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
    }
    Ok(())
}

/// `sum_t throughput(t) - lambda sum_t sum_i E_i(t)` with energy in joules.
pub fn episode_objective(records: &[StepRecord], lambda: f64) -> f64 {
    let throughput: f64 = records.iter().map(|r| r.throughput).sum();
    let energy: f64 = records.iter().flat_map(|r| r.uav_energy.iter()).sum();
    throughput - lambda * energy
}

/// Steps of a trace that violate the mobility or power constraints. No
/// rounding slack: enforcement is exact in floating point.
pub fn audit_constraints(records: &[StepRecord], v_max: f64, p_max: f64, fleet_max: f64) -> usize {
    records
        .iter()
        .filter(|r| {
            let moves = r.displacements.iter().all(|d| d[0].hypot(d[1]) <= v_max);
            let powers = r.powers.iter().all(|&p| (0.0..=p_max).contains(&p));
            let fleet = r.powers.iter().sum::<f64>() <= fleet_max;
            !(moves && powers && fleet)
        })
        .count()
}

/// Load fraction of every cell and whether each user is served by its
/// (active) home cell at step `t`. A cell whose home demand exceeds its
/// capacity serves its users in increasing order of demand until the
/// capacity is used up.
pub fn cell_loads_and_gbs_service(world: &World, t: usize, energy: &EnergyParams<f64>) -> (Vec<f64>, Vec<bool>) {
    let k = world.num_cells();
    let mut members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); k];
    for u in &world.users {
        members[u.home_cell].push((u.demand_profile[t], u.id));
    }
    let mut loads = vec![0.0; k];
    let mut served = vec![false; world.num_users()];
    for (c, users) in members.iter_mut().enumerate() {
        if !world.is_active(c, t) {
            continue;
        }
        let demand: f64 = users.iter().map(|u| u.0).sum();
        loads[c] = energy.load_fraction(demand);
        users.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut used = 0.0;
        for &(d, j) in users.iter() {
            if used + d <= energy.cell_capacity {
                used += d;
                served[j] = true;
            }
        }
    }
    (loads, served)
}

pub struct Env {
    world: Arc<World>,
    config: EnvConfig,
    energy: EnergyParams<f64>,
    fleet_max: f64,
    obs_radius: f64,
    max_demand: f64,
    t: usize,
    done: bool,
    positions: Vec<[f64; 2]>,
    powers: Vec<f64>,
    rng: ChaCha8Rng,
    trace: EnergyTrace<f64>,
    records: Vec<StepRecord>,
}

impl Env {
    pub fn new(world: Arc<World>, config: EnvConfig) -> Result<Self> {
        config.channel.validate()?;
        let mut energy = config.energy.clone();
        energy.dt = world.config.dt;
        energy.validate()?;
        let sc = &world.config;
        let fleet_max = config.fleet_power_max.unwrap_or(sc.p_max);
        if !(fleet_max > 0.0) {
            return Err(Error::Config("fleet_power_max must be positive".into()));
        }
        let obs_radius = config.observation_radius.unwrap_or(2.0 * sc.cell_radius);
        if !(obs_radius > 0.0) {
            return Err(Error::Config("observation_radius must be positive".into()));
        }
        if let Some(sp) = &config.spawn_points {
            if sp.is_empty() {
                return Err(Error::Config("spawn_points must not be empty".into()));
            }
        }
        let max_demand = sc.traffic.max_demand();
        let trace = EnergyTrace::new(world.cells.iter().map(|c| c.site_id).collect(), world.sites.len());
        let n = sc.num_uavs;
        let mut env = Self {
            world,
            config,
            energy,
            fleet_max,
            obs_radius,
            max_demand,
            t: 0,
            done: false,
            positions: vec![[0.0; 2]; n],
            powers: vec![0.0; n],
            rng: rng_stream(0, streams::EPISODE),
            trace,
            records: Vec::new(),
        };
        env.reset(0, 0);
        Ok(env)
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn energy_params(&self) -> &EnergyParams<f64> {
        &self.energy
    }

    pub fn num_agents(&self) -> usize {
        self.positions.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn v_max(&self) -> f64 {
        self.world.config.v_max
    }

    pub fn p_max(&self) -> f64 {
        self.world.config.p_max
    }

    pub fn fleet_power_max(&self) -> f64 {
        self.fleet_max
    }

    pub fn observation_radius(&self) -> f64 {
        self.obs_radius
    }

    /// `P_max dt + alpha1 v_max^2 + alpha2 v_max`.
    pub fn e_max(&self) -> f64 {
        self.energy.max_uav_step_energy(self.p_max(), self.v_max())
    }

    pub fn observation_dim(&self) -> usize {
        3 * self.num_agents() + USER_SLOT * self.config.observed_users + self.world.num_cells()
    }

    pub fn global_state_dim(&self) -> usize {
        3 * self.num_agents() + 3 * self.world.num_users() + self.world.num_cells()
    }

    /// Step whose schedule and demands the next decision sees.
    fn view_step(&self) -> usize {
        self.t.min(self.world.episode_length() - 1)
    }

    /// Users in sleeping cells at the current step.
    pub fn needy_users(&self) -> Vec<usize> {
        let t = self.view_step();
        (0..self.world.num_users())
            .filter(|&j| self.world.needs_uav(j, t))
            .collect()
    }

    /// Sites with every cell ON at the first step, or every site if none is.
    fn home_sites(&self) -> Vec<usize> {
        let w = &self.world;
        let awake: Vec<usize> = (0..w.sites.len())
            .filter(|&s| w.cells.iter().filter(|c| c.site_id == s).all(|c| w.is_active(c.id, 0)))
            .collect();
        if awake.is_empty() {
            (0..w.sites.len()).collect()
        } else {
            awake
        }
    }

    /// Starts episode `episode` of the evaluation or training run `seed`.
    pub fn reset(&mut self, seed: u64, episode: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.num_agents();
        let spawns: Vec<[f64; 2]> = match &self.config.spawn_points {
            Some(sp) => (0..n).map(|i| sp[i % sp.len()]).collect(),
            None => {
                let homes = self.home_sites();
                (0..n)
                    .map(|i| self.world.sites[homes[i % homes.len()]].position)
                    .collect()
            }
        };
        let w = self.world.config.area_half_width;
        self.positions = spawns.iter().map(|p| [p[0].clamp(-w, w), p[1].clamp(-w, w)]).collect();
        self.powers = vec![0.0; n];
        self.t = 0;
        self.done = false;
        self.rng = rng_stream(seed, episode_stream(streams::EPISODE, episode));
        self.trace = EnergyTrace::new(self.trace.cell_site.clone(), self.trace.num_sites);
        self.records.clear();
        (self.observations(), self.global_state())
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.num_agents()).map(|i| self.observation(i)).collect()
    }

    /// Local observation of agent `i`: own position and power, the other
    /// UAVs' positions and powers, the nearest UAV-needed users inside the
    /// observation radius (offsets relative to the UAV), and all cell states.
    pub fn observation(&self, i: usize) -> Vec<f64> {
        let w = self.world.config.area_half_width;
        let p_max = self.p_max();
        let t = self.view_step();
        let mut obs = Vec::with_capacity(self.observation_dim());
        let uav = |obs: &mut Vec<f64>, k: usize| {
            obs.push(self.positions[k][0] / w);
            obs.push(self.positions[k][1] / w);
            obs.push(self.powers[k] / p_max);
        };
        uav(&mut obs, i);
        for k in (0..self.num_agents()).filter(|&k| k != i) {
            uav(&mut obs, k);
        }
        let me = self.positions[i];
        let mut near: Vec<(f64, usize)> = self
            .world
            .users
            .iter()
            .filter(|u| self.world.needs_uav(u.id, t))
            .map(|u| ((u.position[0] - me[0]).hypot(u.position[1] - me[1]), u.id))
            .filter(|&(d, _)| d <= self.obs_radius)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for slot in 0..self.config.observed_users {
            match near.get(slot) {
                Some(&(_, j)) => {
                    let u = &self.world.users[j];
                    obs.push((u.position[0] - me[0]) / self.obs_radius);
                    obs.push((u.position[1] - me[1]) / self.obs_radius);
                    obs.push(u.demand_profile[t] / self.max_demand);
                    obs.push(1.0);
                }
                None => obs.extend([0.0; USER_SLOT]),
            }
        }
        obs.extend(
            self.world
                .cells
                .iter()
                .map(|c| if c.state_schedule[t] { 1.0 } else { 0.0 }),
        );
        obs
    }

    /// UAV positions and powers, every user's position and demand, and
    /// all cell states.
    pub fn global_state(&self) -> Vec<f64> {
        let w = self.world.config.area_half_width;
        let t = self.view_step();
        let mut s = Vec::with_capacity(self.global_state_dim());
        for (p, &pw) in self.positions.iter().zip(&self.powers) {
            s.extend([p[0] / w, p[1] / w, pw / self.p_max()]);
        }
        for u in &self.world.users {
            s.extend([
                u.position[0] / w,
                u.position[1] / w,
                u.demand_profile[t] / self.max_demand,
            ]);
        }
        s.extend(
            self.world
                .cells
                .iter()
                .map(|c| if c.state_schedule[t] { 1.0 } else { 0.0 }),
        );
        s
    }

    pub fn enforce(&self, actions: &[Action]) -> Vec<Action> {
        enforce_constraints(actions, self.v_max(), self.p_max(), self.fleet_max)
    }

    /// Maps raw network outputs to physical actions and steps.
    pub fn step(&mut self, raw: &[[f64; 3]]) -> Result<StepOutcome> {
        let (v, p) = (self.v_max(), self.p_max());
        let actions: Vec<Action> = raw.iter().map(|&r| Action::from_raw(r, v, p)).collect();
        self.step_actions(&actions)
    }

    pub fn step_actions(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let n = self.num_agents();
        if actions.len() != n {
            return Err(Error::Shape {
                context: "joint action",
                expected: n,
                got: actions.len(),
            });
        }
        let applied = self.enforce(actions);
        let w = self.world.config.area_half_width;
        let v_max = self.v_max();
        let mut moved = Vec::with_capacity(n);
        for (pos, a) in self.positions.iter_mut().zip(&applied) {
            let next = [(pos[0] + a.dx).clamp(-w, w), (pos[1] + a.dy).clamp(-w, w)];
            // The recorded step is the applied one unless the boundary cut
            // it short; either way it lies in the v_max disc.
            let d = if next == [pos[0] + a.dx, pos[1] + a.dy] {
                [a.dx, a.dy]
            } else {
                clip_displacement([next[0] - pos[0], next[1] - pos[1]], v_max)
            };
            moved.push(d);
            *pos = next;
        }
        self.powers = applied.iter().map(|a| a.power).collect();

        let world = Arc::clone(&self.world);
        let t = self.t;
        let active: Vec<[f64; 2]> = world
            .cells
            .iter()
            .filter(|c| c.state_schedule[t])
            .map(|c| c.center)
            .collect();
        let user_pos: Vec<[f64; 2]> = world.users.iter().map(|u| u.position).collect();
        let gains = channel::sample_gain_matrix(
            &self.positions,
            world.config.uav_altitude,
            &active,
            &user_pos,
            &self.config.channel,
            &mut self.rng,
        )?;
        let links: Vec<UserLink<f64>> = world
            .users
            .iter()
            .map(|u| UserLink {
                demand: u.demand_profile[t],
                gbs_served: !world.needs_uav(u.id, t),
            })
            .collect();
        let report = channel::compute_sinr(&self.powers, &gains, &links, &self.config.channel)?;

        let needy = links.iter().filter(|l| !l.gbs_served).count();
        let served_per_uav: Vec<usize> = (0..n).map(|i| report.served_by(i).count()).collect();
        let uav_served: usize = served_per_uav.iter().sum();
        let ratio = |k: usize| if needy == 0 { 1.0 } else { k as f64 / needy as f64 };

        let e_max = self.e_max();
        let mut uav_prop = Vec::with_capacity(n);
        let mut uav_comm = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let rw = &self.config.reward;
        for i in 0..n {
            let (prop, comm) = energy::uav_step_energy(moved[i][0].hypot(moved[i][1]), self.powers[i], &self.energy)?;
            uav_prop.push(prop);
            uav_comm.push(comm);
            // E_i <= e_max exactly; the clamp absorbs rounding.
            let penalty = ((prop + comm) / e_max).min(1.0);
            rewards.push(rw.omega1 * ratio(served_per_uav[i]) + rw.omega2 * (1.0 - penalty));
        }

        let (loads, gbs) = cell_loads_and_gbs_service(&world, t, &self.energy);
        let cell_on: Vec<bool> = world.cells.iter().map(|c| c.state_schedule[t]).collect();
        let mut cell_power = Vec::with_capacity(cell_on.len());
        let mut site_on = vec![false; world.sites.len()];
        for (c, (&on, &load)) in cell_on.iter().zip(&loads).enumerate() {
            cell_power.push(energy::cell_step_power(on, load, &self.energy)?);
            site_on[world.cells[c].site_id] |= on;
        }
        let site_power = site_on
            .iter()
            .map(|&on| if on { self.energy.p_site } else { 0.0 })
            .collect();
        let gbs_served = gbs.iter().filter(|&&s| s).count();
        let throughput = channel::total_throughput(&report);
        self.trace.push(
            cell_on,
            loads,
            moved.iter().map(|d| d[0].hypot(d[1])).collect(),
            self.powers.clone(),
        );
        let info = StepInfo {
            coverage: ratio(uav_served),
            uav_served,
            gbs_served,
            needy,
            e_max,
            throughput,
        };
        self.records.push(StepRecord {
            t,
            positions: self.positions.clone(),
            displacements: moved,
            powers: self.powers.clone(),
            assoc: report.assoc.clone(),
            served: report.served_mask.clone(),
            rewards: rewards.clone(),
            uav_energy: uav_prop.iter().zip(&uav_comm).map(|(a, b)| a + b).collect(),
            coverage: info.coverage,
            uav_served,
            gbs_served,
            needy,
            throughput,
        });

        self.t += 1;
        self.done = self.t >= world.episode_length();
        Ok(StepOutcome {
            rewards,
            report,
            energy: StepEnergy {
                uav_prop,
                uav_comm,
                cell_power,
                site_power,
            },
            done: self.done,
            info,
            observations: self.observations(),
            global_state: self.global_state(),
            applied,
        })
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn energy_trace(&self) -> &EnergyTrace<f64> {
        &self.trace
    }

    /// Energy ledger of the steps taken since the last reset.
    pub fn ledger(&self) -> Result<EnergyLedger<f64>> {
        energy::episode_ledger(&self.trace, &self.energy)
    }

    pub fn objective(&self) -> f64 {
        episode_objective(&self.records, self.config.reward.lambda)
    }
}
