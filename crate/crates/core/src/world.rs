//! Static scenario: hexagonal cells grouped in three-sector sites, fixed
//! users with synthesized rate demands, and the cell sleep schedule.

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// RNG stream identifiers derived from one seed.
pub mod streams {
    pub const PLACEMENT: u64 = 1;
    pub const TRAFFIC: u64 = 2;
    pub const SCHEDULE: u64 = 3;
    pub const EPISODE: u64 = 10;
    pub const POLICY: u64 = 11;
    pub const TRAINER: u64 = 12;
    pub const INIT: u64 = 13;
}

/// Independent ChaCha stream `stream` of `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id of episode `episode` within a per-episode family `base`.
pub fn episode_stream(base: u64, episode: u64) -> u64 {
    ((episode + 1) << 16) | base
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    File,
    /// `floor(K f)` random cells sleep.
    RandomFraction,
    /// `floor(S f)` random sites sleep with all three of their cells.
    RandomSites,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Centre of the per-user base-rate range, bits/s.
    pub base_rate_mean: f64,
    /// Half-width of the per-user base-rate range, bits/s.
    pub base_rate_spread: f64,
    pub surge_multiplier: f64,
    /// Per-step probability that a quiet user starts a surge.
    pub surge_on_prob: f64,
    /// Per-step probability that a surging user calms down.
    pub surge_off_prob: f64,
    /// Weights over the streaming-like and conferencing-like profiles.
    pub profile_mix: [f64; 2],
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            base_rate_mean: 2.0e6,
            base_rate_spread: 1.0e6,
            surge_multiplier: 2.0,
            surge_on_prob: 0.02,
            surge_off_prob: 0.2,
            profile_mix: [0.5, 0.5],
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        let lo = self.base_rate_mean - self.base_rate_spread;
        if !(self.base_rate_spread >= 0.0 && lo > 0.0 && self.base_rate_mean.is_finite()) {
            return Err(Error::Config(format!(
                "base rate range [{}, {}] must be positive",
                lo,
                self.base_rate_mean + self.base_rate_spread
            )));
        }
        if !(self.surge_multiplier >= 1.0 && self.surge_multiplier.is_finite()) {
            return Err(Error::Config("surge_multiplier must be >= 1".into()));
        }
        for (name, p) in [
            ("surge_on_prob", self.surge_on_prob),
            ("surge_off_prob", self.surge_off_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        let [a, b] = self.profile_mix;
        if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
            return Err(Error::Config(
                "profile_mix weights must be >= 0 with positive sum".into(),
            ));
        }
        Ok(())
    }

    /// Largest demand any user can reach.
    pub fn max_demand(&self) -> f64 {
        (self.base_rate_mean + self.base_rate_spread) * self.surge_multiplier
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// The simulation area is the square [-w, w]^2, meters.
    pub area_half_width: f64,
    pub num_sites: usize,
    /// Hexagon circumradius, meters.
    pub cell_radius: f64,
    pub num_uavs: usize,
    pub num_users: usize,
    /// Fixed flight altitude, meters.
    pub uav_altitude: f64,
    /// Largest displacement per step, meters.
    pub v_max: f64,
    /// Per-UAV transmit power bound, watts.
    pub p_max: f64,
    pub episode_length: usize,
    /// Step duration, seconds.
    pub dt: f64,
    pub traffic: TrafficConfig,
    pub schedule_mode: ScheduleMode,
    pub sleep_fraction: f64,
    /// Step at which a random schedule redraws its sleeping set.
    pub switch_step: Option<usize>,
    /// Rows = cells, columns = steps. Required for `schedule_mode = "file"`.
    pub schedule_file: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_half_width: 500.0,
            num_sites: 3,
            cell_radius: 150.0,
            num_uavs: 2,
            num_users: 30,
            uav_altitude: 100.0,
            v_max: 25.0,
            p_max: 2.0,
            episode_length: 100,
            dt: 1.0,
            traffic: TrafficConfig::default(),
            schedule_mode: ScheduleMode::RandomFraction,
            sleep_fraction: 1.0 / 3.0,
            switch_step: None,
            schedule_file: None,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_sites", self.num_sites),
            ("num_uavs", self.num_uavs),
            ("num_users", self.num_users),
            ("episode_length", self.episode_length),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        let positives = [
            ("area_half_width", self.area_half_width),
            ("cell_radius", self.cell_radius),
            ("uav_altitude", self.uav_altitude),
            ("v_max", self.v_max),
            ("p_max", self.p_max),
            ("dt", self.dt),
        ];
        for (name, x) in positives {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !(0.0..=1.0).contains(&self.sleep_fraction) {
            return Err(Error::Config("sleep_fraction must lie in [0, 1]".into()));
        }
        if self.schedule_mode == ScheduleMode::File && self.schedule_file.is_none() {
            return Err(Error::Config("schedule_mode = file needs schedule_file".into()));
        }
        self.traffic.validate()
    }

    pub fn num_cells(&self) -> usize {
        3 * self.num_sites
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: usize,
    /// Point shared by the site's three hexagons.
    pub position: [f64; 2],
    pub cells: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub site_id: usize,
    pub center: [f64; 2],
    pub radius: f64,
    /// `true` = ON at the step.
    pub state_schedule: Vec<bool>,
}

impl Cell {
    /// Point-in-hexagon test for a flat-top hexagon.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = (p[0] - self.center[0]).abs();
        let dy = (p[1] - self.center[1]).abs();
        let half_h = 0.5 * SQRT3 * self.radius;
        dy <= half_h && SQRT3 * dx + dy <= SQRT3 * self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficProfile {
    Streaming,
    Conferencing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub position: [f64; 2],
    pub home_cell: usize,
    pub profile: TrafficProfile,
    pub base_rate: f64,
    /// Burst-chain state per step.
    pub surge: Vec<bool>,
    /// Required rate per step, bits/s.
    pub demand_profile: Vec<f64>,
}

/// Immutable scenario. Safe to share across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: ScenarioConfig,
    pub sites: Vec<Site>,
    pub cells: Vec<Cell>,
    pub users: Vec<User>,
}

impl World {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn episode_length(&self) -> usize {
        self.config.episode_length
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.config.episode_length {
            return Err(Error::OutOfRange {
                what: "step",
                value: t,
                limit: self.config.episode_length,
            });
        }
        Ok(())
    }

    pub fn is_active(&self, cell: usize, t: usize) -> bool {
        self.cells[cell].state_schedule[t]
    }

    /// Cells switched off at step `t`, ascending.
    pub fn inactive_cells(&self, t: usize) -> Result<Vec<usize>> {
        self.check_step(t)?;
        Ok(self
            .cells
            .iter()
            .filter(|c| !c.state_schedule[t])
            .map(|c| c.id)
            .collect())
    }

    pub fn active_cells(&self, t: usize) -> Result<Vec<usize>> {
        self.check_step(t)?;
        Ok(self
            .cells
            .iter()
            .filter(|c| c.state_schedule[t])
            .map(|c| c.id)
            .collect())
    }

    pub fn demand_at(&self, user: usize, t: usize) -> Result<f64> {
        self.check_step(t)?;
        let u = self.users.get(user).ok_or(Error::OutOfRange {
            what: "user",
            value: user,
            limit: self.users.len(),
        })?;
        Ok(u.demand_profile[t])
    }

    /// Whether user `j` sits in a sleeping cell at step `t`.
    pub fn needs_uav(&self, user: usize, t: usize) -> bool {
        !self.is_active(self.users[user].home_cell, t)
    }

    /// Copy of the world with every cell ON at every step.
    pub fn with_all_cells_on(&self) -> World {
        let mut w = self.clone();
        for c in &mut w.cells {
            c.state_schedule.iter_mut().for_each(|s| *s = true);
        }
        w
    }

    /// Hex SHA-256 over the canonical JSON encoding of the world.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Axial coordinates of a flat-top hexagon to its Cartesian centre.
fn axial_to_xy(q: i64, r: i64, radius: f64) -> [f64; 2] {
    [1.5 * radius * q as f64, SQRT3 * radius * (r as f64 + 0.5 * q as f64)]
}

/// Site origins on the index-3 sublattice `q - r = 0 (mod 3)`, nearest first.
/// Each origin `c` owns the mutually adjacent hexes `c`, `c+(1,0)`, `c+(1,-1)`,
/// and these clusters tile the plane.
fn site_origins(n: usize) -> Vec<(i64, i64)> {
    let span = n as i64 + 2;
    let mut pts = Vec::new();
    for q in -span..=span {
        for r in -span..=span {
            if (q - r).rem_euclid(3) == 0 {
                pts.push((q, r));
            }
        }
    }
    let key = |&(q, r): &(i64, i64)| {
        let xy = axial_to_xy(q, r, 1.0);
        let mut ang = xy[1].atan2(xy[0]);
        if ang < 0.0 {
            ang += 2.0 * std::f64::consts::PI;
        }
        (q * q + q * r + r * r, ang)
    };
    pts.sort_by(|a, b| {
        let (da, aa) = key(a);
        let (db, ab) = key(b);
        da.cmp(&db).then(aa.total_cmp(&ab))
    });
    pts.truncate(n);
    pts
}

fn build_layout(config: &ScenarioConfig) -> Result<(Vec<Site>, Vec<Cell>)> {
    let radius = config.cell_radius;
    let offsets = [(0, 0), (1, 0), (1, -1)];
    let mut centers = Vec::new();
    for &(q, r) in &site_origins(config.num_sites) {
        for (dq, dr) in offsets {
            centers.push(axial_to_xy(q + dq, r + dr, radius));
        }
    }
    // Centre the bounding box of the hexagons on the origin.
    let half_h = 0.5 * SQRT3 * radius;
    let extent = |k: usize, half: f64| {
        let lo = centers.iter().map(|c| c[k] - half).fold(f64::INFINITY, f64::min);
        let hi = centers.iter().map(|c| c[k] + half).fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    let (cx, cy) = (extent(0, radius), extent(1, half_h));
    for c in &mut centers {
        c[0] -= cx;
        c[1] -= cy;
    }

    let w = config.area_half_width;
    for c in &centers {
        if c[0].abs() + radius > w || c[1].abs() + half_h > w {
            return Err(Error::Config(format!(
                "{} sites of radius {radius} m do not fit in [-{w}, {w}]^2",
                config.num_sites
            )));
        }
    }

    let t_len = config.episode_length;
    let cells = centers
        .iter()
        .enumerate()
        .map(|(id, &center)| Cell {
            id,
            site_id: id / 3,
            center,
            radius,
            state_schedule: vec![true; t_len],
        })
        .collect::<Vec<_>>();
    let sites = (0..config.num_sites)
        .map(|s| {
            let ids = [3 * s, 3 * s + 1, 3 * s + 2];
            let mean = |k: usize| ids.iter().map(|&i| cells[i].center[k]).sum::<f64>() / 3.0;
            Site {
                id: s,
                position: [mean(0), mean(1)],
                cells: ids,
            }
        })
        .collect();
    Ok((sites, cells))
}

/// Index of the nearest cell centre; ties go to the lowest index.
pub fn nearest_cell(cells: &[Cell], p: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in cells {
        let d = (p[0] - c.center[0]).powi(2) + (p[1] - c.center[1]).powi(2);
        if d < best_d {
            best = c.id;
            best_d = d;
        }
    }
    best
}

fn place_users(config: &ScenarioConfig, cells: &[Cell]) -> Vec<[f64; 2]> {
    let mut rng = rng_stream(config.seed, streams::PLACEMENT);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for c in cells {
        x0 = x0.min(c.center[0] - c.radius);
        x1 = x1.max(c.center[0] + c.radius);
        y0 = y0.min(c.center[1] - c.radius);
        y1 = y1.max(c.center[1] + c.radius);
    }
    let mut out = Vec::with_capacity(config.num_users);
    while out.len() < config.num_users {
        let p = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
        if cells[nearest_cell(cells, p)].contains(p) {
            out.push(p);
        }
    }
    out
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Base rate, profile and burst chain for every user, drawn in user order.
fn synthesize_traffic(
    traffic: &TrafficConfig,
    num_users: usize,
    t_len: usize,
    seed: u64,
) -> Vec<(TrafficProfile, f64, Vec<bool>)> {
    let mut rng = rng_stream(seed, streams::TRAFFIC);
    let lo = traffic.base_rate_mean - traffic.base_rate_spread;
    let hi = traffic.base_rate_mean + traffic.base_rate_spread;
    let mid = (lo * hi).sqrt();
    let p_stream = traffic.profile_mix[0] / (traffic.profile_mix[0] + traffic.profile_mix[1]);
    (0..num_users)
        .map(|_| {
            let profile = if rng.random::<f64>() < p_stream {
                TrafficProfile::Streaming
            } else {
                TrafficProfile::Conferencing
            };
            let base = match profile {
                TrafficProfile::Streaming => log_uniform(&mut rng, mid, hi),
                TrafficProfile::Conferencing => log_uniform(&mut rng, lo, mid),
            };
            let mut surge = Vec::with_capacity(t_len);
            let mut on = false;
            surge.push(on);
            for _ in 1..t_len {
                let u: f64 = rng.random();
                on = if on {
                    u >= traffic.surge_off_prob
                } else {
                    u < traffic.surge_on_prob
                };
                surge.push(on);
            }
            (profile, base, surge)
        })
        .collect()
}

/// Reads a `K x T` comma-separated 0/1 matrix.
pub fn load_schedule(path: &Path, num_cells: usize, t_len: usize) -> Result<Vec<Vec<bool>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schedule(&text, num_cells, t_len).map_err(|reason| Error::Schedule {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn parse_schedule(text: &str, num_cells: usize, t_len: usize) -> std::result::Result<Vec<Vec<bool>>, String> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != num_cells {
        return Err(format!("expected {num_cells} rows, found {}", rows.len()));
    }
    rows.iter()
        .enumerate()
        .map(|(k, line)| {
            let row = line
                .split(',')
                .map(|v| match v.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(format!("row {k}: bad entry {other:?}")),
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if row.len() != t_len {
                return Err(format!("row {k}: expected {t_len} columns, found {}", row.len()));
            }
            Ok(row)
        })
        .collect()
}

fn random_schedule(config: &ScenarioConfig) -> Vec<Vec<bool>> {
    let k = config.num_cells();
    let t_len = config.episode_length;
    // Cells sleep in groups of `group` consecutive ids.
    let group = match config.schedule_mode {
        ScheduleMode::RandomSites => 3,
        _ => 1,
    };
    let units = k / group;
    // Absorbs the rounding of fractions such as 1/3.
    let n_off = (units as f64 * config.sleep_fraction + 1e-9).floor() as usize;
    let mut rng = rng_stream(config.seed, streams::SCHEDULE);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut on = vec![true; k];
        for u in index::sample(rng, units, n_off.min(units)) {
            on[u * group..(u + 1) * group].fill(false);
        }
        on
    };
    let first = draw(&mut rng);
    let second = config.switch_step.map(|_| draw(&mut rng));
    let mut sched = vec![vec![true; t_len]; k];
    for t in 0..t_len {
        let state = match (config.switch_step, &second) {
            (Some(s), Some(alt)) if t >= s => alt,
            _ => &first,
        };
        for (cell, row) in sched.iter_mut().enumerate() {
            row[t] = state[cell];
        }
    }
    sched
}

/// Builds the scenario with the schedule taken from the config.
pub fn build_world(config: &ScenarioConfig) -> Result<World> {
    config.validate()?;
    let schedule = match config.schedule_mode {
        ScheduleMode::RandomFraction | ScheduleMode::RandomSites => random_schedule(config),
        ScheduleMode::File => {
            let path = config.schedule_file.as_ref().expect("validated");
            load_schedule(path, config.num_cells(), config.episode_length)?
        }
    };
    build_world_with_schedule(config, schedule)
}

/// Builds the scenario with an explicit `K x T` schedule (`true` = ON).
pub fn build_world_with_schedule(config: &ScenarioConfig, schedule: Vec<Vec<bool>>) -> Result<World> {
    config.validate()?;
    let (sites, mut cells) = build_layout(config)?;
    if schedule.len() != cells.len() {
        return Err(Error::Shape {
            context: "schedule rows",
            expected: cells.len(),
            got: schedule.len(),
        });
    }
    for (cell, row) in cells.iter_mut().zip(schedule) {
        if row.len() != config.episode_length {
            return Err(Error::Shape {
                context: "schedule columns",
                expected: config.episode_length,
                got: row.len(),
            });
        }
        cell.state_schedule = row;
    }

    let positions = place_users(config, &cells);
    let traffic = synthesize_traffic(&config.traffic, config.num_users, config.episode_length, config.seed);
    let users = positions
        .into_iter()
        .zip(traffic)
        .enumerate()
        .map(|(id, (position, (profile, base_rate, surge)))| {
            let demand_profile = surge
                .iter()
                .map(|&on| {
                    if on {
                        base_rate * config.traffic.surge_multiplier
                    } else {
                        base_rate
                    }
                })
                .collect();
            User {
                id,
                position,
                home_cell: nearest_cell(&cells, position),
                profile,
                base_rate,
                surge,
                demand_profile,
            }
        })
        .collect();

    Ok(World {
        config: config.clone(),
        sites,
        cells,
        users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn zero_counts_rejected() {
        let mut c = cfg();
        c.num_users = 0;
        assert!(matches!(build_world(&c), Err(Error::Config(_))));
        let mut c = cfg();
        c.num_sites = 0;
        assert!(build_world(&c).is_err());
    }

    #[test]
    fn cells_must_fit() {
        let mut c = cfg();
        c.area_half_width = 100.0;
        assert!(matches!(build_world(&c), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic() {
        let a = build_world(&cfg()).unwrap();
        let b = build_world(&cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = cfg();
        c.seed = 8;
        assert_ne!(build_world(&c).unwrap().fingerprint(), a.fingerprint());
    }

    #[test]
    fn three_adjacent_cells_per_site() {
        let w = build_world(&cfg()).unwrap();
        assert_eq!(w.num_cells(), 9);
        let r = w.config.cell_radius;
        for s in &w.sites {
            for &c in &s.cells {
                assert_eq!(w.cells[c].site_id, s.id);
                let d = ((w.cells[c].center[0] - s.position[0]).powi(2)
                    + (w.cells[c].center[1] - s.position[1]).powi(2))
                .sqrt();
                assert!((d - r).abs() < 1e-9);
            }
        }
        // No two cell centres closer than the hex centre spacing.
        for a in &w.cells {
            for b in &w.cells {
                if a.id < b.id {
                    let d = ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt();
                    assert!(d > SQRT3 * r - 1e-9);
                }
            }
        }
    }

    #[test]
    fn random_fraction_count() {
        let mut c = cfg();
        c.num_sites = 3;
        c.sleep_fraction = 1.0 / 3.0;
        c.seed = 7;
        let w = build_world(&c).unwrap();
        for t in 0..c.episode_length {
            assert_eq!(w.inactive_cells(t).unwrap().len(), 3);
        }
    }

    #[test]
    fn random_sites_sleep_whole_sites() {
        let mut c = cfg();
        c.schedule_mode = ScheduleMode::RandomSites;
        c.sleep_fraction = 1.0 / 3.0;
        let w = build_world(&c).unwrap();
        let off = w.inactive_cells(0).unwrap();
        assert_eq!(off.len(), 3);
        let site = w.cells[off[0]].site_id;
        assert!(off.iter().all(|&k| w.cells[k].site_id == site));
    }

    #[test]
    fn switch_step_changes_schedule_once() {
        let mut c = cfg();
        c.switch_step = Some(50);
        c.seed = 3;
        let w = build_world(&c).unwrap();
        let before = w.inactive_cells(0).unwrap();
        assert_eq!(before, w.inactive_cells(49).unwrap());
        assert_eq!(w.inactive_cells(50).unwrap(), w.inactive_cells(99).unwrap());
    }

    #[test]
    fn inactive_cells_direct_read() {
        let c = cfg();
        let k = c.num_cells();
        let mut sched = vec![vec![true; c.episode_length]; k];
        assert!(build_world_with_schedule(&c, sched.clone())
            .unwrap()
            .inactive_cells(10)
            .unwrap()
            .is_empty());
        sched[2][5] = false;
        let w = build_world_with_schedule(&c, sched).unwrap();
        assert_eq!(w.inactive_cells(5).unwrap(), vec![2]);
        assert!(w.inactive_cells(4).unwrap().is_empty());
        let off = build_world_with_schedule(&c, vec![vec![false; c.episode_length]; k]).unwrap();
        assert_eq!(off.inactive_cells(0).unwrap(), (0..k).collect::<Vec<_>>());
        assert!(matches!(
            w.inactive_cells(c.episode_length),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn schedule_file_shape_checked() {
        let c = cfg();
        let good = ["1,0,1"; 9].join("\n");
        assert_eq!(parse_schedule(&good, 9, 3).unwrap()[0], vec![true, false, true]);
        assert!(parse_schedule(&good, 9, 4).is_err());
        assert!(parse_schedule(&good, 8, 3).is_err());
        assert!(parse_schedule("1,2,1", 1, 3).is_err());
        let short = vec![vec![true; 3]; c.num_cells()];
        assert!(matches!(build_world_with_schedule(&c, short), Err(Error::Shape { .. })));
    }

    #[test]
    fn users_inside_and_homed_to_nearest() {
        let w = build_world(&cfg()).unwrap();
        for u in &w.users {
            assert!(w.cells[u.home_cell].contains(u.position));
            let d = |c: &Cell| (u.position[0] - c.center[0]).powi(2) + (u.position[1] - c.center[1]).powi(2);
            let best = w.cells.iter().map(d).fold(f64::INFINITY, f64::min);
            assert_eq!(d(&w.cells[u.home_cell]), best);
            assert!(u.demand_profile.iter().all(|&r| r > 0.0));
        }
    }

    #[test]
    fn constant_demand_without_surge() {
        let mut c = cfg();
        c.traffic.surge_multiplier = 1.0;
        c.traffic.surge_on_prob = 0.5;
        let w = build_world(&c).unwrap();
        for u in &w.users {
            assert!(u.demand_profile.iter().all(|&r| r == u.base_rate));
        }
        let mut c = cfg();
        c.traffic.surge_on_prob = 0.0;
        let w = build_world(&c).unwrap();
        assert!(w.users.iter().all(|u| u.surge.iter().all(|&s| !s)));
    }

    #[test]
    fn permanent_surge_after_first_step() {
        let mut c = cfg();
        c.traffic.surge_on_prob = 1.0;
        c.traffic.surge_off_prob = 0.0;
        c.traffic.surge_multiplier = 3.0;
        let w = build_world(&c).unwrap();
        for u in &w.users {
            assert_eq!(w.demand_at(u.id, 0).unwrap(), u.base_rate);
            for t in 1..c.episode_length {
                assert_eq!(w.demand_at(u.id, t).unwrap(), 3.0 * u.base_rate);
            }
        }
        assert!(w.demand_at(c.num_users, 0).is_err());
    }

    #[test]
    fn base_rates_respect_range() {
        let w = build_world(&cfg()).unwrap();
        let tc = &w.config.traffic;
        for u in &w.users {
            assert!(u.base_rate >= tc.base_rate_mean - tc.base_rate_spread - 1e-6);
            assert!(u.base_rate <= tc.base_rate_mean + tc.base_rate_spread + 1e-6);
        }
    }
}
