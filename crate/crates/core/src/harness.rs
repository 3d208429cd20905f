//! Experiment configuration, evaluation, metrics and plot-ready output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::env::{audit_constraints, Env, EnvConfig, StepRecord};
use crate::error::{Error, Result};
use crate::maddpg::{write_curve_csv, CurvePoint, TrainConfig};
use crate::policies::{all_cells_on_eval, Policy, PolicyKind};
use crate::world::{build_world, ScenarioConfig, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 15,
            seed: 1000,
        }
    }
}

/// Top-level TOML document: `[scenario]`, `[env]` (with `[env.channel]`,
/// `[env.energy]`, `[env.reward]`), `[train]` and `[eval]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Parses `path`; a relative schedule file is resolved against the
    /// directory of `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(file) = &cfg.scenario.schedule_file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.scenario.schedule_file = Some(base.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn build_world(&self) -> Result<Arc<World>> {
        Ok(Arc::new(build_world(&self.scenario)?))
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Episode-mean energies, Wh.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub e_uav: f64,
    pub e_cell: f64,
    pub e_site: f64,
    /// Cells plus sites.
    pub e_network: f64,
    /// UAVs plus network.
    pub e_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: PolicyKind,
    /// Fingerprint of the scheduled world, also for the all-on reference.
    pub world_fingerprint: String,
    pub seed: u64,
    pub episodes: usize,
    /// Served UAV-needed users over UAV-needed users, summed over the
    /// episode's steps (1 when no user needed a UAV).
    pub coverage: Vec<f64>,
    /// Mean per-agent reward of each episode.
    pub episode_reward: Vec<f64>,
    /// Mean per-agent reward at each step, averaged over episodes.
    pub reward_per_step: Vec<f64>,
    /// UAV-served plus GBS-served users over all users, percent.
    pub served_pct: Vec<f64>,
    pub objective: Vec<f64>,
    pub energy: EnergySummary,
    pub steps: usize,
    pub violations: usize,
}

impl EvalReport {
    pub fn mean_coverage(&self) -> f64 {
        mean(&self.coverage)
    }

    pub fn mean_served_pct(&self) -> f64 {
        mean(&self.served_pct)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub struct EvalOutput {
    pub report: EvalReport,
    /// Per-episode step records; empty for the all-on reference.
    pub traces: Vec<Vec<StepRecord>>,
}

/// Runs `episodes` greedy episodes with per-episode streams of `seed`.
pub fn run_eval(
    world: &Arc<World>,
    env_config: &EnvConfig,
    policy: &mut Policy,
    episodes: usize,
    seed: u64,
) -> Result<EvalOutput> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let fingerprint = world.fingerprint();
    let users = world.num_users() as f64;
    if let Policy::AllOn = policy {
        let mut energy = EnergySummary::default();
        let mut served_pct = Vec::with_capacity(episodes);
        let mut steps = 0;
        for _ in 0..episodes {
            let ep = all_cells_on_eval(world, &env_config.energy)?;
            energy.e_cell += ep.ledger.e_cell / episodes as f64;
            energy.e_site += ep.ledger.e_site / episodes as f64;
            served_pct.push(100.0 * ep.served.iter().sum::<usize>() as f64 / (users * ep.served.len() as f64));
            steps += ep.served.len();
        }
        energy.e_network = energy.e_cell + energy.e_site;
        energy.e_total = energy.e_network;
        return Ok(EvalOutput {
            report: EvalReport {
                policy: PolicyKind::AllOn,
                world_fingerprint: fingerprint,
                seed,
                episodes,
                coverage: vec![1.0; episodes],
                episode_reward: Vec::new(),
                reward_per_step: Vec::new(),
                served_pct,
                objective: vec![0.0; episodes],
                energy,
                steps,
                violations: 0,
            },
            traces: Vec::new(),
        });
    }

    let mut env = Env::new(Arc::clone(world), env_config.clone())?;
    policy.check_compatible(world, &env)?;
    let t_len = world.episode_length();
    let mut report = EvalReport {
        policy: policy.kind(),
        world_fingerprint: fingerprint,
        seed,
        episodes,
        coverage: Vec::with_capacity(episodes),
        episode_reward: Vec::with_capacity(episodes),
        reward_per_step: vec![0.0; t_len],
        served_pct: Vec::with_capacity(episodes),
        objective: Vec::with_capacity(episodes),
        energy: EnergySummary::default(),
        steps: 0,
        violations: 0,
    };
    let mut traces = Vec::with_capacity(episodes);
    let k = episodes as f64;
    for ep in 0..episodes as u64 {
        env.reset(seed, ep);
        policy.reset(seed, ep);
        while !env.is_done() {
            let actions = policy.act(&env)?;
            env.step_actions(&actions)?;
        }
        let recs = env.records();
        let needy: usize = recs.iter().map(|r| r.needy).sum();
        let served: usize = recs.iter().map(|r| r.uav_served).sum();
        report
            .coverage
            .push(if needy == 0 { 1.0 } else { served as f64 / needy as f64 });
        let step_means: Vec<f64> = recs.iter().map(|r| mean(&r.rewards)).collect();
        report.episode_reward.push(mean(&step_means));
        for (acc, r) in report.reward_per_step.iter_mut().zip(&step_means) {
            *acc += r / k;
        }
        let total_served: usize = recs.iter().map(|r| r.uav_served + r.gbs_served).sum();
        report
            .served_pct
            .push(100.0 * total_served as f64 / (users * recs.len() as f64));
        report.objective.push(env.objective());
        let ledger = env.ledger()?;
        report.energy.e_uav += ledger.e_uav / k;
        report.energy.e_cell += ledger.e_cell / k;
        report.energy.e_site += ledger.e_site / k;
        report.steps += recs.len();
        report.violations += audit_constraints(recs, env.v_max(), env.p_max(), env.fleet_power_max());
        traces.push(recs.to_vec());
    }
    let e = &mut report.energy;
    e.e_network = e.e_cell + e.e_site;
    e.e_total = e.e_uav + e.e_network;
    Ok(EvalOutput { report, traces })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub method: PolicyKind,
    /// `None` when no UAVs are deployed.
    pub e_uav: Option<f64>,
    /// Cells plus sites.
    pub e_cell: f64,
    pub e_total: f64,
    pub served_pct: f64,
    /// `(E_ref - E) / E_ref * 100` against the learned policy.
    pub saving_vs_maddpg: Option<f64>,
    /// `(E_allon - E) / E_allon * 100`.
    pub saving_vs_allon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    pub world_fingerprint: String,
    pub rows: Vec<EnergyRow>,
}

/// Savings of `e` relative to `reference`, percent.
pub fn saving_pct(reference: f64, e: f64) -> f64 {
    (reference - e) / reference * 100.0
}

/// Builds the comparison table. Every report must come from the same world
/// and evaluation seeds.
pub fn energy_table(reports: &[EvalReport]) -> Result<EnergyTable> {
    let first = reports.first().ok_or(Error::Empty("energy table reports"))?;
    for r in reports {
        if r.world_fingerprint != first.world_fingerprint {
            return Err(Error::WorldMismatch(
                first.world_fingerprint.clone(),
                r.world_fingerprint.clone(),
            ));
        }
        if r.policy != PolicyKind::AllOn
            && first.policy != PolicyKind::AllOn
            && (r.seed, r.episodes) != (first.seed, first.episodes)
        {
            return Err(Error::Config(format!(
                "{} evaluated with seed {} x {} episodes, {} with seed {} x {}",
                first.policy, first.seed, first.episodes, r.policy, r.seed, r.episodes
            )));
        }
    }
    let total_of = |k: PolicyKind| reports.iter().find(|r| r.policy == k).map(|r| r.energy.e_total);
    let maddpg = total_of(PolicyKind::Maddpg);
    let allon = total_of(PolicyKind::AllOn);
    let rows = reports
        .iter()
        .map(|r| EnergyRow {
            method: r.policy,
            e_uav: (r.policy != PolicyKind::AllOn).then_some(r.energy.e_uav),
            e_cell: r.energy.e_network,
            e_total: r.energy.e_total,
            served_pct: r.mean_served_pct(),
            saving_vs_maddpg: maddpg.map(|m| saving_pct(r.energy.e_total, m)),
            saving_vs_allon: allon.map(|a| saving_pct(a, r.energy.e_total)),
        })
        .collect();
    Ok(EnergyTable {
        world_fingerprint: first.world_fingerprint.clone(),
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.2}"))
}

impl EnergyTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "e_uav_wh",
            "e_cell_wh",
            "e_total_wh",
            "served_pct",
            "saving_vs_maddpg_pct",
            "saving_vs_allon_pct",
        ])?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
            w.write_record([
                r.method.name().to_string(),
                opt(r.e_uav),
                r.e_cell.to_string(),
                r.e_total.to_string(),
                r.served_pct.to_string(),
                opt(r.saving_vs_maddpg),
                opt(r.saving_vs_allon),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<table>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:>10} {:>10} {:>10} {:>9} {:>12} {:>12}",
            "method", "E_UAV Wh", "E_cell Wh", "E_total Wh", "served %", "vs maddpg %", "vs allon %"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>10} {:>10.2} {:>10.2} {:>9.2} {:>12} {:>12}",
                r.method.name(),
                fmt_opt(r.e_uav),
                r.e_cell,
                r.e_total,
                r.served_pct,
                fmt_opt(r.saving_vs_maddpg),
                fmt_opt(r.saving_vs_allon)
            );
        }
        s
    }
}

/// One-sided paired t-test of `mean(a - b) > 0`: returns `(t, p)`. With
/// zero spread the p-value is 0 for a positive mean difference and 1
/// otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            context: "paired samples",
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Empty("paired test needs two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(if m > 0.0 {
            (f64::INFINITY, 0.0)
        } else if m < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 1.0)
        });
    }
    let t = m / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok((t, 1.0 - dist.cdf(t)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub world_fingerprint: String,
    pub seed: u64,
    pub code_version: String,
    pub command: String,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, world: &World, seed: u64, command: &str) -> Self {
        Self {
            config_hash: config.hash(),
            world_fingerprint: world.fingerprint(),
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `reward_curve.csv`; an empty curve is an error.
pub fn write_reward_curve(dir: &Path, curve: &[CurvePoint]) -> Result<PathBuf> {
    if curve.is_empty() {
        return Err(Error::Empty("training curve"));
    }
    create_dir(dir)?;
    let path = dir.join("reward_curve.csv");
    let mut buf = Vec::new();
    write_curve_csv(curve, &mut buf)?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Column-per-method CSV with one row per index.
fn columns_csv(index: &str, columns: &[(String, &[f64])]) -> Result<String> {
    let rows = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![index.to_string()];
    header.extend(columns.iter().map(|c| c.0.clone()));
    w.write_record(&header)?;
    for i in 0..rows {
        let mut rec = vec![i.to_string()];
        rec.extend(
            columns
                .iter()
                .map(|c| c.1.get(i).map_or_else(String::new, |v| v.to_string())),
        );
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// `eval_reward_per_step.csv` and `coverage_per_episode.csv`, one column
/// per report.
pub fn write_eval_csvs(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    let uav: Vec<&EvalReport> = reports.iter().filter(|r| r.policy != PolicyKind::AllOn).collect();
    if uav.is_empty() {
        return Err(Error::Empty("evaluation reports"));
    }
    create_dir(dir)?;
    let rewards: Vec<(String, &[f64])> = uav
        .iter()
        .map(|r| (r.policy.name().to_string(), r.reward_per_step.as_slice()))
        .collect();
    write(&dir.join("eval_reward_per_step.csv"), &columns_csv("t", &rewards)?)?;
    let coverage: Vec<(String, &[f64])> = uav
        .iter()
        .map(|r| (r.policy.name().to_string(), r.coverage.as_slice()))
        .collect();
    write(
        &dir.join("coverage_per_episode.csv"),
        &columns_csv("episode", &coverage)?,
    )
}

pub fn write_energy_table(dir: &Path, table: &EnergyTable) -> Result<()> {
    create_dir(dir)?;
    write(&dir.join("energy_table.csv"), &table.to_csv()?)?;
    write(&dir.join("energy_table.txt"), &table.to_text())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes every plot-ready file: training curve, per-step rewards,
/// per-episode coverage, energy table and manifest.
pub fn emit_curves(dir: &Path, curve: &[CurvePoint], reports: &[EvalReport], manifest: &RunManifest) -> Result<()> {
    if curve.is_empty() {
        return Err(Error::Empty("training curve"));
    }
    let table = energy_table(reports)?;
    write_reward_curve(dir, curve)?;
    write_eval_csvs(dir, reports)?;
    write_energy_table(dir, &table)?;
    write_json(&dir.join("manifest.json"), manifest)
}

/// Merges the `report.json` of each input directory, keyed by policy.
pub fn collect_reports(dirs: &[PathBuf]) -> Result<Vec<EvalReport>> {
    let mut by_policy = BTreeMap::new();
    for d in dirs {
        let r: EvalReport = read_json(&d.join("report.json"))?;
        by_policy.insert(PolicyKind::ALL.iter().position(|&k| k == r.policy), r);
    }
    Ok(by_policy.into_values().collect())
}
