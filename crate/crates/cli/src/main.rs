use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use uav_nes::env::write_trace_jsonl;
use uav_nes::harness::{
    collect_reports, energy_table, mean, run_eval, write_energy_table, write_eval_csvs, write_json, write_reward_curve,
    ExperimentConfig, RunManifest,
};
use uav_nes::maddpg::train;
use uav_nes::policies::{Policy, PolicyKind, PolicySpec};

#[derive(Parser)]
#[command(name = "uav-nes", version, about = "UAV-assisted coverage of sleeping cells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the multi-agent actor-critic and write a checkpoint and reward curve.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one policy with exploration off.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PolicyKind,
        /// Checkpoint directory, required for `maddpg`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-episode JSON-lines traces.
        #[arg(long)]
        traces: bool,
    },
    /// Merge evaluation directories into the energy comparison table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let world = cfg.build_world()?;
            let t0 = Instant::now();
            let outcome = train(
                world.clone(),
                cfg.env.clone(),
                cfg.train.clone(),
                Some(&out.join("checkpoint")),
            )?;
            write_reward_curve(&out, &outcome.curve)?;
            write_json(
                &out.join("manifest.json"),
                &RunManifest::new(&cfg, &world, cfg.train.seed, "train"),
            )?;
            let curve: Vec<f64> = outcome.curve.iter().map(|p| p.mean_step_reward).collect();
            let w = curve.len().min(100);
            println!(
                "trained {} episodes in {:.1?}: first {w} mean {:.4}, last {w} mean {:.4}",
                curve.len(),
                t0.elapsed(),
                mean(&curve[..w]),
                mean(&curve[curve.len() - w..])
            );
        }
        Command::Eval {
            config,
            policy,
            checkpoint,
            episodes,
            seed,
            out,
            traces,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let world = cfg.build_world()?;
            if policy == PolicyKind::Maddpg && checkpoint.is_none() {
                bail!("--checkpoint is required for the maddpg policy");
            }
            let spec = PolicySpec {
                checkpoint,
                ..PolicySpec::new(policy)
            };
            let mut p = Policy::from_spec(&spec)?;
            let episodes = episodes.unwrap_or(cfg.eval.episodes);
            let seed = seed.unwrap_or(cfg.eval.seed);
            let output = run_eval(&world, &cfg.env, &mut p, episodes, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_json(&out.join("report.json"), &output.report)?;
            if policy != PolicyKind::AllOn {
                write_eval_csvs(&out, std::slice::from_ref(&output.report))?;
            }
            if traces {
                for (k, trace) in output.traces.iter().enumerate() {
                    let path = out.join(format!("trace_{k:03}.jsonl"));
                    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_trace_jsonl(trace, BufWriter::new(file))?;
                }
            }
            write_json(
                &out.join("manifest.json"),
                &RunManifest::new(&cfg, &world, seed, "eval"),
            )?;
            let r = &output.report;
            println!(
                "{}: coverage {:.4}, served {:.2}%, E_UAV {:.3} Wh, E_total {:.3} Wh, violations {}/{}",
                r.policy,
                r.mean_coverage(),
                r.mean_served_pct(),
                r.energy.e_uav,
                r.energy.e_total,
                r.violations,
                r.steps
            );
        }
        Command::Report { inputs, out } => {
            let reports = collect_reports(&inputs)?;
            let table = energy_table(&reports)?;
            write_energy_table(&out, &table)?;
            if reports.iter().any(|r| r.policy != PolicyKind::AllOn) {
                write_eval_csvs(&out, &reports)?;
            }
            print!("{}", table.to_text());
        }
    }
    Ok(())
}
