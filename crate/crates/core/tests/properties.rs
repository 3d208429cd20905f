use std::sync::Arc;

use proptest::prelude::*;
use uav_nes::channel::{compute_sinr, Matrix, UserLink};
use uav_nes::energy::{episode_ledger, EnergyTrace};
use uav_nes::env::{clip_displacement, enforce_constraints, Action, Env, EnvConfig};
use uav_nes::nn::{MlpSpec, OutputActivation};
use uav_nes::policies::knn_fixed_actions;
use uav_nes::replay::{PrioritizedReplay, ReplayConfig};
use uav_nes::world::{build_world, rng_stream, ScenarioConfig};
use uav_nes::{ChannelParams, EnergyParams, Mlp};

fn gains(n: usize, c: usize, m: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(1e-12..1e-6f64, (n + c) * m).prop_map(move |data| Matrix {
        rows: n + c,
        cols: m,
        data,
    })
}

fn sinr_case() -> impl Strategy<Value = (Vec<f64>, Matrix<f64>)> {
    (1usize..=3, 0usize..=4, 1usize..=5)
        .prop_flat_map(|(n, c, m)| (prop::collection::vec(0.01..2.0f64, n), gains(n, c, m)))
}

fn users(m: usize) -> Vec<UserLink<f64>> {
    vec![
        UserLink {
            demand: 1e6,
            gbs_served: false
        };
        m
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinr_falls_as_an_interferer_gets_louder((powers, g) in sinr_case(), boost in 1.01..10.0f64) {
        prop_assume!(powers.len() > 1);
        let params = ChannelParams::default();
        let u = users(g.cols);
        let base = compute_sinr(&powers, &g, &u, &params).unwrap();
        let mut louder = powers.clone();
        louder[1] *= boost;
        let after = compute_sinr(&louder, &g, &u, &params).unwrap();
        for j in 0..g.cols {
            prop_assert!(after.sinr.get(0, j) < base.sinr.get(0, j));
            prop_assert!(after.sinr.get(1, j) >= base.sinr.get(1, j));
        }
    }

    #[test]
    fn association_invariant_to_common_power_scale((powers, g) in sinr_case(), k in 0.1..10.0f64) {
        let params = ChannelParams::default();
        let scaled_params = ChannelParams {
            noise_power: params.noise_power * k,
            gbs_tx_power: params.gbs_tx_power * k,
            ..params.clone()
        };
        let scaled: Vec<f64> = powers.iter().map(|p| p * k).collect();
        let u = users(g.cols);
        let a = compute_sinr(&powers, &g, &u, &params).unwrap();
        let b = compute_sinr(&scaled, &g, &u, &scaled_params).unwrap();
        prop_assert_eq!(&a.assoc, &b.assoc);
        for (x, y) in a.sinr.data.iter().zip(&b.sinr.data) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn served_users_meet_their_rate((powers, g) in sinr_case()) {
        let params = ChannelParams::default();
        let u = users(g.cols);
        let r = compute_sinr(&powers, &g, &u, &params).unwrap();
        for (j, user) in u.iter().enumerate() {
            if r.served_mask[j] {
                let i = r.assoc[j].unwrap();
                prop_assert!(r.rates.get(i, j) >= user.demand);
                prop_assert!((0..powers.len()).all(|k| r.sinr.get(k, j) <= r.sinr.get(i, j)));
            }
        }
    }

    #[test]
    fn ledger_is_additive_over_concatenation(
        steps_a in 1usize..30,
        steps_b in 1usize..30,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = rng_stream(seed, 0);
        let mut make = |steps| {
            let mut t = EnergyTrace::new(vec![0, 0, 0, 1, 1, 1], 2);
            for _ in 0..steps {
                t.push(
                    (0..6).map(|_| rng.random_bool(0.5)).collect(),
                    (0..6).map(|_| rng.random_range(0.0..=1.0)).collect(),
                    (0..2).map(|_| rng.random_range(0.0..25.0)).collect(),
                    (0..2).map(|_| rng.random_range(0.0..2.0)).collect(),
                );
            }
            t
        };
        let (a, b) = (make(steps_a), make(steps_b));
        let params = EnergyParams::default();
        let la = episode_ledger(&a, &params).unwrap();
        let lb = episode_ledger(&b, &params).unwrap();
        let lab = episode_ledger(&a.concat(&b), &params).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
        prop_assert!(close(lab.e_uav, la.e_uav + lb.e_uav));
        prop_assert!(close(lab.e_cell, la.e_cell + lb.e_cell));
        prop_assert!(close(lab.e_site, la.e_site + lb.e_site));
        prop_assert_eq!(lab.e_total, lab.e_cell + lab.e_site);
    }

    #[test]
    fn enforcement_is_feasible_and_idempotent(
        raw in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64, -1.0..5.0f64), 1..5),
        v_max in 1.0..50.0f64,
        p_max in 0.1..3.0f64,
        fleet in 0.1..6.0f64,
    ) {
        let actions: Vec<Action> = raw.iter().map(|&(dx, dy, power)| Action { dx, dy, power }).collect();
        let once = enforce_constraints(&actions, v_max, p_max, fleet);
        prop_assert!(once.iter().all(|a| a.dx.hypot(a.dy) <= v_max));
        prop_assert!(once.iter().all(|a| (0.0..=p_max).contains(&a.power)));
        prop_assert!(once.iter().map(|a| a.power).sum::<f64>() <= fleet);
        prop_assert_eq!(enforce_constraints(&once, v_max, p_max, fleet), once);
    }

    #[test]
    fn clipping_keeps_direction(dx in -100.0..100.0f64, dy in -100.0..100.0f64, v in 1.0..50.0f64) {
        let [cx, cy] = clip_displacement([dx, dy], v);
        prop_assert!((dx * cy - dy * cx).abs() <= 1e-9 * dx.hypot(dy).max(1.0) * v);
        prop_assert!(dx * cx + dy * cy >= 0.0);
    }

    #[test]
    fn tree_matches_rebuild_after_random_updates(
        ops in prop::collection::vec((0usize..64, 0.0..100.0f64), 1..400),
    ) {
        let mut buf = PrioritizedReplay::new(ReplayConfig { capacity: 64, alpha: 0.7, priority_eps: 1e-6 });
        for i in 0..64 {
            buf.push(i);
        }
        for (idx, td) in ops {
            buf.update_priorities(&[idx], &[td]).unwrap();
        }
        let tree = buf.tree();
        prop_assert!(tree.max_inconsistency() <= 1e-9 * tree.total());
        let p: f64 = (0..64).map(|i| buf.probability(i)).sum();
        prop_assert!((p - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn importance_weights_are_normalized(
        tds in prop::collection::vec(0.0..10.0f64, 32),
        beta in 0.0..=1.0f64,
        seed in any::<u64>(),
    ) {
        let mut buf = PrioritizedReplay::new(ReplayConfig { capacity: 32, alpha: 0.6, priority_eps: 1e-6 });
        for i in 0..32 {
            buf.push(i);
        }
        let idx: Vec<usize> = (0..32).collect();
        buf.update_priorities(&idx, &tds).unwrap();
        let s = buf.sample(8, beta, &mut rng_stream(seed, 0)).unwrap();
        prop_assert!(s.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
        prop_assert!(s.weights.contains(&1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn backward_matches_finite_differences(
        hidden in prop::collection::vec(1usize..12, 1..3),
        tanh in any::<bool>(),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = rng_stream(seed, 0);
        let mut sizes = vec![3];
        sizes.extend(hidden);
        sizes.push(2);
        let act = if tanh { OutputActivation::Tanh } else { OutputActivation::Identity };
        let mut mlp = Mlp::new(MlpSpec::new(sizes, act).unwrap(), None, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = [0.7, -1.3];
        let loss = |m: &Mlp| m.predict(&x).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let (_, cache) = mlp.forward(&x).unwrap();
        let grads: Vec<f64> = mlp.backward(&cache, &g).unwrap().0.iter().copied().collect();
        let theta = mlp.flat_params();
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut p = theta.clone();
            p[k] += h;
            mlp.set_flat_params(&p).unwrap();
            let up = loss(&mlp);
            p[k] -= 2.0 * h;
            mlp.set_flat_params(&p).unwrap();
            let down = loss(&mlp);
            let fd = (up - down) / (2.0 * h);
            prop_assert!((fd - grads[k]).abs() <= 1e-4 * fd.abs().max(grads[k].abs()).max(1e-6));
        }
    }

    #[test]
    fn rewards_bounded_and_steps_feasible(seed in any::<u64>(), raw_seed in any::<u64>()) {
        use rand::Rng;
        let world = Arc::new(build_world(&ScenarioConfig::default()).unwrap());
        let mut env = Env::new(world, EnvConfig::default()).unwrap();
        env.reset(seed, 0);
        let mut rng = rng_stream(raw_seed, 0);
        let w = EnvConfig::default().reward;
        for _ in 0..20 {
            let raw: Vec<[f64; 3]> = (0..env.num_agents()).map(|_| [0; 3].map(|_| rng.random_range(-3.0..3.0))).collect();
            let out = env.step(&raw).unwrap();
            prop_assert!(out.rewards.iter().all(|&r| (0.0..=w.omega1 + w.omega2 + 1e-12).contains(&r)));
            prop_assert_eq!(env.enforce(&out.applied), out.applied.clone());
        }
    }

    #[test]
    fn knn_ignores_the_other_uavs(x in -400.0..400.0f64, y in -400.0..400.0f64, seed in any::<u64>()) {
        let world = Arc::new(build_world(&ScenarioConfig::default()).unwrap());
        let cfg = EnvConfig { spawn_points: Some(vec![[x, y]]), ..EnvConfig::default() };
        let mut env = Env::new(world, cfg).unwrap();
        env.reset(seed, 0);
        let a = knn_fixed_actions(&env, 6, 0.5);
        // UAVs spawned at one point are indistinguishable to the heuristic.
        prop_assert!(a.windows(2).all(|w| w[0] == w[1]));
    }
}
