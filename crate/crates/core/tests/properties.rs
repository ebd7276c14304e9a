use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcsac_core::dynamics::{next_steering_angle, step_dynamics, Controls, PlatePhase, VehicleParams, VehicleState, CONTROL_DT};
use qcsac_core::env::reward::shaped_reward;
use qcsac_core::env::{sample_scenario, EnvConfig, OversteerEnv, ScenarioConfig, TerminalCause, OBS_DIM};
use qcsac_core::harness::evaluate_with;
use qcsac_core::learner::{read_checkpoint, write_checkpoint, AblationFlags, Algorithm, HyperParams, Learner};
use qcsac_core::nn::policy::log_prob_of;
use qcsac_core::nn::PolicyNet;
use qcsac_core::replay::{Batch, DemoDataset, ReplayBuffer, Transition};

fn transition(tag: f64, obs_dim: usize) -> Transition {
    let obs = vec![tag; obs_dim];
    Transition::new(&obs, [0.0, 0.0], tag, &obs, false)
}

fn random_batch(n: usize, obs_dim: usize, rng: &mut ChaCha8Rng) -> Batch {
    let items: Vec<Transition> = (0..n)
        .map(|i| {
            let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let next: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            Transition::new(&obs, a, rng.random_range(-50.0..50.0), &next, i % 4 == 0)
        })
        .collect();
    Batch::from_transitions(&items.iter().collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_respects_rate_and_angle_limits(delta in -0.7f64..0.7, cmd in -3.0f64..3.0) {
        let p = VehicleParams::default();
        let delta = delta.clamp(-p.delta_max, p.delta_max);
        let next = next_steering_angle(delta, cmd, &p, CONTROL_DT);
        prop_assert!((next - delta).abs() <= p.max_steer_rate * CONTROL_DT + 1e-12);
        prop_assert!(next.abs() <= p.delta_max + 1e-12);
    }

    #[test]
    fn dynamics_is_deterministic_and_finite(
        v in 2.0f64..30.0, v_lat in -3.0f64..3.0, r in -1.0f64..1.0, pedal in -1.0f64..1.0, steer in -1.0f64..1.0,
    ) {
        let p = VehicleParams::default();
        let mut s = VehicleState::cruising(0.0, 0.0, 0.3, v);
        s.v_lat = v_lat;
        s.yaw_rate = r;
        let scene = sample_scenario(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let a = step_dynamics(&s, Controls::new(pedal, steer), &scene.kick_plate, PlatePhase::Armed, &p, CONTROL_DT);
        let b = step_dynamics(&s, Controls::new(pedal, steer), &scene.kick_plate, PlatePhase::Armed, &p, CONTROL_DT);
        prop_assert_eq!(a, b);
        let (next, _) = a.unwrap();
        prop_assert!(next.is_finite());
    }

    #[test]
    fn shaped_reward_is_one_at_zero_and_non_increasing(x in 0.0f64..100.0, dx in 0.0f64..10.0, req in 0.1f64..50.0) {
        prop_assert_eq!(shaped_reward(0.0, req), 1.0);
        prop_assert!(shaped_reward(x + dx, req) <= shaped_reward(x, req) + 1e-12);
    }

    #[test]
    fn random_rollouts_keep_their_contracts(seed in 0u64..10_000) {
        let cfg = EnvConfig::default();
        let mut env = OversteerEnv::new(cfg.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = env.reset(&mut rng);
        prop_assert_eq!(obs.features(&cfg.obs_scales).len(), OBS_DIM);
        loop {
            let out = env.step([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).unwrap();
            prop_assert!(out.reward.is_finite());
            prop_assert!(out.observation.surround.iter().all(|d| (0.0..=cfg.d_cap).contains(d)));
            prop_assert_eq!(out.done, out.info.cause.is_some());
            if let Some(cause) = out.info.cause {
                prop_assert!(TerminalCause::ALL.contains(&cause));
                prop_assert!(env.step([0.0, 0.0]).is_err());
                break;
            }
        }
    }

    #[test]
    fn replay_ring_keeps_the_newest(capacity in 1usize..50, pushes in 1usize..200) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(transition(i as f64, 3));
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        for age in 0..buf.len() {
            prop_assert_eq!(buf.by_age(age).unwrap().reward, (pushes - 1 - age) as f64);
        }
        prop_assert!(buf.by_age(buf.len()).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(pushes as u64);
        for _ in 0..100 {
            prop_assert!(buf.draw_fer_age(1.0 / 3.0, &mut rng) < buf.len());
        }
    }

    #[test]
    fn selective_update_admits_only_strict_improvements(returns in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        let mut ds = DemoDataset::from_episodes(vec![vec![transition(0.0, 2)]], "h").unwrap();
        for r in returns {
            let before = ds.mean_episode_reward();
            let count = ds.episode_count();
            let admitted = ds.sddu_consider(vec![transition(r, 2)], r);
            prop_assert_eq!(admitted, r > before);
            prop_assert!(ds.mean_episode_reward() >= before);
            prop_assert_eq!(ds.episode_count(), count + admitted as usize);
        }
    }

    #[test]
    fn dataset_round_trip_is_bit_exact(lens in prop::collection::vec(1usize..20, 1..8), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let episodes: Vec<Vec<Transition>> = lens
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|i| {
                        let obs: Vec<f64> = (0..5).map(|_| rng.random_range(-9.0..9.0)).collect();
                        let next: Vec<f64> = (0..5).map(|_| rng.random_range(-9.0..9.0)).collect();
                        Transition::new(&obs, [rng.random_range(-1.0..1.0), rng.random::<f64>()], rng.random::<f64>(), &next, i + 1 == n)
                    })
                    .collect()
            })
            .collect();
        let ds = DemoDataset::from_episodes(episodes, "abc").unwrap();
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        let back = DemoDataset::read_from(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &ds);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn checkpoints_round_trip_for_any_shape(w1 in 1usize..12, w2 in 1usize..12, steps in 0usize..3, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hp = HyperParams { hidden: vec![w1, w2], ..HyperParams::default() };
        let mut learner = Learner::new(Algorithm::Qcsac, AblationFlags::default(), hp, 6, &mut rng);
        for _ in 0..steps {
            let rl = random_batch(4, 6, &mut rng);
            let bc = random_batch(4, 6, &mut rng);
            learner.gradient_step(&rl, Some(&bc), &mut rng).unwrap();
        }
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &learner, "h").unwrap();
        let (back, _) = read_checkpoint(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back, learner);
    }

    #[test]
    fn training_invariants_hold_per_step(seed in 0u64..1000, c_max in prop_oneof![Just(f64::INFINITY), 0.0f64..200.0]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hp = HyperParams { hidden: vec![8, 8], c_max, batch_rl: 6, batch_bc: 5, ..HyperParams::default() };
        let mut learner = Learner::new(Algorithm::Qcsac, AblationFlags::default(), hp, 6, &mut rng);
        for _ in 0..4 {
            let rl = random_batch(6, 6, &mut rng);
            let bc = random_batch(5, 6, &mut rng);
            let m = learner.gradient_step(&rl, Some(&bc), &mut rng).unwrap();
            prop_assert_eq!(m.q_batch, 11);
            prop_assert!(m.alpha > 0.0);
            prop_assert!((0.0..=1.0).contains(&m.frac_c_pos));
            prop_assert!(m.mean_c >= 0.0 && m.mean_c <= c_max);
        }
    }
}

#[test]
fn policy_actions_stay_inside_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pol = PolicyNet::new(OBS_DIM, &[16, 16], 2, &mut rng);
    for _ in 0..200 {
        let obs: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (a, logp) = pol.act_stochastic(&obs, &mut rng);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        assert!(logp.is_finite());
        assert!(pol.act_deterministic(&obs).iter().all(|v| v.abs() < 1.0));
    }
}

/// The squashed-Gaussian density integrates to one over the action box:
/// a uniform Monte Carlo estimate of the integral of `exp(log pi)`.
#[test]
fn squashed_density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pol = PolicyNet::new(3, &[8], 2, &mut rng);
    let obs = Array2::from_shape_vec((1, 3), vec![0.3, -0.2, 0.5]).unwrap();
    let n = 400_000;
    let fw = pol.forward(obs.broadcast((n, 3)).unwrap().to_owned().view());
    let actions = Array2::from_shape_fn((n, 2), |_| rng.random_range(-0.999_999..0.999_999));
    let logp = log_prob_of(&fw, ArrayView2::from(&actions));
    let integral = 4.0 * logp.mapv(f64::exp).mean().unwrap();
    assert!((integral - 1.0).abs() < 0.03, "integral {integral}");
}

#[test]
fn untrained_policy_rarely_recovers() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pol = PolicyNet::new(OBS_DIM, &[64, 64], 2, &mut rng);
    let report = evaluate_with(
        |obs| {
            let a = pol.act_deterministic(obs);
            [a[0], a[1]]
        },
        &EnvConfig::default(),
        100,
        3,
        "untrained",
    );
    assert_eq!(report.outcome_total(), 100);
    assert!(report.success_rate < 0.10, "{report}");
}
