use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qcsac_core::dynamics::{step_dynamics, Controls, KickPlate, PlatePhase, VehicleParams, VehicleState, CONTROL_DT};
use qcsac_core::env::{build_surround, sample_scenario, ScenarioConfig};
use qcsac_core::learner::{AblationFlags, Algorithm, HyperParams, Learner};
use qcsac_core::replay::{Batch, Transition};
use qcsac_core::OBS_DIM;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let items: Vec<Transition> = (0..n)
        .map(|_| {
            let obs: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let next: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let action = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            Transition::new(&obs, action, rng.random_range(-1.0..1.0), &next, false)
        })
        .collect();
    Batch::from_transitions(&items.iter().collect::<Vec<_>>())
}

fn dynamics(c: &mut Criterion) {
    let params = VehicleParams::default();
    let state = VehicleState::cruising(0.0, 0.0, 0.0, 19.44);
    c.bench_function("step_dynamics (50 RK4 substeps)", |b| {
        b.iter(|| {
            step_dynamics(
                black_box(&state),
                Controls::new(0.2, 0.3),
                &KickPlate::inactive(),
                PlatePhase::Armed,
                &params,
                CONTROL_DT,
            )
        })
    });
}

fn surround(c: &mut Criterion) {
    let scene = sample_scenario(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
    let state = VehicleState::cruising(60.0, scene.lane_center(scene.entry_lane), 0.05, 19.44);
    c.bench_function("build_surround (90 rays)", |b| {
        b.iter(|| build_surround(black_box(&state), &scene, 100.0))
    });
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradient_step");
    group.sample_size(10);
    for width in [64usize, 256] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hp = HyperParams {
            hidden: vec![width, width],
            ..HyperParams::default()
        };
        let mut learner = Learner::new(Algorithm::Qcsac, AblationFlags::default(), hp, OBS_DIM, &mut rng);
        let rl = random_batch(256, &mut rng);
        let bc = random_batch(256, &mut rng);
        group.bench_function(format!("qcsac hidden {width}x2, batches 256+256"), |b| {
            b.iter(|| learner.gradient_step(&rl, Some(&bc), &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dynamics, surround, gradient);
criterion_main!(benches);
