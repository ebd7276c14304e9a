//! Success rate of the scripted driver for the default and ideal configs,
//! followed by an optional grid over action noise and panic probability.
//!
//! cargo run --release -p qcsac-core --example tune_demonstrator -- [episodes] [--grid]

use qcsac_core::demonstrator::{generate_dataset, DemoPolicyConfig};
use qcsac_core::env::EnvConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rates(cfg: &DemoPolicyConfig, env: &EnvConfig, episodes: usize) -> Vec<f64> {
    (0..3u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, stats) = generate_dataset(episodes, env, cfg, "", &mut rng).expect("non-empty dataset");
            stats.success_rate
        })
        .collect()
}

fn show(label: &str, r: &[f64]) {
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let per: Vec<String> = r.iter().map(|v| format!("{:5.1}", 100.0 * v)).collect();
    println!("{label:<40} mean {:5.1}%  seeds [{}]", 100.0 * mean, per.join(", "));
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let episodes = args.iter().find_map(|a| a.parse().ok()).unwrap_or(200);
    let env = EnvConfig::default();
    let base = DemoPolicyConfig::default();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, stats) = generate_dataset(episodes, &env, &base, "", &mut rng).expect("non-empty dataset");
    print!("default config, seed 0\n{stats}");
    show("default", &rates(&base, &env, episodes));
    show("ideal", &rates(&base.ideal(), &env, episodes));

    if args.iter().any(|a| a == "--grid") {
        for noise in [0.03, 0.05, 0.08] {
            for panic in [0.1, 0.2, 0.3] {
                let cfg = DemoPolicyConfig {
                    action_noise_std: noise,
                    panic_brake_prob: panic,
                    ..base.clone()
                };
                show(&format!("noise {noise} panic {panic}"), &rates(&cfg, &env, episodes));
            }
        }
    }
}
