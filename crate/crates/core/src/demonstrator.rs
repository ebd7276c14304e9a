//! Scripted, deliberately imperfect driver used to produce the demonstration
//! dataset: lane keeping before the kick, then a delayed and noisy
//! proportional counter-steer with occasional panic braking.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleParams, CONTROL_DT};
use crate::env::{EnvConfig, Observation, OversteerEnv, Scenario, TerminalCause};
use crate::replay::{DemoDataset, ReplayError, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoPolicyConfig {
    /// Target steering angle per radian of side slip once reacting.
    pub countersteer_gain: f64,
    /// Relative standard deviation of the per-episode counter-steer gain.
    pub gain_error_std: f64,
    /// Control steps between the kick and the first corrective input.
    pub reaction_delay_steps: usize,
    /// Standard deviation of Gaussian noise on both commands.
    pub action_noise_std: f64,
    /// Chance of braking fully for the rest of a slide, drawn once per slide.
    pub panic_brake_prob: f64,
    /// Steering angle per metre of lateral error to the target lane.
    pub lane_gain: f64,
    /// Steering angle per radian of heading error.
    pub heading_gain: f64,
    /// Side slip (degrees) above which the driver considers itself sliding.
    pub slide_threshold_deg: f64,
}

impl Default for DemoPolicyConfig {
    fn default() -> Self {
        Self {
            countersteer_gain: 1.0,
            gain_error_std: 0.5,
            reaction_delay_steps: 4,
            action_noise_std: 0.08,
            panic_brake_prob: 0.2,
            lane_gain: 0.04,
            heading_gain: 0.8,
            slide_threshold_deg: 3.0,
        }
    }
}

impl DemoPolicyConfig {
    /// Noise-free, instant, well-calibrated variant of `self`.
    pub fn ideal(&self) -> Self {
        Self {
            gain_error_std: 0.0,
            reaction_delay_steps: 0,
            action_noise_std: 0.0,
            panic_brake_prob: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite_nonneg = [
            ("countersteer_gain", self.countersteer_gain),
            ("gain_error_std", self.gain_error_std),
            ("action_noise_std", self.action_noise_std),
            ("lane_gain", self.lane_gain),
            ("heading_gain", self.heading_gain),
            ("slide_threshold_deg", self.slide_threshold_deg),
        ];
        for (name, v) in finite_nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("demo.{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.panic_brake_prob) {
            return Err(format!(
                "demo.panic_brake_prob must lie in [0, 1], got {}",
                self.panic_brake_prob
            ));
        }
        Ok(())
    }
}

/// Per-episode memory of the scripted driver.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverState {
    /// Lateral offset of the chosen lane from the entry-lane centerline.
    pub target_offset: f64,
    /// Counter-steer gain realized for this episode.
    pub gain: f64,
    /// Steps since the kick was felt.
    pub since_kick: Option<usize>,
    /// Last steering-rate command issued before the kick.
    pub held_steer: f64,
    pub sliding: bool,
    pub panicking: bool,
}

/// Closest lane free of obstacles, preferring the entry lane. The driver is
/// given the layout up front, standing in for a human looking ahead.
pub fn target_lane(scene: &Scenario) -> usize {
    (0..scene.lane_count)
        .filter(|l| scene.obstacles.iter().all(|o| o.lane != *l))
        .min_by_key(|l| l.abs_diff(scene.entry_lane))
        .unwrap_or(scene.entry_lane)
}

pub fn begin_episode<R: Rng + ?Sized>(cfg: &DemoPolicyConfig, scene: &Scenario, rng: &mut R) -> DriverState {
    let z: f64 = rng.sample(StandardNormal);
    DriverState {
        target_offset: (target_lane(scene) as f64 - scene.entry_lane as f64) * scene.lane_width,
        gain: (cfg.countersteer_gain * (1.0 + cfg.gain_error_std * z)).max(0.0),
        since_kick: None,
        held_steer: 0.0,
        sliding: false,
        panicking: false,
    }
}

/// Steering-rate command that moves the wheel angle toward `target` as fast
/// as the rate limit allows within one control period.
fn rate_toward(target: f64, delta: f64, vehicle: &VehicleParams) -> f64 {
    let target = target.clamp(-vehicle.delta_max, vehicle.delta_max);
    ((target - delta) / (vehicle.max_steer_rate * CONTROL_DT)).clamp(-1.0, 1.0)
}

/// One `[pedal, steer_rate]` command. `kicked` reports whether the plate has
/// fired; it becomes true once and stays true.
pub fn scripted_action<R: Rng + ?Sized>(
    cfg: &DemoPolicyConfig,
    st: &mut DriverState,
    obs: &Observation,
    kicked: bool,
    vehicle: &VehicleParams,
    rng: &mut R,
) -> [f64; 2] {
    if kicked && st.since_kick.is_none() {
        st.since_kick = Some(0);
    }
    let (pedal, steer) = match st.since_kick {
        None => {
            let target = -cfg.lane_gain * obs.cross_track_err - cfg.heading_gain * obs.heading_err;
            let steer = rate_toward(target, obs.delta, vehicle);
            st.held_steer = steer;
            (0.0, steer)
        }
        Some(k) if k < cfg.reaction_delay_steps => (0.0, st.held_steer),
        Some(_) => {
            let sliding = obs.beta.abs() > cfg.slide_threshold_deg.to_radians();
            if sliding && !st.sliding {
                st.panicking = rng.random_bool(cfg.panic_brake_prob);
            }
            if !sliding {
                st.panicking = false;
            }
            st.sliding = sliding;
            // front wheels follow the velocity vector, plus a pull toward the target lane
            let lateral = obs.cross_track_err - st.target_offset;
            let target = st.gain * obs.beta - cfg.lane_gain * lateral - cfg.heading_gain * obs.heading_err;
            let pedal = if st.panicking { -1.0 } else { 0.0 };
            (pedal, rate_toward(target, obs.delta, vehicle))
        }
    };
    if let Some(k) = st.since_kick.as_mut() {
        *k += 1;
    }
    let noise = cfg.action_noise_std;
    let (n0, n1): (f64, f64) = if noise > 0.0 {
        (rng.sample(StandardNormal), rng.sample(StandardNormal))
    } else {
        (0.0, 0.0)
    };
    [(pedal + noise * n0).clamp(-1.0, 1.0), (steer + noise * n1).clamp(-1.0, 1.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoStats {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_episode_reward: f64,
    pub total_steps: usize,
    pub causes: Vec<(TerminalCause, usize)>,
}

impl std::fmt::Display for DemoStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "episodes            {}", self.episodes)?;
        writeln!(
            f,
            "success rate        {:.1}% ({}/{})",
            100.0 * self.success_rate,
            self.successes,
            self.episodes
        )?;
        writeln!(f, "mean episode reward {:.3}", self.mean_episode_reward)?;
        writeln!(
            f,
            "total steps         {} ({:.1} min)",
            self.total_steps,
            self.total_steps as f64 * CONTROL_DT / 60.0
        )?;
        for (cause, n) in &self.causes {
            writeln!(f, "  {:<14} {}", cause.as_str(), n)?;
        }
        Ok(())
    }
}

/// Drive one full episode, returning its transitions and terminal cause.
pub fn run_episode<R: Rng + ?Sized>(
    env: &mut OversteerEnv,
    cfg: &DemoPolicyConfig,
    rng: &mut R,
) -> (Vec<Transition>, TerminalCause) {
    let mut obs = env.reset(rng);
    let scene = env.scenario().expect("reset installs a scenario").clone();
    let vehicle = env.config().vehicle.clone();
    let scales = env.config().obs_scales.clone();
    let mut st = begin_episode(cfg, &scene, rng);
    let mut feats = obs.features(&scales);
    let mut episode = Vec::new();
    loop {
        let kicked = env.plate_phase().has_fired();
        let action = scripted_action(cfg, &mut st, &obs, kicked, &vehicle, rng);
        let out = env.step(action).expect("episode is live");
        let next = out.observation.features(&scales);
        let cause = out.info.cause;
        episode.push(Transition::new(
            &feats,
            action,
            out.reward,
            &next,
            cause.is_some_and(|c| c.is_absorbing()),
        ));
        if let Some(c) = cause {
            return (episode, c);
        }
        obs = out.observation;
        feats = next;
    }
}

fn collect<R: Rng + ?Sized>(
    n_episodes: usize,
    env_cfg: &EnvConfig,
    config_hash: &str,
    rng: &mut R,
    mut rollout: impl FnMut(&mut OversteerEnv, &mut R) -> (Vec<Transition>, TerminalCause),
) -> Result<(DemoDataset, DemoStats), ReplayError> {
    let mut env = OversteerEnv::new(env_cfg.clone());
    let mut episodes = Vec::with_capacity(n_episodes);
    let mut counts: Vec<(TerminalCause, usize)> = TerminalCause::ALL.iter().map(|c| (*c, 0)).collect();
    for _ in 0..n_episodes {
        let (ep, cause) = rollout(&mut env, rng);
        if let Some(slot) = counts.iter_mut().find(|(c, _)| *c == cause) {
            slot.1 += 1;
        }
        episodes.push(ep);
    }
    let ds = DemoDataset::from_episodes(episodes, config_hash)?;
    let successes = counts.iter().find(|(c, _)| c.is_success()).map_or(0, |(_, n)| *n);
    let stats = DemoStats {
        episodes: n_episodes,
        successes,
        success_rate: successes as f64 / n_episodes.max(1) as f64,
        mean_episode_reward: ds.mean_episode_reward(),
        total_steps: ds.transition_count(),
        causes: counts.into_iter().filter(|(_, n)| *n > 0).collect(),
    };
    Ok((ds, stats))
}

/// Roll out `n_episodes` complete episodes of the scripted driver.
pub fn generate_dataset<R: Rng + ?Sized>(
    n_episodes: usize,
    env_cfg: &EnvConfig,
    cfg: &DemoPolicyConfig,
    config_hash: &str,
    rng: &mut R,
) -> Result<(DemoDataset, DemoStats), ReplayError> {
    collect(n_episodes, env_cfg, config_hash, rng, |env, rng| run_episode(env, cfg, rng))
}

/// Episodes of uniformly random actions: a dataset with nothing worth imitating.
pub fn generate_uniform_dataset<R: Rng + ?Sized>(
    n_episodes: usize,
    env_cfg: &EnvConfig,
    config_hash: &str,
    rng: &mut R,
) -> Result<(DemoDataset, DemoStats), ReplayError> {
    collect(n_episodes, env_cfg, config_hash, rng, |env, rng| {
        let scales = env.config().obs_scales.clone();
        let mut feats = env.reset(rng).features(&scales);
        let mut episode = Vec::new();
        loop {
            let action = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let out = env.step(action).expect("episode is live");
            let next = out.observation.features(&scales);
            let cause = out.info.cause;
            episode.push(Transition::new(
                &feats,
                action,
                out.reward,
                &next,
                cause.is_some_and(|c| c.is_absorbing()),
            ));
            if let Some(c) = cause {
                return (episode, c);
            }
            feats = next;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_scenario, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn centered_obs(beta: f64) -> Observation {
        Observation {
            beta,
            v_long: 19.4,
            a_long: 0.0,
            a_lat: 0.0,
            cross_track_err: 0.0,
            heading_err: 0.0,
            yaw_rate: 0.0,
            delta: 0.0,
            surround: vec![100.0; 90],
        }
    }

    fn quiet() -> DemoPolicyConfig {
        DemoPolicyConfig {
            action_noise_std: 0.0,
            gain_error_std: 0.0,
            panic_brake_prob: 0.0,
            ..DemoPolicyConfig::default()
        }
    }

    #[test]
    fn centered_and_straight_means_no_input() {
        let cfg = quiet();
        let scene = sample_scenario(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = begin_episode(&cfg, &scene, &mut rng);
        let a = scripted_action(&cfg, &mut st, &centered_obs(0.0), false, &VehicleParams::default(), &mut rng);
        assert!(a[0].abs() < 0.05 && a[1].abs() < 0.05, "{a:?}");
    }

    #[test]
    fn steering_is_held_during_the_reaction_delay() {
        let cfg = quiet();
        let scene = sample_scenario(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = begin_episode(&cfg, &scene, &mut rng);
        let vehicle = VehicleParams::default();
        let mut obs = centered_obs(0.0);
        obs.heading_err = 0.01;
        let pre = scripted_action(&cfg, &mut st, &obs, false, &vehicle, &mut rng);
        for _ in 0..cfg.reaction_delay_steps {
            let a = scripted_action(&cfg, &mut st, &centered_obs(0.2), true, &vehicle, &mut rng);
            assert_eq!(a[1], pre[1]);
        }
        let reacting = scripted_action(&cfg, &mut st, &centered_obs(0.2), true, &vehicle, &mut rng);
        assert_ne!(reacting[1], pre[1]);
    }

    #[test]
    fn counter_steer_points_the_wheels_along_the_slide() {
        // left-positive frame: a positive side slip means the velocity points
        // left of the nose, so the corrective wheel angle is positive too
        let cfg = DemoPolicyConfig {
            reaction_delay_steps: 0,
            ..quiet()
        };
        let mut scene = sample_scenario(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
        scene.obstacles.retain(|o| o.lane != scene.entry_lane);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vehicle = VehicleParams::default();
        for beta in [0.1, -0.1] {
            let mut st = begin_episode(&cfg, &scene, &mut rng);
            let a = scripted_action(&cfg, &mut st, &centered_obs(beta), true, &vehicle, &mut rng);
            assert_eq!(a[1].signum(), beta.signum());
        }
    }

    #[test]
    fn target_lane_avoids_obstacles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let scene = sample_scenario(&ScenarioConfig::default(), &mut rng);
            let l = target_lane(&scene);
            assert!(scene.obstacles.iter().all(|o| o.lane != l));
        }
    }

    #[test]
    fn dataset_is_complete_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (ds, stats) = generate_dataset(5, &EnvConfig::default(), &DemoPolicyConfig::default(), "hash", &mut rng).unwrap();
        assert_eq!(ds.episode_count(), 5);
        assert_eq!(stats.causes.iter().map(|(_, n)| n).sum::<usize>(), 5);
        for ep in ds.episodes() {
            assert!(ep[..ep.len() - 1].iter().all(|t| !t.done));
            assert!(ep.iter().all(|t| t.next_obs.len() == t.obs.len()));
        }
        let recomputed = ds.recompute_mean_episode_reward().unwrap();
        assert!((recomputed - ds.mean_episode_reward()).abs() < 1e-9);
    }

    #[test]
    fn uniform_dataset_rarely_succeeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (ds, stats) = generate_uniform_dataset(20, &EnvConfig::default(), "hash", &mut rng).unwrap();
        assert_eq!(ds.episode_count(), 20);
        assert!(stats.success_rate <= 0.1, "{stats}");
        assert!(ds
            .episodes()
            .iter()
            .flatten()
            .all(|t| t.action.iter().all(|a| a.abs() <= 1.0)));
    }
}
