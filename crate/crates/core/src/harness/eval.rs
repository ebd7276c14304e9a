//! Deterministic-policy evaluation over randomized scenarios.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleState, GRAVITY};
use crate::env::{EnvConfig, OversteerEnv, Scenario, TerminalCause};
use crate::nn::PolicyNet;

/// Whether, at the moment the plate fires, every lane the vehicle could
/// still reach before the nearest obstacle is itself blocked.
///
/// Reach is bounded by the friction-limited lateral acceleration `mu * g`,
/// entered after the steering actuator has swept to the wheel angle that
/// produces it. A lane counts as blocked when it holds an obstacle ahead.
pub fn collision_unavoidable(scene: &Scenario, state: &VehicleState, env: &EnvConfig) -> bool {
    let sc = &env.scenario;
    let vp = &env.vehicle;
    let front = state.x + 0.5 * sc.vehicle_length;
    let ahead: Vec<_> = scene.obstacles.iter().filter(|o| o.station + o.length > front).collect();
    let Some(nearest) = ahead.iter().map(|o| o.station).reduce(f64::min) else {
        return false;
    };
    let speed = state.speed().max(0.1);
    let time = ((nearest - front) / speed).max(0.0);
    let a_max = vp.mu() * GRAVITY;
    let wheelbase = vp.dist_cg_front + vp.dist_cg_rear;
    let steer_needed = (wheelbase * a_max / (speed * speed)).min(vp.delta_max);
    let t_eff = (time - (steer_needed + state.delta.abs()) / vp.max_steer_rate).max(0.0);
    let reach = 0.5 * a_max * t_eff * t_eff;
    let slack = 0.5 * (sc.lane_width - sc.vehicle_width);

    let escape = (0..scene.lane_count).any(|lane| {
        let blocked = ahead.iter().any(|o| o.lane == lane);
        let shift = ((scene.lane_center(lane) - state.y).abs() - slack).max(0.0);
        !blocked && shift <= reach
    });
    !escape
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: usize,
    pub cause: TerminalCause,
    pub episode_return: f64,
    pub length: usize,
    pub unavoidable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub config_hash: String,
    pub seed: u64,
    pub n_episodes: usize,
    pub successes: usize,
    pub collision: usize,
    pub off_road: usize,
    pub spin: usize,
    pub timeout: usize,
    pub physics_fault: usize,
    pub success_rate: f64,
    /// Episodes whose collision was geometrically unavoidable at plate firing.
    pub unavoidable: usize,
    /// Success rate over the avoidable episodes only.
    pub adjusted_success_rate: f64,
    pub mean_return: f64,
    pub episodes: Vec<EvalEpisode>,
}

impl SuccessReport {
    fn from_episodes(config_hash: &str, seed: u64, episodes: Vec<EvalEpisode>) -> Self {
        let n = episodes.len();
        let count = |c: TerminalCause| episodes.iter().filter(|e| e.cause == c).count();
        let successes = count(TerminalCause::GripSuccess);
        let unavoidable = episodes.iter().filter(|e| e.unavoidable).count();
        let avoidable_successes = episodes.iter().filter(|e| !e.unavoidable && e.cause.is_success()).count();
        let rate = |k: usize, of: usize| if of == 0 { 0.0 } else { k as f64 / of as f64 };
        Self {
            config_hash: config_hash.to_string(),
            seed,
            n_episodes: n,
            successes,
            collision: count(TerminalCause::Collision),
            off_road: count(TerminalCause::OffRoad),
            spin: count(TerminalCause::Spin),
            timeout: count(TerminalCause::Timeout),
            physics_fault: count(TerminalCause::PhysicsFault),
            success_rate: rate(successes, n),
            unavoidable,
            adjusted_success_rate: rate(avoidable_successes, n - unavoidable),
            mean_return: if n == 0 {
                0.0
            } else {
                episodes.iter().map(|e| e.episode_return).sum::<f64>() / n as f64
            },
            episodes,
        }
    }

    /// Failures plus successes; always equals `n_episodes`.
    pub fn outcome_total(&self) -> usize {
        self.successes + self.collision + self.off_road + self.spin + self.timeout + self.physics_fault
    }
}

impl std::fmt::Display for SuccessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "config hash        {}", self.config_hash)?;
        writeln!(f, "seed               {}", self.seed)?;
        writeln!(f, "episodes           {}", self.n_episodes)?;
        writeln!(f, "success rate       {:.1}% ({})", 100.0 * self.success_rate, self.successes)?;
        writeln!(f, "  collision        {}", self.collision)?;
        writeln!(f, "  off_road         {}", self.off_road)?;
        writeln!(f, "  spin             {}", self.spin)?;
        writeln!(f, "  timeout          {}", self.timeout)?;
        writeln!(f, "  physics_fault    {}", self.physics_fault)?;
        writeln!(f, "unavoidable        {}", self.unavoidable)?;
        writeln!(f, "adjusted success   {:.1}%", 100.0 * self.adjusted_success_rate)?;
        writeln!(f, "mean return        {:.3}", self.mean_return)
    }
}

fn run_eval_episode<F>(policy: &F, env_cfg: &EnvConfig, seed: u64, episode: usize) -> EvalEpisode
where
    F: Fn(&[f64]) -> [f64; 2],
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64);
    let mut env = OversteerEnv::new(env_cfg.clone());
    let scales = env_cfg.obs_scales.clone();
    let mut obs = env.reset(&mut rng).features(&scales);
    let mut episode_return = 0.0;
    let mut unavoidable = None;
    loop {
        let out = env.step(policy(&obs)).expect("episode is live");
        episode_return += out.reward;
        if unavoidable.is_none() && env.plate_phase().has_fired() {
            let scene = env.scenario().expect("reset installs a scenario");
            unavoidable = Some(collision_unavoidable(scene, env.state(), env_cfg));
        }
        if let Some(cause) = out.info.cause {
            return EvalEpisode {
                episode,
                cause,
                episode_return,
                length: env.step_index(),
                unavoidable: unavoidable.unwrap_or(false),
            };
        }
        obs = out.observation.features(&scales);
    }
}

/// Evaluate an arbitrary feature-to-action map. Episode `i` draws its
/// scenario from stream `i` of the seed, so results do not depend on
/// scheduling across worker threads.
pub fn evaluate_with<F>(policy: F, env_cfg: &EnvConfig, n_episodes: usize, seed: u64, config_hash: &str) -> SuccessReport
where
    F: Fn(&[f64]) -> [f64; 2] + Sync,
{
    let episodes: Vec<EvalEpisode> = (0..n_episodes)
        .into_par_iter()
        .map(|i| run_eval_episode(&policy, env_cfg, seed, i))
        .collect();
    SuccessReport::from_episodes(config_hash, seed, episodes)
}

/// Evaluate the deterministic (mean) action of a policy.
pub fn evaluate(policy: &PolicyNet, env_cfg: &EnvConfig, n_episodes: usize, seed: u64, config_hash: &str) -> SuccessReport {
    evaluate_with(
        |obs| {
            let a = policy.act_deterministic(obs);
            [a[0], a[1]]
        },
        env_cfg,
        n_episodes,
        seed,
        config_hash,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_scenario, Obstacle, ScenarioConfig};

    fn scene(obstacles: Vec<Obstacle>) -> Scenario {
        let mut s = sample_scenario(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        s.entry_lane = 1;
        s.obstacles = obstacles;
        s
    }

    fn wall(lane: usize, station: f64) -> Obstacle {
        Obstacle {
            lane,
            station,
            length: 4.5,
            width: 1.8,
        }
    }

    #[test]
    fn free_ego_lane_is_always_avoidable() {
        let env = EnvConfig::default();
        let s = scene(vec![wall(0, 60.0), wall(2, 60.0)]);
        let state = VehicleState::cruising(50.0, s.lane_center(1), 0.0, 19.44);
        assert!(!collision_unavoidable(&s, &state, &env));
    }

    #[test]
    fn close_wall_with_distant_gap_is_unavoidable() {
        let env = EnvConfig::default();
        // ego in lane 0, lanes 0 and 1 blocked 5 m ahead, free lane two lanes over
        let s = scene(vec![wall(0, 55.0), wall(1, 55.0)]);
        let state = VehicleState::cruising(50.0, s.lane_center(0), 0.0, 19.44);
        assert!(collision_unavoidable(&s, &state, &env));
    }

    #[test]
    fn far_wall_leaves_time_to_change_lanes() {
        let env = EnvConfig::default();
        let s = scene(vec![wall(0, 120.0), wall(1, 120.0)]);
        let state = VehicleState::cruising(50.0, s.lane_center(0), 0.0, 19.44);
        assert!(!collision_unavoidable(&s, &state, &env));
    }

    #[test]
    fn full_brake_policy_almost_never_succeeds() {
        let report = evaluate_with(|_| [-1.0, 0.0], &EnvConfig::default(), 40, 5, "test");
        assert_eq!(report.outcome_total(), report.n_episodes);
        assert!(report.success_rate <= 0.05, "{report}");
    }

    #[test]
    fn evaluation_is_reproducible() {
        let a = evaluate_with(|o| [0.0, (o[0] * 3.0).clamp(-1.0, 1.0)], &EnvConfig::default(), 12, 9, "h");
        let b = evaluate_with(|o| [0.0, (o[0] * 3.0).clamp(-1.0, 1.0)], &EnvConfig::default(), 12, 9, "h");
        assert_eq!(a, b);
    }
}
