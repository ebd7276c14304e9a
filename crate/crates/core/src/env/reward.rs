//! Reward shaping for the benchmark.

use serde::{Deserialize, Serialize};

use super::geometry::StraightPath;
use crate::dynamics::VehicleState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Weight of the safe-distance term (enters with a minus sign).
    pub lambda_safe: f64,
    pub lambda_prog: f64,
    pub lambda_aux: f64,
    pub req_cross_track: f64,
    pub req_accel: f64,
    pub req_beta_deg: f64,
    pub req_steer_rate_deg: f64,
    pub req_safe_dist: f64,
    pub terminal_bonus: f64,
    pub terminal_penalty: f64,
    pub grip_beta_threshold_deg: f64,
    pub grip_hold_steps: usize,
    /// Steps below this speed do not count toward the grip window.
    pub grip_min_speed: f64,
    pub spin_beta_threshold_deg: f64,
    pub max_steps: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_safe: 0.8,
            lambda_prog: 0.2,
            lambda_aux: 0.2,
            req_cross_track: 3.5,
            req_accel: 2.943,
            req_beta_deg: 20.0,
            req_steer_rate_deg: 3000.0,
            req_safe_dist: 10.0,
            terminal_bonus: 50.0,
            terminal_penalty: -50.0,
            grip_beta_threshold_deg: 1.0,
            grip_hold_steps: 100,
            grip_min_speed: 5.0,
            spin_beta_threshold_deg: 37.0,
            max_steps: 400,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        let reqs = [
            ("req_cross_track", self.req_cross_track),
            ("req_accel", self.req_accel),
            ("req_beta_deg", self.req_beta_deg),
            ("req_steer_rate_deg", self.req_steer_rate_deg),
            ("req_safe_dist", self.req_safe_dist),
            ("grip_beta_threshold_deg", self.grip_beta_threshold_deg),
            ("spin_beta_threshold_deg", self.spin_beta_threshold_deg),
        ];
        for (name, v) in reqs {
            if !(v > 0.0) {
                return Err(format!("reward.{name} must be > 0"));
            }
        }
        if self.grip_hold_steps == 0 || self.max_steps == 0 {
            return Err("reward.grip_hold_steps and reward.max_steps must be >= 1".into());
        }
        Ok(())
    }
}

/// `0.5^(|x| / x_req) * 2 - 1`: 1 at zero, 0 at the requirement, tending to -1.
pub fn shaped_reward(x: f64, x_req: f64) -> f64 {
    0.5f64.powf(x.abs() / x_req) * 2.0 - 1.0
}

/// Signed arc-length advance along the reference path.
pub fn frenet_progress(prev: &VehicleState, cur: &VehicleState, path: &StraightPath) -> f64 {
    path.project(cur.x, cur.y).0 - path.project(prev.x, prev.y).0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardComponents {
    pub safe: f64,
    pub prog: f64,
    pub aux: f64,
    pub term: f64,
}

impl RewardComponents {
    pub fn total(&self, cfg: &RewardConfig) -> f64 {
        total_reward(self, cfg)
    }
}

/// `-l1 * safe + l2 * prog + l3 * aux + term`.
pub fn total_reward(c: &RewardComponents, cfg: &RewardConfig) -> f64 {
    -cfg.lambda_safe * c.safe + cfg.lambda_prog * c.prog + cfg.lambda_aux * c.aux + c.term
}

/// Inputs to the auxiliary term.
#[derive(Debug, Clone, Copy)]
pub struct AuxInputs {
    pub cross_track: f64,
    pub beta: f64,
    /// Commanded steering-wheel rate, rad/s.
    pub steer_rate: f64,
    /// Magnitude of the acceleration vector, m/s^2.
    pub accel: f64,
}

/// Mean of the shaped auxiliary terms.
pub fn aux_reward(x: &AuxInputs, cfg: &RewardConfig) -> f64 {
    let terms = [
        shaped_reward(x.cross_track, cfg.req_cross_track),
        shaped_reward(x.beta, cfg.req_beta_deg.to_radians()),
        shaped_reward(x.steer_rate, cfg.req_steer_rate_deg.to_radians()),
        shaped_reward(x.accel, cfg.req_accel),
    ];
    terms.iter().sum::<f64>() / terms.len() as f64
}
