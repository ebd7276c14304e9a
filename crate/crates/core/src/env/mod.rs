//! The oversteer-control and collision-avoidance benchmark.
//!
//! A vehicle enters a straight three-lane road on a low-friction surface, a
//! kick plate shoves its rear axle sideways, and obstacles wait 30-70 m past
//! the plate. An episode ends in a grip success once the side slip stays under
//! 1 degree for 100 consecutive post-pulse steps, or in a failure on collision,
//! leaving the road, spinning, a physics fault, or the step limit.

pub mod geometry;
pub mod reward;
pub mod scenario;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{step_dynamics, Controls, PlatePhase, VehicleParams, VehicleState, CONTROL_DT};
use geometry::{oriented_corners, ray_aabb, ray_horizontal, rect_overlaps_aabb, StraightPath};
use reward::{aux_reward, frenet_progress, shaped_reward, AuxInputs, RewardComponents, RewardConfig};
pub use scenario::{sample_scenario, Obstacle, Scenario, ScenarioConfig};

pub const RAY_COUNT: usize = 90;
pub const STATE_FEATURES: usize = 8;
pub const OBS_DIM: usize = STATE_FEATURES + RAY_COUNT;
pub const ACTION_DIM: usize = 2;

/// Azimuth of ray `k` relative to the heading: symmetric fan, 1 degree apart.
pub fn ray_azimuth(k: usize) -> f64 {
    (-44.5 + k as f64).to_radians()
}

/// Fixed divisors applied to observation features before they reach a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObsScales {
    pub distance: f64,
    pub cross_track: f64,
    pub angle: f64,
    pub speed: f64,
    pub accel: f64,
    pub yaw_rate: f64,
}

impl Default for ObsScales {
    fn default() -> Self {
        Self {
            distance: 100.0,
            cross_track: 100.0,
            angle: std::f64::consts::PI,
            speed: 40.0,
            accel: 10.0,
            yaw_rate: std::f64::consts::TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub vehicle: VehicleParams,
    pub scenario: ScenarioConfig,
    pub reward: RewardConfig,
    /// Ray distance cap, m.
    pub d_cap: f64,
    pub obs_scales: ObsScales,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            scenario: ScenarioConfig::default(),
            reward: RewardConfig::default(),
            d_cap: 100.0,
            obs_scales: ObsScales::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.vehicle.validate()?;
        self.scenario.validate()?;
        self.reward.validate()?;
        if !(self.d_cap > 0.0) {
            return Err("env.d_cap must be > 0".into());
        }
        let s = &self.obs_scales;
        if ![s.distance, s.cross_track, s.angle, s.speed, s.accel, s.yaw_rate]
            .iter()
            .all(|v| *v > 0.0)
        {
            return Err("env.obs_scales entries must be > 0".into());
        }
        Ok(())
    }
}

/// Raw learner input: eight vehicle features and the surround fan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub beta: f64,
    pub v_long: f64,
    pub a_long: f64,
    pub a_lat: f64,
    pub cross_track_err: f64,
    pub heading_err: f64,
    pub yaw_rate: f64,
    pub delta: f64,
    pub surround: Vec<f64>,
}

impl Observation {
    /// Flattened, scaled feature vector of length [`OBS_DIM`].
    pub fn features(&self, scales: &ObsScales) -> Vec<f64> {
        let mut out = Vec::with_capacity(OBS_DIM);
        out.extend_from_slice(&[
            self.beta / scales.angle,
            self.v_long / scales.speed,
            self.a_long / scales.accel,
            self.a_lat / scales.accel,
            self.cross_track_err / scales.cross_track,
            self.heading_err / scales.angle,
            self.yaw_rate / scales.yaw_rate,
            self.delta / scales.angle,
        ]);
        out.extend(self.surround.iter().map(|d| d / scales.distance));
        out
    }

    pub fn min_distance(&self) -> f64 {
        self.surround.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Cast the 90-ray fan from the vehicle's reference point against the road
/// edges and obstacle boxes.
pub fn build_surround(state: &VehicleState, scene: &Scenario, d_cap: f64) -> Vec<f64> {
    let boxes = scene.obstacle_boxes();
    let origin = (state.x, state.y);
    let width = scene.road_width();
    (0..RAY_COUNT)
        .map(|k| {
            let (s, c) = (state.yaw + ray_azimuth(k)).sin_cos();
            let dir = (c, s);
            let mut best = d_cap;
            for edge in [0.0, width] {
                if let Some(t) = ray_horizontal(origin, dir, edge, 0.0, scene.road_length) {
                    best = best.min(t);
                }
            }
            for b in &boxes {
                if let Some(t) = ray_aabb(origin, dir, b) {
                    best = best.min(t);
                }
            }
            best.max(1e-9)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCause {
    GripSuccess,
    OffRoad,
    Collision,
    Spin,
    Timeout,
    PhysicsFault,
}

impl TerminalCause {
    pub const ALL: [TerminalCause; 6] = [
        TerminalCause::GripSuccess,
        TerminalCause::OffRoad,
        TerminalCause::Collision,
        TerminalCause::Spin,
        TerminalCause::Timeout,
        TerminalCause::PhysicsFault,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalCause::GripSuccess => "grip_success",
            TerminalCause::OffRoad => "off_road",
            TerminalCause::Collision => "collision",
            TerminalCause::Spin => "spin",
            TerminalCause::Timeout => "timeout",
            TerminalCause::PhysicsFault => "physics_fault",
        }
    }

    pub fn is_success(&self) -> bool {
        *self == TerminalCause::GripSuccess
    }

    /// Whether the final state is absorbing. A timeout only truncates the
    /// episode, so value bootstrapping continues through it.
    pub fn is_absorbing(&self) -> bool {
        *self != TerminalCause::Timeout
    }
}

impl std::fmt::Display for TerminalCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contact flags of a single state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactFlags {
    pub collision: bool,
    pub off_road: bool,
    pub spin: bool,
}

pub fn contact_flags(state: &VehicleState, scene: &Scenario, cfg: &EnvConfig) -> ContactFlags {
    let sc = &cfg.scenario;
    let corners = oriented_corners(state.x, state.y, state.yaw, sc.vehicle_length, sc.vehicle_width);
    let width = scene.road_width();
    let off_road = corners
        .iter()
        .any(|&(x, y)| y < 0.0 || y > width || x < 0.0 || x > scene.road_length);
    let collision = scene.obstacle_boxes().iter().any(|b| rect_overlaps_aabb(&corners, b));
    let spin = state.beta().abs() > cfg.reward.spin_beta_threshold_deg.to_radians();
    ContactFlags {
        collision,
        off_road,
        spin,
    }
}

/// Outcome of one call to [`OversteerEnv::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub components: RewardComponents,
    pub cause: Option<TerminalCause>,
    pub flags: ContactFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("step called after the episode terminated")]
    StepAfterTerminal,
}

/// Single-episode simulator over the dynamics module.
#[derive(Debug, Clone)]
pub struct OversteerEnv {
    cfg: EnvConfig,
    scene: Option<Scenario>,
    path: StraightPath,
    state: VehicleState,
    phase: PlatePhase,
    step_index: usize,
    grip_counter: usize,
    done: bool,
}

impl OversteerEnv {
    pub fn new(cfg: EnvConfig) -> Self {
        Self {
            cfg,
            scene: None,
            path: StraightPath {
                origin: (0.0, 0.0),
                heading: 0.0,
            },
            state: VehicleState::default(),
            phase: PlatePhase::Armed,
            step_index: 0,
            grip_counter: 0,
            done: false,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> Option<&Scenario> {
        self.scene.as_ref()
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn plate_phase(&self) -> PlatePhase {
        self.phase
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn grip_counter(&self) -> usize {
        self.grip_counter
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * CONTROL_DT
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Observation {
        let scene = sample_scenario(&self.cfg.scenario, rng);
        self.reset_with(scene)
    }

    /// Place the vehicle on the entry-lane centerline at entry speed, zero slip.
    pub fn reset_with(&mut self, scene: Scenario) -> Observation {
        self.path = scene.original_path();
        self.state = VehicleState::cruising(scene.start_x, scene.lane_center(scene.entry_lane), 0.0, scene.entry_speed);
        self.scene = Some(scene);
        self.phase = PlatePhase::Armed;
        self.step_index = 0;
        self.grip_counter = 0;
        self.done = false;
        self.observe()
    }

    /// Place the vehicle at an arbitrary state, keeping the current scenario.
    pub fn set_state(&mut self, state: VehicleState, phase: PlatePhase) {
        self.state = state;
        self.phase = phase;
    }

    pub fn observe(&self) -> Observation {
        let scene = self.scene.as_ref().expect("observe before reset");
        let s = &self.state;
        let (_, d) = self.path.project(s.x, s.y);
        Observation {
            beta: s.beta(),
            v_long: s.v_long,
            a_long: s.a_long,
            a_lat: s.a_lat,
            cross_track_err: d,
            heading_err: self.path.heading_error(s.yaw),
            yaw_rate: s.yaw_rate,
            delta: s.delta,
            surround: build_surround(s, scene, self.cfg.d_cap),
        }
    }

    /// Advance one control period with `action = [pedal, steer_rate]`.
    pub fn step(&mut self, action: [f64; 2]) -> Result<StepOutcome, EnvError> {
        let scene = self.scene.as_ref().ok_or(EnvError::NotReset)?;
        if self.done {
            return Err(EnvError::StepAfterTerminal);
        }
        let cfg = &self.cfg;
        let rc = &cfg.reward;
        let controls = Controls::new(action[0], action[1]);
        let prev = self.state;
        self.step_index += 1;

        let stepped = step_dynamics(&prev, controls, &scene.kick_plate, self.phase, &cfg.vehicle, CONTROL_DT);
        let (cause, flags) = match stepped {
            Err(_) => (Some(TerminalCause::PhysicsFault), ContactFlags::default()),
            Ok((next, phase)) => {
                self.state = next;
                self.phase = phase;
                let flags = contact_flags(&next, scene, cfg);
                if phase == PlatePhase::Spent {
                    let gripping =
                        next.beta().abs() < rc.grip_beta_threshold_deg.to_radians() && next.v_long >= rc.grip_min_speed;
                    self.grip_counter = if gripping { self.grip_counter + 1 } else { 0 };
                }
                let cause = if flags.collision {
                    Some(TerminalCause::Collision)
                } else if flags.off_road {
                    Some(TerminalCause::OffRoad)
                } else if flags.spin {
                    Some(TerminalCause::Spin)
                } else if self.grip_counter >= rc.grip_hold_steps {
                    Some(TerminalCause::GripSuccess)
                } else if self.step_index >= rc.max_steps {
                    Some(TerminalCause::Timeout)
                } else {
                    None
                };
                (cause, flags)
            }
        };

        let observation = self.observe();
        let (_, cross_track) = self.path.project(self.state.x, self.state.y);
        let term = match cause {
            Some(TerminalCause::GripSuccess) => rc.terminal_bonus,
            Some(TerminalCause::Timeout) | None => 0.0,
            Some(_) => rc.terminal_penalty,
        };
        let components = RewardComponents {
            safe: shaped_reward(observation.min_distance(), rc.req_safe_dist),
            prog: frenet_progress(&prev, &self.state, &self.path),
            aux: aux_reward(
                &AuxInputs {
                    cross_track,
                    beta: self.state.beta(),
                    steer_rate: controls.steer_rate * cfg.vehicle.max_steer_rate,
                    accel: self.state.a_long.hypot(self.state.a_lat),
                },
                rc,
            ),
            term,
        };
        self.done = cause.is_some();
        Ok(StepOutcome {
            observation,
            reward: components.total(rc),
            done: self.done,
            info: StepInfo {
                components,
                cause,
                flags,
            },
        })
    }
}

/// One line of the per-step trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v_long: f64,
    pub v_lat: f64,
    pub beta_deg: f64,
    pub delta_deg: f64,
    pub pedal: f64,
    pub steer_rate_cmd: f64,
    pub reward: f64,
    pub reward_components: RewardComponents,
    pub terminal_cause: Option<TerminalCause>,
}

impl TrajectoryRecord {
    pub fn new(t: f64, state: &VehicleState, action: [f64; 2], outcome: &StepOutcome) -> Self {
        Self {
            t,
            x: state.x,
            y: state.y,
            yaw: state.yaw,
            v_long: state.v_long,
            v_lat: state.v_lat,
            beta_deg: state.beta().to_degrees(),
            delta_deg: state.delta.to_degrees(),
            pedal: action[0].clamp(-1.0, 1.0),
            steer_rate_cmd: action[1].clamp(-1.0, 1.0),
            reward: outcome.reward,
            reward_components: outcome.info.components,
            terminal_cause: outcome.info.cause,
        }
    }
}

/// Header line preceding each episode in a trajectory log; enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub episode: usize,
    pub config_hash: String,
    pub scenario: Scenario,
}
