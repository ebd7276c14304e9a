//! Dynamic single-track vehicle model with Magic Formula lateral tires.
//!
//! Body frame: `x` forward, `y` left, yaw counter-clockwise positive. The
//! road-wheel angle `delta` is positive to the left. Rear-wheel drive, brakes
//! split between the axles, static axle loads, no aerodynamic drag.
//!
//! The steering actuator is rate-limited: one control period moves `delta` by
//! at most `max_steer_rate * dt`, then clamps to `delta_max`. Within the period
//! the wheel angle ramps linearly, so the integrator sees a continuous input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAVITY: f64 = 9.81;

/// Control period of the benchmark (20 Hz).
pub const CONTROL_DT: f64 = 0.05;

/// Below this speed slip angles use the floor in their denominators.
pub const MIN_SLIP_SPEED: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("physics blow-up: non-finite vehicle state")]
pub struct PhysicsFault;

/// Full continuous state of the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v_long: f64,
    pub v_lat: f64,
    pub yaw_rate: f64,
    pub delta: f64,
    /// Mean body-frame accelerations over the last control period.
    pub a_long: f64,
    pub a_lat: f64,
}

impl VehicleState {
    /// Vehicle moving straight along `yaw` at `speed`, no slip.
    pub fn cruising(x: f64, y: f64, yaw: f64, speed: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            v_long: speed,
            ..Self::default()
        }
    }

    /// Side slip angle, `atan(v_lat / v_long)` with the low-speed floor.
    pub fn beta(&self) -> f64 {
        self.v_lat.atan2(self.v_long.max(MIN_SLIP_SPEED))
    }

    pub fn speed(&self) -> f64 {
        self.v_long.hypot(self.v_lat)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.yaw,
            self.v_long,
            self.v_lat,
            self.yaw_rate,
            self.delta,
            self.a_long,
            self.a_lat,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// World position of the rear axle.
    pub fn rear_axle(&self, params: &VehicleParams) -> (f64, f64) {
        (
            self.x - params.dist_cg_rear * self.yaw.cos(),
            self.y - params.dist_cg_rear * self.yaw.sin(),
        )
    }
}

/// Magic Formula coefficients. `d` is the peak force in newtons when passed
/// to [`pacejka_lateral_force`]; inside [`VehicleParams`] it is a multiplier
/// on the axle's `mu * F_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TireParams {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl TireParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.b > 0.0 && self.c > 0.0 && self.d >= 0.0 && self.e.is_finite()) {
            return Err(format!("invalid tire parameters {self:?}: need b > 0, c > 0, d >= 0"));
        }
        Ok(())
    }
}

impl Default for TireParams {
    fn default() -> Self {
        Self {
            b: 10.0,
            c: 1.9,
            d: 1.0,
            e: 0.97,
        }
    }
}

/// Magic Formula lateral force for slip angle `alpha` (rad).
pub fn pacejka_lateral_force(alpha: f64, p: &TireParams) -> f64 {
    let ba = p.b * alpha;
    p.d * (p.c * (ba - p.e * (ba - ba.atan())).atan()).sin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub dist_cg_front: f64,
    pub dist_cg_rear: f64,
    pub mu_nominal: f64,
    /// Friction multiplier of the slippery test surface.
    pub mu_scale: f64,
    pub drive_force_max: f64,
    pub brake_force_max: f64,
    /// Fraction of the brake force on the front axle.
    pub brake_front_share: f64,
    pub delta_max: f64,
    /// Steering actuator rate limit, rad/s.
    pub max_steer_rate: f64,
    pub front_tires: TireParams,
    pub rear_tires: TireParams,
    /// Fixed-step RK4 substeps per control period.
    pub substeps: usize,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1500.0,
            yaw_inertia: 2500.0,
            dist_cg_front: 1.2,
            dist_cg_rear: 1.6,
            mu_nominal: 1.0,
            mu_scale: 0.5,
            drive_force_max: 6000.0,
            brake_force_max: 12000.0,
            brake_front_share: 0.6,
            delta_max: 37f64.to_radians(),
            max_steer_rate: 700f64.to_radians(),
            front_tires: TireParams::default(),
            rear_tires: TireParams::default(),
            substeps: 50,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass > 0.0) {
            return Err("vehicle.mass must be > 0".into());
        }
        if !(self.yaw_inertia > 0.0) {
            return Err("vehicle.yaw_inertia must be > 0".into());
        }
        if !(self.dist_cg_front + self.dist_cg_rear > 0.0) {
            return Err("vehicle.dist_cg_front + dist_cg_rear must be > 0".into());
        }
        if !(self.mu_scale > 0.0 && self.mu_scale <= 1.0) {
            return Err("vehicle.mu_scale must lie in (0, 1]".into());
        }
        if !(self.mu_nominal > 0.0) {
            return Err("vehicle.mu_nominal must be > 0".into());
        }
        if !(self.delta_max > 0.0 && self.max_steer_rate > 0.0) {
            return Err("vehicle.delta_max and max_steer_rate must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.brake_front_share) {
            return Err("vehicle.brake_front_share must lie in [0, 1]".into());
        }
        if self.substeps == 0 {
            return Err("vehicle.substeps must be >= 1".into());
        }
        self.front_tires.validate()?;
        self.rear_tires.validate()
    }

    pub fn mu(&self) -> f64 {
        self.mu_nominal * self.mu_scale
    }

    pub fn wheelbase(&self) -> f64 {
        self.dist_cg_front + self.dist_cg_rear
    }

    /// Static normal loads `(front, rear)`.
    pub fn axle_loads(&self) -> (f64, f64) {
        let w = self.mass * GRAVITY / self.wheelbase();
        (w * self.dist_cg_rear, w * self.dist_cg_front)
    }

    /// Tire parameters of an axle with the peak factor resolved to newtons.
    pub fn axle_tire(&self, front: bool) -> TireParams {
        let (fz_f, fz_r) = self.axle_loads();
        let (tire, fz) = if front {
            (self.front_tires, fz_f)
        } else {
            (self.rear_tires, fz_r)
        };
        TireParams {
            d: tire.d * self.mu() * fz,
            ..tire
        }
    }
}

/// Lateral shove applied to the rear axle once per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KickPlate {
    pub trigger_x: f64,
    /// Signed body-frame lateral force, positive pushes the rear to the left.
    pub lateral_force: f64,
    pub duration: f64,
}

impl KickPlate {
    pub fn inactive() -> Self {
        Self {
            trigger_x: f64::INFINITY,
            lateral_force: 0.0,
            duration: 0.1,
        }
    }
}

/// Firing state of the kick plate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum PlatePhase {
    #[default]
    Armed,
    Active {
        remaining: f64,
    },
    Spent,
}

impl PlatePhase {
    pub fn has_fired(&self) -> bool {
        !matches!(self, PlatePhase::Armed)
    }
}

/// Normalized driver commands, both in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Controls {
    /// Throttle (positive) or brake (negative).
    pub pedal: f64,
    /// Steering-wheel rate as a fraction of the actuator limit.
    pub steer_rate: f64,
}

impl Controls {
    pub fn new(pedal: f64, steer_rate: f64) -> Self {
        Self {
            pedal: pedal.clamp(-1.0, 1.0),
            steer_rate: steer_rate.clamp(-1.0, 1.0),
        }
    }
}

/// Road-wheel angle after one control period.
pub fn next_steering_angle(delta: f64, steer_rate_cmd: f64, params: &VehicleParams, dt: f64) -> f64 {
    let rate = steer_rate_cmd.clamp(-1.0, 1.0) * params.max_steer_rate;
    (delta + rate * dt).clamp(-params.delta_max, params.delta_max)
}

// Integrated part of the state: [x, y, yaw, v_long, v_lat, yaw_rate].
type Kinematic = [f64; 6];

struct Forces {
    deriv: Kinematic,
    a_long: f64,
    a_lat: f64,
}

struct AxleCommand {
    front_fx: f64,
    rear_fx: f64,
}

fn longitudinal_forces(pedal: f64, v_long: f64, params: &VehicleParams) -> AxleCommand {
    if pedal >= 0.0 {
        AxleCommand {
            front_fx: 0.0,
            rear_fx: pedal * params.drive_force_max,
        }
    } else {
        // brakes oppose motion and fade out at standstill
        let direction = (v_long / MIN_SLIP_SPEED).clamp(-1.0, 1.0);
        let brake = -pedal * params.brake_force_max * direction;
        AxleCommand {
            front_fx: -brake * params.brake_front_share,
            rear_fx: -brake * (1.0 - params.brake_front_share),
        }
    }
}

/// Longitudinal force capped by the friction limit and the lateral peak left
/// over on the friction ellipse.
fn combined_slip(fx: f64, tire: &TireParams, mu_fz: f64) -> (f64, TireParams) {
    let fx = fx.clamp(-mu_fz, mu_fz);
    let usage = fx / mu_fz;
    let scale = (1.0 - usage * usage).max(0.0).sqrt();
    (
        fx,
        TireParams {
            d: tire.d * scale,
            ..*tire
        },
    )
}

fn derivatives(k: &Kinematic, delta: f64, pedal: f64, plate_force: f64, params: &VehicleParams) -> Forces {
    let [_, _, yaw, vx, vy, r] = *k;
    let a = params.dist_cg_front;
    let b = params.dist_cg_rear;
    let (fz_f, fz_r) = params.axle_loads();
    let mu = params.mu();

    let vx_floor = vx.max(MIN_SLIP_SPEED);
    let alpha_f = delta - (vy + a * r).atan2(vx_floor);
    let alpha_r = -(vy - b * r).atan2(vx_floor);

    let cmd = longitudinal_forces(pedal, vx, params);
    let (fx_f, tire_f) = combined_slip(cmd.front_fx, &params.axle_tire(true), mu * fz_f);
    let (fx_r, tire_r) = combined_slip(cmd.rear_fx, &params.axle_tire(false), mu * fz_r);
    let fy_f = pacejka_lateral_force(alpha_f, &tire_f);
    let fy_r = pacejka_lateral_force(alpha_r, &tire_r) + plate_force;

    let (sd, cd) = delta.sin_cos();
    let fx_body = fx_r + fx_f * cd - fy_f * sd;
    let fy_body = fy_r + fx_f * sd + fy_f * cd;
    let yaw_moment = a * (fy_f * cd + fx_f * sd) - b * fy_r;

    let m = params.mass;
    let (sy, cy) = yaw.sin_cos();
    Forces {
        deriv: [
            vx * cy - vy * sy,
            vx * sy + vy * cy,
            r,
            fx_body / m + vy * r,
            fy_body / m - vx * r,
            yaw_moment / params.yaw_inertia,
        ],
        a_long: fx_body / m,
        a_lat: fy_body / m,
    }
}

fn axpy(k: &Kinematic, h: f64, d: &Kinematic) -> Kinematic {
    std::array::from_fn(|i| k[i] + h * d[i])
}

/// Advance the vehicle by one control period `dt`.
///
/// Integration uses `params.substeps` fixed RK4 steps. The kick-plate force is
/// piecewise constant per substep and is added to the rear-axle lateral force
/// while the pulse is active. Returned accelerations are the period mean.
pub fn step_dynamics(
    state: &VehicleState,
    controls: Controls,
    plate: &KickPlate,
    phase: PlatePhase,
    params: &VehicleParams,
    dt: f64,
) -> Result<(VehicleState, PlatePhase), PhysicsFault> {
    let pedal = controls.pedal.clamp(-1.0, 1.0);
    let rate = controls.steer_rate.clamp(-1.0, 1.0) * params.max_steer_rate;
    let delta0 = state.delta;
    let steer_at = |t: f64| (delta0 + rate * t).clamp(-params.delta_max, params.delta_max);

    let n = params.substeps.max(1);
    let h = dt / n as f64;
    let mut k: Kinematic = [state.x, state.y, state.yaw, state.v_long, state.v_lat, state.yaw_rate];
    let mut phase = phase;
    let mut sum_a_long = 0.0;
    let mut sum_a_lat = 0.0;

    for i in 0..n {
        let t = i as f64 * h;
        if phase == PlatePhase::Armed {
            let rear_x = k[0] - params.dist_cg_rear * k[2].cos();
            if rear_x >= plate.trigger_x {
                phase = PlatePhase::Active {
                    remaining: plate.duration,
                };
            }
        }
        let plate_force = match phase {
            PlatePhase::Active { remaining } if remaining > 0.5 * h => plate.lateral_force,
            _ => 0.0,
        };

        let f1 = derivatives(&k, steer_at(t), pedal, plate_force, params);
        let f2 = derivatives(
            &axpy(&k, 0.5 * h, &f1.deriv),
            steer_at(t + 0.5 * h),
            pedal,
            plate_force,
            params,
        );
        let f3 = derivatives(
            &axpy(&k, 0.5 * h, &f2.deriv),
            steer_at(t + 0.5 * h),
            pedal,
            plate_force,
            params,
        );
        let f4 = derivatives(&axpy(&k, h, &f3.deriv), steer_at(t + h), pedal, plate_force, params);
        for (j, kj) in k.iter_mut().enumerate() {
            *kj += h / 6.0 * (f1.deriv[j] + 2.0 * f2.deriv[j] + 2.0 * f3.deriv[j] + f4.deriv[j]);
        }
        sum_a_long += f1.a_long;
        sum_a_lat += f1.a_lat;

        if let PlatePhase::Active { remaining } = phase {
            let remaining = remaining - h;
            phase = if remaining > 0.5 * h {
                PlatePhase::Active { remaining }
            } else {
                PlatePhase::Spent
            };
        }
    }

    let next = VehicleState {
        x: k[0],
        y: k[1],
        yaw: k[2],
        v_long: k[3],
        v_lat: k[4],
        yaw_rate: k[5],
        delta: next_steering_angle(delta0, controls.steer_rate, params, dt),
        a_long: sum_a_long / n as f64,
        a_lat: sum_a_lat / n as f64,
    };
    if next.is_finite() {
        Ok((next, phase))
    } else {
        Err(PhysicsFault)
    }
}
