//! Randomized benchmark layouts: kick plate plus obstacles on a straight multi-lane road.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{Aabb, StraightPath};
use crate::dynamics::KickPlate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub lane_count: usize,
    pub lane_width: f64,
    pub road_length: f64,
    /// 70 km/h.
    pub entry_speed: f64,
    /// Station of the kick plate along the road.
    pub plate_x: f64,
    /// Distance from the start position to the plate.
    pub approach_distance: f64,
    pub plate_force_min: f64,
    pub plate_force_max: f64,
    pub plate_duration: f64,
    /// Obstacle stations are drawn from `plate_x + [gap_min, gap_max]`.
    pub obstacle_gap_min: f64,
    pub obstacle_gap_max: f64,
    pub obstacle_length: f64,
    pub obstacle_width: f64,
    pub max_obstacles: usize,
    /// Ego vehicle footprint.
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 3.5,
            road_length: 600.0,
            entry_speed: 70.0 / 3.6,
            plate_x: 50.0,
            approach_distance: 30.0,
            plate_force_min: 9000.0,
            plate_force_max: 16000.0,
            plate_duration: 0.1,
            obstacle_gap_min: 30.0,
            obstacle_gap_max: 70.0,
            obstacle_length: 4.5,
            obstacle_width: 1.8,
            max_obstacles: 2,
            vehicle_length: 4.5,
            vehicle_width: 1.8,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.lane_count < 2 {
            return Err("scenario.lane_count must be >= 2".into());
        }
        if self.max_obstacles == 0 || self.max_obstacles > self.lane_count - 1 {
            return Err("scenario.max_obstacles must lie in [1, lane_count - 1]".into());
        }
        let positive = [
            ("lane_width", self.lane_width),
            ("road_length", self.road_length),
            ("entry_speed", self.entry_speed),
            ("plate_duration", self.plate_duration),
            ("obstacle_length", self.obstacle_length),
            ("obstacle_width", self.obstacle_width),
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("scenario.{name} must be > 0"));
            }
        }
        if !(0.0 <= self.plate_force_min && self.plate_force_min <= self.plate_force_max) {
            return Err("scenario.plate_force_min must lie in [0, plate_force_max]".into());
        }
        if !(0.0 <= self.obstacle_gap_min && self.obstacle_gap_min <= self.obstacle_gap_max) {
            return Err("scenario.obstacle_gap_min must lie in [0, obstacle_gap_max]".into());
        }
        if self.plate_x - self.approach_distance < 0.0 {
            return Err("scenario.approach_distance must not exceed plate_x".into());
        }
        if self.plate_x + self.obstacle_gap_max + self.obstacle_length > self.road_length {
            return Err("scenario.road_length too short for the obstacle range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub lane: usize,
    /// Station of the near (rear) face.
    pub station: f64,
    pub length: f64,
    pub width: f64,
}

/// One randomized episode layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub lane_count: usize,
    pub lane_width: f64,
    pub road_length: f64,
    pub entry_speed: f64,
    pub entry_lane: usize,
    pub start_x: f64,
    pub kick_plate: KickPlate,
    pub obstacles: Vec<Obstacle>,
}

impl Scenario {
    pub fn road_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Lane index containing lateral position `y`, clamped to the road.
    pub fn lane_of(&self, y: f64) -> usize {
        ((y / self.lane_width).floor().max(0.0) as usize).min(self.lane_count - 1)
    }

    /// Centerline of the entry lane, the pre-oversteer reference path.
    pub fn original_path(&self) -> StraightPath {
        StraightPath {
            origin: (0.0, self.lane_center(self.entry_lane)),
            heading: 0.0,
        }
    }

    pub fn obstacle_box(&self, o: &Obstacle) -> Aabb {
        let yc = self.lane_center(o.lane);
        Aabb {
            x_min: o.station,
            x_max: o.station + o.length,
            y_min: yc - 0.5 * o.width,
            y_max: yc + 0.5 * o.width,
        }
    }

    pub fn obstacle_boxes(&self) -> Vec<Aabb> {
        self.obstacles.iter().map(|o| self.obstacle_box(o)).collect()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.obstacles.len();
        if n == 0 || n > self.lane_count - 1 {
            return Err(format!("{n} obstacles on {} lanes", self.lane_count));
        }
        for (i, a) in self.obstacles.iter().enumerate() {
            if a.lane >= self.lane_count {
                return Err(format!("obstacle lane {} out of range", a.lane));
            }
            if self.obstacles[..i].iter().any(|b| b.lane == a.lane) {
                return Err(format!("two obstacles in lane {}", a.lane));
            }
        }
        Ok(())
    }
}

/// Draw a layout: entry lane uniform, 1..=max obstacles uniform, obstacle lanes
/// without replacement, stations i.i.d. uniform, plate direction a fair coin and
/// magnitude uniform.
pub fn sample_scenario<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Scenario {
    let entry_lane = rng.random_range(0..cfg.lane_count);
    let count = rng.random_range(1..=cfg.max_obstacles.min(cfg.lane_count - 1));
    let lanes = sample(rng, cfg.lane_count, count);
    let obstacles = lanes
        .iter()
        .map(|lane| Obstacle {
            lane,
            station: cfg.plate_x + rng.random_range(cfg.obstacle_gap_min..=cfg.obstacle_gap_max),
            length: cfg.obstacle_length,
            width: cfg.obstacle_width,
        })
        .collect();
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let magnitude = rng.random_range(cfg.plate_force_min..=cfg.plate_force_max);
    Scenario {
        lane_count: cfg.lane_count,
        lane_width: cfg.lane_width,
        road_length: cfg.road_length,
        entry_speed: cfg.entry_speed,
        entry_lane,
        start_x: cfg.plate_x - cfg.approach_distance,
        kick_plate: KickPlate {
            trigger_x: cfg.plate_x,
            lateral_force: sign * magnitude,
            duration: cfg.plate_duration,
        },
        obstacles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_scenario() {
        let cfg = ScenarioConfig::default();
        let a = sample_scenario(&cfg, &mut ChaCha8Rng::seed_from_u64(42));
        let b = sample_scenario(&cfg, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn invariants_hold_for_many_samples() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        for _ in 0..5000 {
            let s = sample_scenario(&cfg, &mut rng);
            s.check_invariants().unwrap();
            counts[s.obstacles.len()] += 1;
            for o in &s.obstacles {
                assert!((80.0..=120.0).contains(&o.station));
            }
        }
        assert_eq!(counts[0], 0);
        // uniform on {1, 2}
        assert!((counts[1] as f64 / 5000.0 - 0.5).abs() < 0.03);
    }

    #[test]
    fn lane_lookup() {
        let s = sample_scenario(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s.lane_of(0.1), 0);
        assert_eq!(s.lane_of(5.25), 1);
        assert_eq!(s.lane_of(50.0), 2);
        assert_eq!(s.lane_of(-1.0), 0);
    }
}
