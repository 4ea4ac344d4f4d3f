//! Ground-truth world model: vehicles, lanes, clock, and kinematic
//! integration for the straight-track scenario.
//!
//! Coordinate convention: +x along the track, +y to the left, lane 0 is the
//! rightmost lane. Headings are in degrees, 0 = straight down the track.

use serde::{Deserialize, Serialize};

/// Role of a vehicle in the scenario.
///
/// The EV predicts and yields, the TV lane-changes, the PV brakes to create
/// the conflict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleRole {
    Ev,
    Tv,
    Pv,
}

impl VehicleRole {
    /// Fixed body dimensions (length, width) in meters per role.
    pub fn dimensions(self) -> (f64, f64) {
        match self {
            VehicleRole::Pv => (4.5, 1.8),
            VehicleRole::Tv => (3.0, 1.5),
            VehicleRole::Ev => (1.2, 0.7),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VehicleRole::Ev => "EV",
            VehicleRole::Tv => "TV",
            VehicleRole::Pv => "PV",
        }
    }
}

/// Kinematic state of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub role: VehicleRole,
    /// Longitudinal position of the body center (m).
    pub x: f64,
    /// Lateral position of the body center (m), +y to the left.
    pub y: f64,
    /// Lane index, 0 = rightmost.
    pub lane_id: u32,
    /// Yaw in degrees, 0 = along +x.
    pub heading: f64,
    /// Longitudinal speed (m/s), never negative.
    pub speed: f64,
    /// Longitudinal acceleration realized on the last step (m/s²).
    pub accel: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn new(id: u32, role: VehicleRole, x: f64, lane_id: u32, lanes: &LaneGeometry) -> Self {
        let (length, width) = role.dimensions();
        VehicleState {
            id,
            role,
            x,
            y: lanes.lane_center(lane_id),
            lane_id,
            heading: 0.0,
            speed: 0.0,
            accel: 0.0,
            length,
            width,
        }
    }

    /// Front bumper position.
    pub fn front(&self) -> f64 {
        self.x + 0.5 * self.length
    }

    /// Rear bumper position.
    pub fn rear(&self) -> f64 {
        self.x - 0.5 * self.length
    }

    /// True when the two bodies overlap as axis-aligned rectangles.
    pub fn overlaps(&self, other: &VehicleState) -> bool {
        (self.x - other.x).abs() < 0.5 * (self.length + other.length)
            && (self.y - other.y).abs() < 0.5 * (self.width + other.width)
    }
}

/// Straight-track lane layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    pub lane_count: u32,
    /// Lane width (m).
    pub lane_width: f64,
    /// Track length (m).
    pub track_length: f64,
}

impl Default for LaneGeometry {
    fn default() -> Self {
        LaneGeometry {
            lane_count: 2,
            lane_width: 3.5,
            track_length: 40.0,
        }
    }
}

impl LaneGeometry {
    /// Lateral center of a lane. Lane 0 is centered at y = 0.
    pub fn lane_center(&self, lane_id: u32) -> f64 {
        lane_id as f64 * self.lane_width
    }

    /// Lateral position of the marking between `lane_id` and the lane to its
    /// left, i.e. the line a left lane change crosses.
    pub fn left_marking(&self, lane_id: u32) -> f64 {
        self.lane_center(lane_id) + 0.5 * self.lane_width
    }

    /// Lane index for a lateral position, clamped to the existing lanes.
    pub fn lane_of(&self, y: f64) -> u32 {
        let idx = (y / self.lane_width + 0.5).floor();
        idx.clamp(0.0, (self.lane_count - 1) as f64) as u32
    }
}

/// Fixed-step simulation clock. `t` is always exactly
/// `step_index * timestep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub step_index: u64,
    pub timestep: f64,
}

impl SimClock {
    pub fn new(timestep: f64) -> Self {
        assert!(timestep > 0.0, "timestep must be positive");
        SimClock {
            step_index: 0,
            timestep,
        }
    }

    pub fn t(&self) -> f64 {
        self.step_index as f64 * self.timestep
    }

    pub fn tick(&mut self) {
        self.step_index += 1;
    }
}

/// Point-mass longitudinal step. The commanded acceleration is clipped so
/// the resulting speed never goes negative; `y` and `heading` are left to
/// the lateral profile.
pub fn step_kinematics(state: &VehicleState, commanded_accel: f64, dt: f64) -> VehicleState {
    debug_assert!(dt > 0.0);
    let accel = if state.speed + commanded_accel * dt < 0.0 {
        -state.speed / dt
    } else {
        commanded_accel
    };
    let mut next = state.clone();
    next.speed = (state.speed + accel * dt).max(0.0);
    next.x = state.x + state.speed * dt + 0.5 * accel * dt * dt;
    next.accel = accel;
    next
}

/// Bumper-to-bumper longitudinal gap from `follower` to `leader`. Negative
/// when the bodies overlap longitudinally.
pub fn ground_truth_gap(follower: &VehicleState, leader: &VehicleState) -> f64 {
    leader.rear() - follower.front()
}

/// Smooth lateral ramp between lane centers; y follows half a cosine so the
/// lane marking is crossed exactly at the midpoint of the maneuver.
#[derive(Debug, Clone, PartialEq)]
pub struct LateralProfile {
    pub start_t: f64,
    pub duration: f64,
    pub y_from: f64,
    pub y_to: f64,
}

impl LateralProfile {
    /// Lateral position at time `t`; clamps to the endpoints outside the ramp.
    pub fn y_at(&self, t: f64) -> f64 {
        let s = ((t - self.start_t) / self.duration).clamp(0.0, 1.0);
        let blend = 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
        self.y_from + (self.y_to - self.y_from) * blend
    }

    /// Moment the midpoint (the lane marking, for a center-to-center ramp)
    /// is crossed.
    pub fn crossing_t(&self) -> f64 {
        self.start_t + 0.5 * self.duration
    }

    pub fn done(&self, t: f64) -> bool {
        t >= self.start_t + self.duration
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vehicle(role: VehicleRole, x: f64, speed: f64) -> VehicleState {
        let lanes = LaneGeometry::default();
        let mut v = VehicleState::new(0, role, x, 0, &lanes);
        v.speed = speed;
        v
    }

    #[test]
    fn zero_accel_step_advances_linearly() {
        let v = vehicle(VehicleRole::Tv, 0.0, 2.5);
        let next = step_kinematics(&v, 0.0, 0.1);
        assert_eq!(next.speed, 2.5);
        assert!((next.x - 0.25).abs() < 1e-12);
    }

    #[test]
    fn braking_clamps_speed_at_zero() {
        let v = vehicle(VehicleRole::Tv, 0.0, 0.1);
        let next = step_kinematics(&v, -5.0, 0.1);
        assert_eq!(next.speed, 0.0);
        assert!(next.x > 0.0);
    }

    #[test]
    fn acceleration_from_rest_uses_half_a_t_squared() {
        let v = vehicle(VehicleRole::Tv, 0.0, 0.0);
        let next = step_kinematics(&v, 1.0, 0.1);
        assert!((next.speed - 0.1).abs() < 1e-12);
        assert!((next.x - 0.005).abs() < 1e-12);
    }

    #[test]
    fn gap_is_bumper_to_bumper() {
        let follower = vehicle(VehicleRole::Tv, 0.0, 0.0); // length 3.0
        let leader = vehicle(VehicleRole::Pv, 11.75, 0.0); // length 4.5
        assert!((ground_truth_gap(&follower, &leader) - 8.0).abs() < 1e-12);

        let leader_far = vehicle(VehicleRole::Pv, 13.75, 0.0);
        assert!((ground_truth_gap(&follower, &leader_far) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_centers_give_negative_gap() {
        let follower = vehicle(VehicleRole::Tv, 5.0, 0.0);
        let leader = vehicle(VehicleRole::Pv, 5.0, 0.0);
        assert!((ground_truth_gap(&follower, &leader) + 3.75).abs() < 1e-12);
    }

    #[test]
    fn clock_time_is_exact_grid() {
        let mut clock = SimClock::new(0.1);
        for i in 0..1000 {
            assert_eq!(clock.t(), i as f64 * 0.1);
            clock.tick();
        }
    }

    #[test]
    fn lateral_ramp_crosses_marking_at_midpoint() {
        let lanes = LaneGeometry::default();
        let ramp = LateralProfile {
            start_t: 10.0,
            duration: 3.0,
            y_from: lanes.lane_center(0),
            y_to: lanes.lane_center(1),
        };
        let marking = lanes.left_marking(0);
        assert!((ramp.y_at(ramp.crossing_t()) - marking).abs() < 1e-12);
        assert_eq!(ramp.y_at(9.0), ramp.y_from);
        assert_eq!(ramp.y_at(14.0), ramp.y_to);
    }

    #[test]
    fn constant_speed_position_is_affine_in_time() {
        let mut v = vehicle(VehicleRole::Pv, 1.0, 2.0);
        for step in 1..=50 {
            v = step_kinematics(&v, 0.0, 0.1);
            let t = step as f64 * 0.1;
            assert!((v.x - (1.0 + 2.0 * t)).abs() < 1e-9);
            assert_eq!(v.speed, 2.0);
        }
    }
}
