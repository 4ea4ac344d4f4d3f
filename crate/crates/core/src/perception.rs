//! Synthetic stereo perception: the geometric estimators of the real rig
//! (disparity→depth, pixel→3D, tilt compensation), the two tracker/velocity
//! pipelines, detector latency profiles, speed sensing, and TTC/THW
//! extraction.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("disparity must be positive, got {0}")]
    NonPositiveDisparity(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("track needs at least 2 samples, has {0}")]
    InsufficientHistory(usize),
    #[error("sample time {t} not after last sample time {last}")]
    OrderingError { t: f64, last: f64 },
}

/// Stereo camera intrinsics and mounting, mirroring the deployed rig:
/// 672×376 @ 10 FPS with a 119.89 mm baseline, tilted 15° and mounted
/// 1.8 m above ground with a 0.2 m lateral offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Stereo baseline (m).
    pub baseline: f64,
    /// Downward tilt of the optical axis (deg).
    pub tilt_deg: f64,
    pub width: u32,
    pub height: u32,
    pub nominal_fps: f64,
    /// Mount height above ground (m).
    pub mount_height: f64,
    /// Lateral mount offset from the vehicle centerline (m).
    pub mount_lateral: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fx: 500.0,
            fy: 500.0,
            cx: 336.0,
            cy: 188.0,
            baseline: 0.11989,
            tilt_deg: 15.0,
            width: 672,
            height: 376,
            nominal_fps: 10.0,
            mount_height: 1.8,
            mount_lateral: 0.2,
        }
    }
}

impl CameraModel {
    /// Product f·B, the depth-disparity constant of the stereo pair.
    pub fn depth_constant(&self) -> f64 {
        self.fx * self.baseline
    }
}

/// Latency/confidence profile of one detector backbone, as benchmarked on
/// the rig (100-frame mean ± std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub name: String,
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
    pub confidence_mean: f64,
    pub confidence_std: f64,
}

impl DetectorProfile {
    pub fn yolov8n() -> Self {
        DetectorProfile {
            name: "yolov8n".into(),
            latency_mean_ms: 18.4,
            latency_std_ms: 3.5,
            confidence_mean: 0.70,
            confidence_std: 0.05,
        }
    }

    pub fn faster_rcnn() -> Self {
        DetectorProfile {
            name: "faster_rcnn".into(),
            latency_mean_ms: 127.8,
            latency_std_ms: 3.7,
            confidence_mean: 0.22,
            confidence_std: 0.03,
        }
    }

    pub fn ssdlite() -> Self {
        DetectorProfile {
            name: "ssdlite".into(),
            latency_mean_ms: 101.2,
            latency_std_ms: 12.1,
            confidence_mean: 0.07,
            confidence_std: 0.01,
        }
    }
}

/// One synthetic stereo detection of the preceding vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub track_id: u32,
    /// Bounding-box center pixel.
    pub u: f64,
    pub v: f64,
    /// Stereo disparity (px), positive for any finite-depth detection.
    pub disparity: f64,
    pub confidence: f64,
}

/// Depth = f·B / d.
pub fn disparity_to_depth(disparity: f64, cam: &CameraModel) -> Result<f64, PerceptionError> {
    if disparity <= 0.0 {
        return Err(PerceptionError::NonPositiveDisparity(disparity));
    }
    Ok(cam.depth_constant() / disparity)
}

/// Back-projects a pixel at known depth into the camera frame:
/// X = (u−cx)·Z/fx, Y = (v−cy)·Z/fy.
pub fn pixel_to_camera(
    u: f64,
    v: f64,
    z: f64,
    cam: &CameraModel,
) -> Result<[f64; 3], PerceptionError> {
    if z <= 0.0 {
        return Err(PerceptionError::NonPositiveDepth(z));
    }
    Ok([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z])
}

/// Undoes the mount tilt: rotates by −tilt about the camera lateral (x)
/// axis. Camera axes: x right, y down, z forward.
pub fn tilt_rotate(p: [f64; 3], tilt_deg: f64) -> [f64; 3] {
    let theta = -tilt_deg.to_radians();
    let (s, c) = theta.sin_cos();
    [p[0], c * p[1] - s * p[2], s * p[1] + c * p[2]]
}

/// Tilt compensation followed by the fixed camera-to-vehicle translation.
/// The output frame keeps the camera axis convention but is centered on the
/// vehicle at ground level.
pub fn tilt_compensate(p: [f64; 3], cam: &CameraModel) -> [f64; 3] {
    let r = tilt_rotate(p, cam.tilt_deg);
    [r[0] + cam.mount_lateral, r[1] - cam.mount_height, r[2]]
}

/// Disparity noise model for synthesized observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StereoNoise {
    /// Disparity quantization step (px); 0 disables quantization.
    pub quantum_px: f64,
    /// Zero-mean Gaussian disparity noise (px); 0 disables noise.
    pub sigma_px: f64,
    /// Near sensing limit (m).
    pub min_depth: f64,
    /// Far sensing limit (m).
    pub max_depth: f64,
}

impl Default for StereoNoise {
    fn default() -> Self {
        StereoNoise {
            quantum_px: 0.25,
            sigma_px: 0.1,
            min_depth: 0.3,
            max_depth: 40.0,
        }
    }
}

/// Why no detection came back for a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoDetection {
    OutOfRange,
    OutOfView,
    DegenerateDisparity,
}

/// Projects the true target point (camera frame) through the stereo model:
/// ideal disparity f·B/Z, quantized to `quantum_px` and perturbed by
/// Gaussian noise. Depth error of the round trip grows like Z²·Δd/(f·B).
pub fn synthesize_observation<R: Rng>(
    rel_pose: [f64; 3],
    cam: &CameraModel,
    noise: &StereoNoise,
    track_id: u32,
    confidence: f64,
    rng: &mut R,
) -> Result<Detection, NoDetection> {
    let [x, y, z] = rel_pose;
    if z < noise.min_depth || z > noise.max_depth {
        return Err(NoDetection::OutOfRange);
    }
    let u = cam.cx + cam.fx * x / z;
    let v = cam.cy + cam.fy * y / z;
    if u < 0.0 || u >= cam.width as f64 || v < 0.0 || v >= cam.height as f64 {
        return Err(NoDetection::OutOfView);
    }
    let mut d = cam.depth_constant() / z;
    if noise.quantum_px > 0.0 {
        d = (d / noise.quantum_px).round() * noise.quantum_px;
    }
    if noise.sigma_px > 0.0 {
        let gauss = Normal::new(0.0, noise.sigma_px).expect("sigma is positive");
        d += gauss.sample(rng);
    }
    if d <= 0.0 {
        return Err(NoDetection::DegenerateDisparity);
    }
    Ok(Detection {
        track_id,
        u,
        v,
        disparity: d,
        confidence,
    })
}

/// Per-object track history shared by both pipelines: a rolling window of
/// depth samples for the EMA tracker and the recent 3D points for the
/// radial-speed estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub track_id: u32,
    /// Rolling (t, depth) window, capacity `capacity`, strictly increasing t.
    window: VecDeque<(f64, f64)>,
    capacity: usize,
    /// EMA coefficient, 0.3 on the rig.
    alpha: f64,
    pub smoothed_depth: f64,
    pub ema_velocity: f64,
    /// Recent camera-frame points for finite differences, newest last.
    points: VecDeque<(f64, [f64; 3])>,
}

impl TrackState {
    pub fn new(track_id: u32) -> Self {
        Self::with_params(track_id, 5, 0.3)
    }

    pub fn with_params(track_id: u32, capacity: usize, alpha: f64) -> Self {
        TrackState {
            track_id,
            window: VecDeque::with_capacity(capacity),
            capacity,
            alpha,
            smoothed_depth: 0.0,
            ema_velocity: 0.0,
            points: VecDeque::with_capacity(2),
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    fn last_t(&self) -> Option<f64> {
        self.window.back().map(|&(t, _)| t)
    }

    /// Pipeline-2 update: push a depth sample, refresh the window mean and
    /// the anchor-based velocity, then fold it into the EMA.
    pub fn update_depth(&mut self, depth: f64, t: f64) -> Result<(), PerceptionError> {
        if let Some(last) = self.last_t() {
            if t <= last {
                return Err(PerceptionError::OrderingError { t, last });
            }
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back((t, depth));
        self.smoothed_depth =
            self.window.iter().map(|&(_, d)| d).sum::<f64>() / self.window.len() as f64;
        let raw = if self.window.len() >= 2 {
            let (t0, d0) = *self.window.front().expect("nonempty");
            let (t1, d1) = *self.window.back().expect("nonempty");
            (d1 - d0) / (t1 - t0)
        } else {
            0.0
        };
        self.ema_velocity = self.alpha * raw + (1.0 - self.alpha) * self.ema_velocity;
        Ok(())
    }

    /// Pipeline-1 update: record the latest camera-frame point for the
    /// finite-difference radial-speed estimate.
    pub fn update_point(&mut self, point: [f64; 3], t: f64) -> Result<(), PerceptionError> {
        if let Some(&(last, _)) = self.points.back() {
            if t <= last {
                return Err(PerceptionError::OrderingError { t, last });
            }
        }
        if self.points.len() == 2 {
            self.points.pop_front();
        }
        self.points.push_back((t, point));
        Ok(())
    }

    /// Pipeline-1 radial speed: v_obj = −(v_x·X + v_z·Z)/√(X²+Z²) from the
    /// two most recent points. Positive when the range is closing.
    pub fn radial_speed(&self) -> Result<f64, PerceptionError> {
        if self.points.len() < 2 {
            return Err(PerceptionError::InsufficientHistory(self.points.len()));
        }
        let (t0, p0) = self.points[0];
        let (t1, p1) = self.points[1];
        let dt = t1 - t0;
        let vx = (p1[0] - p0[0]) / dt;
        let vz = (p1[2] - p0[2]) / dt;
        Ok(radial_speed_from(p1[0], p1[2], vx, vz))
    }
}

/// Radial-speed formula of pipeline 1 on explicit components.
pub fn radial_speed_from(x: f64, z: f64, vx: f64, vz: f64) -> f64 {
    -(vx * x + vz * z) / (x * x + z * z).sqrt()
}

/// TTC/THW bundle derived from one gap measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyFeatures {
    /// Time to collision (s); +∞ when the range is not closing.
    pub ttc: f64,
    /// Time headway (s); +∞ when the follower is stopped.
    pub thw: f64,
    /// Gap (m).
    pub gap: f64,
    /// Closing speed v_tv − v_pv (m/s).
    pub v_rel: f64,
}

/// TTC = d / v_rel when closing, THW = d / v_tv. Infinities encode "no
/// closing risk"; receding targets never produce a finite TTC.
pub fn safety_features(gap: f64, v_tv: f64, v_pv: f64) -> SafetyFeatures {
    let v_rel = v_tv - v_pv;
    let (ttc, thw) = if gap == 0.0 {
        (0.0, 0.0)
    } else {
        let ttc = if v_rel > 0.0 { gap / v_rel } else { f64::INFINITY };
        let thw = if v_tv > 0.0 { gap / v_tv } else { f64::INFINITY };
        (ttc, thw)
    };
    SafetyFeatures {
        ttc,
        thw,
        gap,
        v_rel,
    }
}

/// Own-velocity sensing mode of the TV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedSensorKind {
    /// Throttle-calibrated measurement: every tick, error bounded by 3 km/h.
    Throttle,
    /// Phone GPS: 1 Hz readings with one-sample lag.
    Gps,
}

/// Maximum throttle-measurement error, 3 km/h in m/s.
pub const THROTTLE_MAX_ERR: f64 = 3.0 / 3.6;

/// Stateful speed sensor model.
#[derive(Debug, Clone)]
pub struct SpeedSensor {
    pub kind: SpeedSensorKind,
    /// Value captured at the previous 1 Hz grid point (GPS lag buffer).
    held: Option<f64>,
    next_grid: f64,
}

impl SpeedSensor {
    pub fn new(kind: SpeedSensorKind) -> Self {
        SpeedSensor {
            kind,
            held: None,
            next_grid: 0.0,
        }
    }

    /// Samples the sensor at simulation time `t`. Throttle mode returns on
    /// every call; GPS mode returns only on the 1 Hz grid and reports the
    /// speed captured one interval earlier.
    pub fn sample<R: Rng>(&mut self, true_speed: f64, t: f64, rng: &mut R) -> Option<f64> {
        match self.kind {
            SpeedSensorKind::Throttle => {
                let err = rng.random_range(-THROTTLE_MAX_ERR..=THROTTLE_MAX_ERR);
                Some((true_speed + err).max(0.0))
            }
            SpeedSensorKind::Gps => {
                if t + 1e-9 < self.next_grid {
                    return None;
                }
                self.next_grid = (t + 1e-9).floor() + 1.0;
                let out = self.held;
                self.held = Some(true_speed);
                out
            }
        }
    }
}

/// Which perception pipeline is running on the TV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineVariant {
    /// Stereo-matching depth with the radial-speed tracker.
    P1,
    /// ROI-segmentation depth with the EMA tracker.
    P2,
}

/// Latency budget of the non-detector stages per variant (ms). Defaults are
/// calibrated so the implied average frame rates land on the rig's measured
/// 3.75 FPS (P1) and 5.3 FPS (P2) with the yolov8n detector profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageLatencies {
    pub p1_extra_mean_ms: f64,
    pub p1_extra_std_ms: f64,
    pub p2_extra_mean_ms: f64,
    pub p2_extra_std_ms: f64,
}

impl Default for StageLatencies {
    fn default() -> Self {
        StageLatencies {
            p1_extra_mean_ms: 248.3,
            p1_extra_std_ms: 18.0,
            p2_extra_mean_ms: 170.3,
            p2_extra_std_ms: 12.0,
        }
    }
}

/// Per-frame processing schedule for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct CadenceSchedule {
    /// Effective frame periods (ms), camera-capped from below.
    pub periods_ms: Vec<f64>,
}

impl CadenceSchedule {
    /// Average frame rate implied by the schedule: frames / total time.
    pub fn mean_fps(&self) -> f64 {
        let total_s: f64 = self.periods_ms.iter().sum::<f64>() / 1000.0;
        self.periods_ms.len() as f64 / total_s
    }
}

/// Draws `frames` per-frame latencies (detector + variant stages) and
/// converts them to effective frame periods. A frame can never complete
/// faster than the camera delivers, so periods are floored at the nominal
/// camera interval.
pub fn pipeline_cadence<R: Rng>(
    profile: &DetectorProfile,
    variant: PipelineVariant,
    stages: &StageLatencies,
    cam: &CameraModel,
    frames: usize,
    rng: &mut R,
) -> CadenceSchedule {
    let (extra_mean, extra_std) = match variant {
        PipelineVariant::P1 => (stages.p1_extra_mean_ms, stages.p1_extra_std_ms),
        PipelineVariant::P2 => (stages.p2_extra_mean_ms, stages.p2_extra_std_ms),
    };
    let camera_period_ms = 1000.0 / cam.nominal_fps;
    let detector = Normal::new(profile.latency_mean_ms, profile.latency_std_ms.max(1e-9))
        .expect("valid latency profile");
    let stage = Normal::new(extra_mean, extra_std.max(1e-9)).expect("valid stage latencies");
    let periods_ms = (0..frames)
        .map(|_| {
            let latency = detector.sample(rng).max(0.0) + stage.sample(rng).max(0.0);
            latency.max(camera_period_ms)
        })
        .collect();
    CadenceSchedule { periods_ms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    #[test]
    fn depth_from_disparity_matches_hand_value() {
        // fx=500, B=0.11989 → f·B = 59.945; d = 5.9945 gives Z = 10.
        let z = disparity_to_depth(5.9945, &cam()).unwrap();
        assert!((z - 10.0).abs() < 1e-12);
    }

    #[test]
    fn unit_depth_at_disparity_equal_to_fb() {
        let c = cam();
        let z = disparity_to_depth(c.depth_constant(), &c).unwrap();
        assert!((z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_disparity_is_a_domain_error() {
        assert_eq!(
            disparity_to_depth(0.0, &cam()),
            Err(PerceptionError::NonPositiveDisparity(0.0))
        );
    }

    #[test]
    fn principal_point_ray_has_no_lateral_offset() {
        let c = cam();
        let p = pixel_to_camera(c.cx, c.cy, 10.0, &c).unwrap();
        assert_eq!(p, [0.0, 0.0, 10.0]);
    }

    #[test]
    fn lateral_offset_matches_hand_value() {
        // fx=500, cx=336: u=386 at Z=10 → X = 50·10/500 = 1.0.
        let p = pixel_to_camera(386.0, 188.0, 10.0, &cam()).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pixels_give_opposite_lateral_offsets() {
        let c = cam();
        let left = pixel_to_camera(c.cx - 40.0, c.cy, 5.0, &c).unwrap();
        let right = pixel_to_camera(c.cx + 40.0, c.cy, 5.0, &c).unwrap();
        assert!((left[0] + right[0]).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_depth_is_a_domain_error() {
        assert!(pixel_to_camera(300.0, 200.0, 0.0, &cam()).is_err());
    }

    #[test]
    fn zero_tilt_rotation_is_identity() {
        let p = [1.0, 2.0, 3.0];
        assert_eq!(tilt_rotate(p, 0.0), p);
    }

    #[test]
    fn quarter_turn_maps_forward_to_vertical() {
        let r = tilt_rotate([0.0, 0.0, 1.0], 90.0);
        assert!(r[0].abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-12);
        assert!(r[2].abs() < 1e-12);
    }

    #[test]
    fn fifteen_degree_tilt_shortens_forward_component() {
        let r = tilt_rotate([0.0, 0.0, 10.0], 15.0);
        assert!((r[2] - 10.0 * 15.0_f64.to_radians().cos()).abs() < 1e-12);
        assert!((r[2] - 9.659).abs() < 1e-3);
    }

    #[test]
    fn tilt_rotation_preserves_norm() {
        let p = [1.0, -2.0, 7.0];
        let r = tilt_rotate(p, 15.0);
        let n0 = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let n1 = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        assert!((n0 - n1).abs() < 1e-12);
    }

    #[test]
    fn noiseless_observation_round_trips_depth() {
        let c = cam();
        let noise = StereoNoise {
            quantum_px: 0.0,
            sigma_px: 0.0,
            ..StereoNoise::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &z in &[0.5, 3.0, 10.0, 12.0, 39.0] {
            let det = synthesize_observation([0.5, 0.2, z], &c, &noise, 1, 0.7, &mut rng).unwrap();
            let back = disparity_to_depth(det.disparity, &c).unwrap();
            assert!((back - z).abs() < 1e-12, "z={z} back={back}");
        }
    }

    #[test]
    fn out_of_range_targets_are_rejected() {
        let c = cam();
        let noise = StereoNoise::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            synthesize_observation([0.0, 0.0, 0.1], &c, &noise, 1, 0.7, &mut rng),
            Err(NoDetection::OutOfRange)
        );
        assert_eq!(
            synthesize_observation([0.0, 0.0, 100.0], &c, &noise, 1, 0.7, &mut rng),
            Err(NoDetection::OutOfRange)
        );
        // Far to the side: projects outside the 672 px sensor.
        assert_eq!(
            synthesize_observation([10.0, 0.0, 5.0], &c, &noise, 1, 0.7, &mut rng),
            Err(NoDetection::OutOfView)
        );
    }

    /// Relative depth error from quantization alone is bounded by
    /// Z·(q/2)/(f·B): below 1% at 3 m and exactly 4× larger at 12 m.
    #[test]
    fn quantization_error_bound_matches_range_findings() {
        let c = cam();
        let q: f64 = 0.25;
        let bound_3 = 3.0 * (q / 2.0) / c.depth_constant();
        let bound_12 = 12.0 * (q / 2.0) / c.depth_constant();
        assert!(bound_3 < 0.01, "bound at 3 m = {bound_3}");
        assert!((bound_12 / bound_3 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn radial_speed_matches_hand_values() {
        // Dead ahead, approaching at 1 m/s.
        assert!((radial_speed_from(0.0, 10.0, 0.0, -1.0) - 1.0).abs() < 1e-12);
        // Stationary target.
        assert_eq!(radial_speed_from(3.0, 4.0, 0.0, 0.0), 0.0);
        // Collinear receding at 5 m/s.
        assert!((radial_speed_from(3.0, 4.0, 3.0, 4.0) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn radial_speed_needs_two_points() {
        let mut track = TrackState::new(1);
        track.update_point([0.0, 0.0, 10.0], 0.0).unwrap();
        assert_eq!(
            track.radial_speed(),
            Err(PerceptionError::InsufficientHistory(1))
        );
        track.update_point([0.0, 0.0, 9.9], 0.1).unwrap();
        assert!((track.radial_speed().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ema_tracker_anchor_velocity() {
        let mut track = TrackState::new(1);
        track.update_depth(10.0, 0.0).unwrap();
        assert_eq!(track.ema_velocity, 0.0);
        track.update_depth(9.9, 0.1).unwrap();
        track.update_depth(9.8, 0.2).unwrap();
        // Anchor velocity (9.8 − 10.0)/0.2 = −1.0; window mean 9.9.
        assert!((track.smoothed_depth - 9.9).abs() < 1e-12);
        // Both the second and third updates see an anchor velocity of −1.0.
        let expected = 0.3 * -1.0 + 0.7 * (0.3 * -1.0);
        assert!((track.ema_velocity - expected).abs() < 1e-12);
    }

    #[test]
    fn ema_update_from_zero_state() {
        let mut track = TrackState::new(1);
        track.update_depth(10.0, 0.0).unwrap();
        track.update_depth(9.8, 0.2).unwrap(); // raw = −1.0 on ema = 0
        assert!((track.ema_velocity + 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_depth_stream_has_zero_velocity() {
        let mut track = TrackState::new(1);
        for i in 0..20 {
            track.update_depth(8.0, i as f64 * 0.1).unwrap();
        }
        assert_eq!(track.ema_velocity, 0.0);
        assert_eq!(track.smoothed_depth, 8.0);
    }

    #[test]
    fn non_monotonic_time_is_rejected() {
        let mut track = TrackState::new(1);
        track.update_depth(10.0, 1.0).unwrap();
        assert!(matches!(
            track.update_depth(9.9, 1.0),
            Err(PerceptionError::OrderingError { .. })
        ));
    }

    #[test]
    fn window_capacity_is_bounded() {
        let mut track = TrackState::new(1);
        for i in 0..50 {
            track.update_depth(10.0 - i as f64 * 0.01, i as f64 * 0.1).unwrap();
        }
        assert_eq!(track.len(), 5);
    }

    #[test]
    fn ttc_thw_hand_values() {
        let f = safety_features(10.0, 2.5, 1.5);
        assert!((f.ttc - 10.0).abs() < 1e-12);
        assert!((f.thw - 4.0).abs() < 1e-12);
    }

    #[test]
    fn equal_speeds_give_infinite_ttc() {
        let f = safety_features(10.0, 2.0, 2.0);
        assert_eq!(f.ttc, f64::INFINITY);
    }

    #[test]
    fn receding_target_gives_infinite_ttc() {
        let f = safety_features(10.0, 1.0, 2.0);
        assert_eq!(f.ttc, f64::INFINITY);
    }

    #[test]
    fn contact_gives_zero_times() {
        let f = safety_features(0.0, 2.5, 1.5);
        assert_eq!(f.ttc, 0.0);
        assert_eq!(f.thw, 0.0);
    }

    #[test]
    fn ttc_decreases_with_closing_speed() {
        let mut prev = f64::INFINITY;
        for i in 1..=20 {
            let v_rel = i as f64 * 0.25;
            let f = safety_features(10.0, 1.5 + v_rel, 1.5);
            assert!(f.ttc <= prev);
            prev = f.ttc;
        }
    }

    #[test]
    fn throttle_sensor_error_is_bounded() {
        let mut sensor = SpeedSensor::new(SpeedSensorKind::Throttle);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..5000 {
            let truth = 2.5;
            let s = sensor.sample(truth, i as f64 * 0.1, &mut rng).unwrap();
            assert!((s - truth).abs() <= 0.8334, "sample {s}");
        }
    }

    #[test]
    fn gps_sensor_is_1hz_with_lag() {
        let mut sensor = SpeedSensor::new(SpeedSensorKind::Gps);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Off-grid query returns nothing.
        assert_eq!(sensor.sample(2.0, 0.5, &mut rng), None);
        // First grid point primes the lag buffer.
        assert_eq!(sensor.sample(2.0, 1.0, &mut rng), None);
        assert_eq!(sensor.sample(2.5, 1.5, &mut rng), None);
        // Next grid point reports the previous capture.
        assert_eq!(sensor.sample(3.0, 2.0, &mut rng), Some(2.0));
        assert_eq!(sensor.sample(3.5, 3.0, &mut rng), Some(3.0));
    }

    #[test]
    fn cadence_matches_rig_frame_rates() {
        let c = cam();
        let stages = StageLatencies::default();
        let profile = DetectorProfile::yolov8n();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p1 = pipeline_cadence(&profile, PipelineVariant::P1, &stages, &c, 2000, &mut rng);
        let p2 = pipeline_cadence(&profile, PipelineVariant::P2, &stages, &c, 2000, &mut rng);
        assert!((p1.mean_fps() - 3.75).abs() / 3.75 < 0.10, "P1 {}", p1.mean_fps());
        assert!((p2.mean_fps() - 5.3).abs() / 5.3 < 0.10, "P2 {}", p2.mean_fps());
        assert!(p2.mean_fps() > p1.mean_fps());
    }

    #[test]
    fn zero_latency_profile_is_camera_bound() {
        let c = cam();
        let stages = StageLatencies {
            p1_extra_mean_ms: 0.0,
            p1_extra_std_ms: 0.0,
            p2_extra_mean_ms: 0.0,
            p2_extra_std_ms: 0.0,
        };
        let profile = DetectorProfile {
            name: "instant".into(),
            latency_mean_ms: 0.0,
            latency_std_ms: 0.0,
            confidence_mean: 1.0,
            confidence_std: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = pipeline_cadence(&profile, PipelineVariant::P2, &stages, &c, 100, &mut rng);
        assert!((s.mean_fps() - 10.0).abs() < 1e-9);
    }
}
