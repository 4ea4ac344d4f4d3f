//! Scenario configuration: one JSON document drives the whole testbed.
//! Every field has a default, so `{}` is the canonical scenario.

use crate::comm::Topology;
use crate::control::{ActuatorPlant, EncoderModel, HeadingController, PidGains, PlannerConfig};
use crate::perception::{CameraModel, DetectorProfile, PipelineVariant, StageLatencies, StereoNoise};
use crate::scene::LaneGeometry;
use crate::semantics::Thresholds;
use serde::{Deserialize, Serialize};
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

/// Initial longitudinal placement of one vehicle (body center, meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x: f64,
    pub lane: u32,
}

/// Scripted driver parameters for the TV and PV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriverConfig {
    /// Proportional gain of the cruise speed hold (1/s).
    pub cruise_gain: f64,
    /// Acceleration bound during cruise (m/s²).
    pub cruise_accel_limit: f64,
    /// Zero-mean accel noise std during cruise, the stand-in for human
    /// variability (m/s²).
    pub accel_noise_std: f64,
    /// Duration of the TV's lateral lane-change ramp (s).
    pub lane_change_duration_s: f64,
    /// Gap the TV demands (projected at mid-maneuver) before committing to
    /// the lane change (m).
    pub gap_accept_m: f64,
    /// TV emergency deceleration when the gap is rejected (m/s²).
    pub tv_emergency_decel: f64,
    /// Gentle cushion braking while the lane change is still laterally
    /// exposed (m/s²).
    pub tv_comfort_decel: f64,
    /// Perceived-TTC threshold that arms the cushion (s).
    pub tv_comfort_ttc_s: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            cruise_gain: 1.0,
            cruise_accel_limit: 1.0,
            accel_noise_std: 0.05,
            lane_change_duration_s: 3.6,
            gap_accept_m: 5.0,
            tv_emergency_decel: -4.0,
            tv_comfort_decel: -1.2,
            tv_comfort_ttc_s: 1.0,
        }
    }
}

/// Endpoints for the networked mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommConfig {
    pub relay_addr: String,
    pub server_addr: String,
    /// EV-side staleness window: a link quiet for longer than this yields
    /// "no new prediction" and the controller holds its last safe state (ms).
    pub staleness_ms: u64,
    /// FEATURES schema version the client emits.
    pub features_schema_version: u32,
}

impl Default for CommConfig {
    fn default() -> Self {
        CommConfig {
            relay_addr: "127.0.0.1:7701".into(),
            server_addr: "127.0.0.1:7702".into(),
            staleness_ms: 500,
            features_schema_version: 1,
        }
    }
}

/// The full scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub lanes: LaneGeometry,
    pub tv_start: Placement,
    pub pv_start: Placement,
    pub ev_start: Placement,
    /// EV cruise speed (m/s).
    pub ev_cruise_speed: f64,
    /// TV/PV cruise speed (m/s).
    pub tv_pv_cruise_speed: f64,
    /// Time the PV starts braking (s).
    pub pv_brake_time: f64,
    /// PV braking deceleration (m/s²).
    pub pv_brake_decel: f64,
    pub prediction_enabled: bool,
    pub pipeline_variant: PipelineVariant,
    pub topology: Topology,
    pub rng_seed: u64,
    /// Fixed step (s).
    pub timestep: f64,
    /// Run length (s).
    pub duration_s: f64,
    pub camera: CameraModel,
    pub stereo_noise: StereoNoise,
    pub detector: DetectorProfile,
    pub stage_latencies: StageLatencies,
    /// None means "calibrate from the shipped fixture corpus".
    pub thresholds: Option<Thresholds>,
    pub planner: PlannerConfig,
    pub pid: PidGains,
    pub plant: ActuatorPlant,
    pub encoder: EncoderModel,
    pub heading: HeadingController,
    pub driver: DriverConfig,
    pub comm: CommConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            lanes: LaneGeometry::default(),
            tv_start: Placement { x: -8.0, lane: 0 },
            // 12 m bumper gap ahead of the TV.
            pv_start: Placement { x: 7.75, lane: 0 },
            // 12 m center-to-center ahead of the TV, left lane.
            ev_start: Placement { x: 4.0, lane: 1 },
            ev_cruise_speed: 1.5,
            tv_pv_cruise_speed: 2.5,
            pv_brake_time: 12.0,
            pv_brake_decel: -3.0,
            prediction_enabled: true,
            pipeline_variant: PipelineVariant::P2,
            topology: Topology::Relay,
            rng_seed: 1,
            timestep: 0.1,
            duration_s: 24.0,
            camera: CameraModel::default(),
            stereo_noise: StereoNoise::default(),
            detector: DetectorProfile::yolov8n(),
            stage_latencies: StageLatencies::default(),
            thresholds: None,
            planner: PlannerConfig::default(),
            pid: PidGains::default(),
            plant: ActuatorPlant::default(),
            encoder: EncoderModel::default(),
            heading: HeadingController::default(),
            driver: DriverConfig::default(),
            comm: CommConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self, ConfigError> {
        let config: ScenarioConfig =
            serde_json::from_reader(reader).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let file = std::fs::File::open(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::from_json_reader(std::io::BufReader::new(file))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timestep <= 0.0 {
            return Err(ConfigError::Invalid("timestep must be positive".into()));
        }
        if self.ev_cruise_speed < 0.0 || self.tv_pv_cruise_speed < 0.0 {
            return Err(ConfigError::Invalid("cruise speeds must be nonnegative".into()));
        }
        if self.duration_s <= 0.0 {
            return Err(ConfigError::Invalid("duration must be positive".into()));
        }
        if self.lanes.lane_count < 2 {
            return Err(ConfigError::Invalid("the scenario needs at least two lanes".into()));
        }
        for (name, p) in [
            ("tv", self.tv_start),
            ("pv", self.pv_start),
            ("ev", self.ev_start),
        ] {
            if p.lane >= self.lanes.lane_count {
                return Err(ConfigError::Invalid(format!(
                    "{name} starts in lane {} of a {}-lane road",
                    p.lane, self.lanes.lane_count
                )));
            }
        }
        if let Some(t) = &self.thresholds {
            t.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Digest of everything except the prediction switch, for pairing
    /// with/without-prediction runs.
    pub fn contrast_digest(&self) -> String {
        let mut probe = self.clone();
        probe.prediction_enabled = true;
        let json = serde_json::to_string(&probe).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}
