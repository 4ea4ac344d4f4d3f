//! Run log: the per-tick record of everything the pipeline did, with CSV
//! export/import that round-trips bit-exactly.

use super::SimError;
use serde::{Deserialize, Serialize};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// Digest of the scenario config with the prediction switch masked out.
    pub config_digest: String,
    pub prediction_enabled: bool,
    pub rng_seed: u64,
    pub timestep: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateRow {
    pub t: f64,
    pub role: String,
    pub x: f64,
    pub y: f64,
    pub lane: u32,
    pub speed: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionRow {
    pub t: f64,
    pub gap: f64,
    pub ttc: f64,
    pub thw: f64,
    pub v_rel: f64,
    pub frame_key: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub t: f64,
    pub p_lane_keep: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub argmax: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlRow {
    pub t: f64,
    pub state: String,
    pub duty: f64,
    pub mapped: u8,
    pub v_desired: f64,
    pub v_actual: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommRow {
    pub t: f64,
    pub seq: u64,
    pub event: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub states: Vec<StateRow>,
    pub perception: Vec<PerceptionRow>,
    pub predictions: Vec<PredictionRow>,
    pub control: Vec<ControlRow>,
    pub comm: Vec<CommRow>,
}

fn fmt<T: Display>(v: T) -> String {
    format!("{v}")
}

fn parse<T: FromStr>(s: &str, what: &str) -> Result<T, SimError>
where
    T::Err: Display,
{
    s.parse::<T>()
        .map_err(|e| SimError::Log(format!("bad {what} `{s}`: {e}")))
}

impl RunLog {
    /// Writes `{base}_states.csv`, `_perception.csv`, `_predictions.csv`,
    /// `_control.csv`, `_comm.csv` and `{base}_meta.json`.
    pub fn export_csv(&self, base: &Path) -> Result<(), SimError> {
        let base_str = base.to_string_lossy().to_string();
        let io = |e: csv::Error| SimError::Log(e.to_string());

        let mut w = csv::Writer::from_path(format!("{base_str}_states.csv"))
            .map_err(|e| SimError::Log(e.to_string()))?;
        w.write_record(["t", "role", "x", "y", "lane", "speed", "accel"]).map_err(io)?;
        for r in &self.states {
            w.write_record([
                fmt(r.t),
                r.role.clone(),
                fmt(r.x),
                fmt(r.y),
                fmt(r.lane),
                fmt(r.speed),
                fmt(r.accel),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Log(e.to_string()))?;

        let mut w = csv::Writer::from_path(format!("{base_str}_perception.csv"))
            .map_err(|e| SimError::Log(e.to_string()))?;
        w.write_record(["t", "gap", "ttc", "thw", "v_rel", "frame_key"]).map_err(io)?;
        for r in &self.perception {
            w.write_record([
                fmt(r.t),
                fmt(r.gap),
                fmt(r.ttc),
                fmt(r.thw),
                fmt(r.v_rel),
                r.frame_key.clone(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Log(e.to_string()))?;

        let mut w = csv::Writer::from_path(format!("{base_str}_predictions.csv"))
            .map_err(|e| SimError::Log(e.to_string()))?;
        w.write_record(["t", "p_lane_keep", "p_left", "p_right", "argmax", "latency_ms"])
            .map_err(io)?;
        for r in &self.predictions {
            w.write_record([
                fmt(r.t),
                fmt(r.p_lane_keep),
                fmt(r.p_left),
                fmt(r.p_right),
                r.argmax.clone(),
                fmt(r.latency_ms),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Log(e.to_string()))?;

        let mut w = csv::Writer::from_path(format!("{base_str}_control.csv"))
            .map_err(|e| SimError::Log(e.to_string()))?;
        w.write_record(["t", "state", "duty", "mapped", "v_desired", "v_actual", "error"])
            .map_err(io)?;
        for r in &self.control {
            w.write_record([
                fmt(r.t),
                r.state.clone(),
                fmt(r.duty),
                fmt(r.mapped),
                fmt(r.v_desired),
                fmt(r.v_actual),
                fmt(r.error),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Log(e.to_string()))?;

        let mut w = csv::Writer::from_path(format!("{base_str}_comm.csv"))
            .map_err(|e| SimError::Log(e.to_string()))?;
        w.write_record(["t", "seq", "event", "latency_ms"]).map_err(io)?;
        for r in &self.comm {
            w.write_record([fmt(r.t), fmt(r.seq), r.event.clone(), fmt(r.latency_ms)])
                .map_err(io)?;
        }
        w.flush().map_err(|e| SimError::Log(e.to_string()))?;

        let meta = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| SimError::Log(e.to_string()))?;
        fs::write(format!("{base_str}_meta.json"), meta).map_err(|e| SimError::Log(e.to_string()))?;
        Ok(())
    }

    pub fn import_csv(base: &Path) -> Result<RunLog, SimError> {
        let base_str = base.to_string_lossy().to_string();
        let read = |suffix: &str| -> Result<csv::Reader<fs::File>, SimError> {
            csv::Reader::from_path(format!("{base_str}{suffix}"))
                .map_err(|e| SimError::Log(e.to_string()))
        };

        let meta: RunMeta = serde_json::from_str(
            &fs::read_to_string(format!("{base_str}_meta.json"))
                .map_err(|e| SimError::Log(e.to_string()))?,
        )
        .map_err(|e| SimError::Log(e.to_string()))?;

        let mut states = Vec::new();
        for rec in read("_states.csv")?.records() {
            let rec = rec.map_err(|e| SimError::Log(e.to_string()))?;
            states.push(StateRow {
                t: parse(&rec[0], "t")?,
                role: rec[1].to_string(),
                x: parse(&rec[2], "x")?,
                y: parse(&rec[3], "y")?,
                lane: parse(&rec[4], "lane")?,
                speed: parse(&rec[5], "speed")?,
                accel: parse(&rec[6], "accel")?,
            });
        }

        let mut perception = Vec::new();
        for rec in read("_perception.csv")?.records() {
            let rec = rec.map_err(|e| SimError::Log(e.to_string()))?;
            perception.push(PerceptionRow {
                t: parse(&rec[0], "t")?,
                gap: parse(&rec[1], "gap")?,
                ttc: parse(&rec[2], "ttc")?,
                thw: parse(&rec[3], "thw")?,
                v_rel: parse(&rec[4], "v_rel")?,
                frame_key: rec[5].to_string(),
            });
        }

        let mut predictions = Vec::new();
        for rec in read("_predictions.csv")?.records() {
            let rec = rec.map_err(|e| SimError::Log(e.to_string()))?;
            predictions.push(PredictionRow {
                t: parse(&rec[0], "t")?,
                p_lane_keep: parse(&rec[1], "p_lane_keep")?,
                p_left: parse(&rec[2], "p_left")?,
                p_right: parse(&rec[3], "p_right")?,
                argmax: rec[4].to_string(),
                latency_ms: parse(&rec[5], "latency_ms")?,
            });
        }

        let mut control = Vec::new();
        for rec in read("_control.csv")?.records() {
            let rec = rec.map_err(|e| SimError::Log(e.to_string()))?;
            control.push(ControlRow {
                t: parse(&rec[0], "t")?,
                state: rec[1].to_string(),
                duty: parse(&rec[2], "duty")?,
                mapped: parse(&rec[3], "mapped")?,
                v_desired: parse(&rec[4], "v_desired")?,
                v_actual: parse(&rec[5], "v_actual")?,
                error: parse(&rec[6], "error")?,
            });
        }

        let mut comm = Vec::new();
        for rec in read("_comm.csv")?.records() {
            let rec = rec.map_err(|e| SimError::Log(e.to_string()))?;
            comm.push(CommRow {
                t: parse(&rec[0], "t")?,
                seq: parse(&rec[1], "seq")?,
                event: rec[2].to_string(),
                latency_ms: parse(&rec[3], "latency_ms")?,
            });
        }

        Ok(RunLog {
            meta,
            states,
            perception,
            predictions,
            control,
            comm,
        })
    }

    /// Time series (t, value) for one vehicle.
    pub fn series(&self, role: &str, field: fn(&StateRow) -> f64) -> Vec<(f64, f64)> {
        self.states
            .iter()
            .filter(|r| r.role == role)
            .map(|r| (r.t, field(r)))
            .collect()
    }
}
