//! With/without-prediction comparison: paired acceleration and velocity
//! series re-referenced to each run's crossing moment, plus a metric delta
//! table.

use super::log::RunLog;
use super::{RunMetrics, SimError};

/// ON and OFF series of one quantity for one vehicle, re-referenced so
/// t = 0 is each run's crossing (or harsh-brake) moment.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPair {
    pub role: String,
    pub on: Vec<(f64, f64)>,
    pub off: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricDelta {
    pub name: String,
    pub on: f64,
    pub off: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub accel: Vec<SeriesPair>,
    pub velocity: Vec<SeriesPair>,
    pub metrics_on: RunMetrics,
    pub metrics_off: RunMetrics,
    pub deltas: Vec<MetricDelta>,
    /// Prediction moment of the ON run, re-referenced to its t_zero.
    pub prediction_marker: Option<f64>,
}

const ROLES: [&str; 3] = ["EV", "TV", "PV"];

fn shifted(log: &RunLog, t_zero: f64, field: fn(&super::StateRow) -> f64, role: &str) -> Vec<(f64, f64)> {
    log.states
        .iter()
        .filter(|r| r.role == role)
        .map(|r| (r.t - t_zero, field(r)))
        .collect()
}

/// Builds the side-by-side report. Both logs must come from the same base
/// configuration (everything but the prediction switch).
pub fn compare_runs(
    log_on: &RunLog,
    metrics_on: &RunMetrics,
    log_off: &RunLog,
    metrics_off: &RunMetrics,
) -> Result<CompareReport, SimError> {
    if log_on.meta.config_digest != log_off.meta.config_digest {
        return Err(SimError::Mismatch(format!(
            "digest {} vs {}",
            log_on.meta.config_digest, log_off.meta.config_digest
        )));
    }
    let accel = ROLES
        .iter()
        .map(|role| SeriesPair {
            role: role.to_string(),
            on: shifted(log_on, metrics_on.t_zero, |r| r.accel, role),
            off: shifted(log_off, metrics_off.t_zero, |r| r.accel, role),
        })
        .collect();
    let velocity = ROLES
        .iter()
        .map(|role| SeriesPair {
            role: role.to_string(),
            on: shifted(log_on, metrics_on.t_zero, |r| r.speed, role),
            off: shifted(log_off, metrics_off.t_zero, |r| r.speed, role),
        })
        .collect();

    let finite = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let deltas = vec![
        MetricDelta {
            name: "tv_min_accel".into(),
            on: metrics_on.tv_min_accel,
            off: metrics_off.tv_min_accel,
            delta: metrics_on.tv_min_accel - metrics_off.tv_min_accel,
        },
        MetricDelta {
            name: "min_ttc".into(),
            on: metrics_on.min_ttc,
            off: metrics_off.min_ttc,
            delta: metrics_on.min_ttc - metrics_off.min_ttc,
        },
        MetricDelta {
            name: "ev_stop_time".into(),
            on: finite(metrics_on.ev_stop_time),
            off: finite(metrics_off.ev_stop_time),
            delta: finite(metrics_on.ev_stop_time) - finite(metrics_off.ev_stop_time),
        },
    ];
    let prediction_marker = metrics_on.prediction_t.map(|p| p - metrics_on.t_zero);
    Ok(CompareReport {
        accel,
        velocity,
        metrics_on: metrics_on.clone(),
        metrics_off: metrics_off.clone(),
        deltas,
        prediction_marker,
    })
}

impl CompareReport {
    /// Human-readable delta table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("metric            on        off       delta\n");
        for d in &self.deltas {
            out.push_str(&format!(
                "{:<16} {:>9.3} {:>9.3} {:>9.3}\n",
                d.name, d.on, d.off, d.delta
            ));
        }
        if let Some(h) = self.metrics_on.anticipation_horizon {
            out.push_str(&format!("anticipation_horizon (on): {h:.2} s\n"));
        }
        out.push_str(&format!(
            "collision: on={} off={}\n",
            self.metrics_on.collision, self.metrics_off.collision
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::sim::run_scenario;

    #[test]
    fn self_comparison_has_zero_deltas() {
        let (log, metrics) = run_scenario(&ScenarioConfig::default()).unwrap();
        let report = compare_runs(&log, &metrics, &log, &metrics).unwrap();
        for d in &report.deltas {
            assert!(d.delta == 0.0 || d.delta.is_nan());
        }
    }

    #[test]
    fn each_vehicle_has_exactly_one_on_and_one_off_series() {
        let mut config = ScenarioConfig::default();
        let (log_on, m_on) = run_scenario(&config).unwrap();
        config.prediction_enabled = false;
        let (log_off, m_off) = run_scenario(&config).unwrap();
        let report = compare_runs(&log_on, &m_on, &log_off, &m_off).unwrap();
        assert_eq!(report.accel.len(), 3);
        assert_eq!(report.velocity.len(), 3);
        for pair in report.accel.iter().chain(&report.velocity) {
            assert!(!pair.on.is_empty());
            assert!(!pair.off.is_empty());
        }
    }

    #[test]
    fn mismatched_configs_are_rejected() {
        let (log_a, m_a) = run_scenario(&ScenarioConfig::default()).unwrap();
        let mut other = ScenarioConfig::default();
        other.rng_seed += 13;
        let (log_b, m_b) = run_scenario(&other).unwrap();
        assert!(matches!(
            compare_runs(&log_a, &m_a, &log_b, &m_b),
            Err(SimError::Mismatch(_))
        ));
    }
}
