//! Minimal SVG renderer for the acceleration/velocity profiles: no plotting
//! dependency, just polylines, a gray crossing marker at t = 0, and a black
//! dashed prediction marker.

use super::compare::CompareReport;
use super::log::RunLog;
use super::RunMetrics;
use std::fmt::Write;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 280.0;
const MARGIN: f64 = 55.0;

struct Panel {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    top: f64,
}

impl Panel {
    fn fit(series: &[(&[(f64, f64)], bool)], top: f64) -> Panel {
        let mut x0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for (points, _) in series {
            for &(x, y) in *points {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if (y1 - y0).abs() < 1e-9 {
            y1 = y0 + 1.0;
        }
        Panel { x0, x1, y0, y1, top }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.top + PANEL_HEIGHT - MARGIN
            - (y - self.y0) / (self.y1 - self.y0) * (PANEL_HEIGHT - 1.5 * MARGIN)
    }

    fn polyline(&self, out: &mut String, points: &[(f64, f64)], color: &str, dashed: bool) {
        if points.is_empty() {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let dash = if dashed {
            " stroke-dasharray=\"6,4\""
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
            coords.join(" ")
        );
    }

    fn vline(&self, out: &mut String, x: f64, color: &str, class: &str) {
        if x < self.x0 || x > self.x1 {
            return;
        }
        let _ = writeln!(
            out,
            "<line class=\"{class}\" x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" \
             stroke=\"{color}\" stroke-width=\"1\" stroke-dasharray=\"4,4\"/>",
            self.px(x),
            self.top + 20.0,
            self.top + PANEL_HEIGHT - MARGIN
        );
    }

    fn frame(&self, out: &mut String, title: &str, y_label: &str) {
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#888\"/>",
            MARGIN,
            self.top + 20.0,
            WIDTH - 2.0 * MARGIN,
            PANEL_HEIGHT - MARGIN - 20.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\">{title}</text>",
            MARGIN,
            self.top + 14.0
        );
        let _ = writeln!(
            out,
            "<text x=\"12\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" \
             transform=\"rotate(-90 12 {:.1})\">{y_label}</text>",
            self.top + PANEL_HEIGHT / 2.0,
            self.top + PANEL_HEIGHT / 2.0
        );
    }
}

fn role_color(role: &str) -> &'static str {
    match role {
        "EV" => "#cc2222",
        "TV" => "#2244cc",
        _ => "#22883a",
    }
}

fn document(body: &str, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Acceleration and velocity of one run versus time re-referenced to the
/// crossing moment.
pub fn render_run_svg(log: &RunLog, metrics: &RunMetrics) -> String {
    let mut body = String::new();
    let t0 = metrics.t_zero;
    let shift = |series: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        series.into_iter().map(|(t, v)| (t - t0, v)).collect()
    };
    let roles = ["EV", "TV", "PV"];
    for (i, (field, title, label)) in [
        (
            (|r: &super::StateRow| r.accel) as fn(&super::StateRow) -> f64,
            "acceleration vs t (t=0 at crossing)",
            "m/s^2",
        ),
        (
            (|r: &super::StateRow| r.speed) as fn(&super::StateRow) -> f64,
            "velocity vs t (t=0 at crossing)",
            "m/s",
        ),
    ]
    .into_iter()
    .enumerate()
    {
        let series: Vec<(String, Vec<(f64, f64)>)> = roles
            .iter()
            .map(|role| (role.to_string(), shift(log.series(role, field))))
            .collect();
        let refs: Vec<(&[(f64, f64)], bool)> =
            series.iter().map(|(_, s)| (s.as_slice(), false)).collect();
        let panel = Panel::fit(&refs, i as f64 * PANEL_HEIGHT);
        panel.frame(&mut body, title, label);
        for (role, points) in &series {
            panel.polyline(&mut body, points, role_color(role), false);
        }
        panel.vline(&mut body, 0.0, "#777777", "crossing-marker");
        if let Some(p) = metrics.prediction_t {
            panel.vline(&mut body, p - t0, "#000000", "prediction-marker");
        }
    }
    document(&body, 2.0 * PANEL_HEIGHT)
}

/// The two-run contrast: solid = prediction on, dashed = prediction off.
pub fn render_compare_svg(report: &CompareReport) -> String {
    let mut body = String::new();
    for (i, (pairs, title, label)) in [
        (&report.accel, "acceleration, with (solid) vs without (dashed) prediction", "m/s^2"),
        (&report.velocity, "velocity, with (solid) vs without (dashed) prediction", "m/s"),
    ]
    .into_iter()
    .enumerate()
    {
        let mut refs: Vec<(&[(f64, f64)], bool)> = Vec::new();
        for pair in pairs.iter() {
            refs.push((pair.on.as_slice(), false));
            refs.push((pair.off.as_slice(), true));
        }
        let panel = Panel::fit(&refs, i as f64 * PANEL_HEIGHT);
        panel.frame(&mut body, title, label);
        for pair in pairs.iter() {
            panel.polyline(&mut body, &pair.on, role_color(&pair.role), false);
            panel.polyline(&mut body, &pair.off, role_color(&pair.role), true);
        }
        panel.vline(&mut body, 0.0, "#777777", "crossing-marker");
        if let Some(p) = report.prediction_marker {
            panel.vline(&mut body, p, "#000000", "prediction-marker");
        }
    }
    document(&body, 2.0 * PANEL_HEIGHT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::sim::{compare_runs, run_scenario};

    #[test]
    fn run_svg_contains_the_crossing_marker() {
        let (log, metrics) = run_scenario(&ScenarioConfig::default()).unwrap();
        let svg = render_run_svg(&log, &metrics);
        assert!(svg.contains("crossing-marker"));
        assert!(svg.contains("prediction-marker"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn compare_svg_has_solid_and_dashed_series() {
        let mut config = ScenarioConfig::default();
        let (log_on, m_on) = run_scenario(&config).unwrap();
        config.prediction_enabled = false;
        let (log_off, m_off) = run_scenario(&config).unwrap();
        let report = compare_runs(&log_on, &m_on, &log_off, &m_off).unwrap();
        let svg = render_compare_svg(&report);
        assert!(svg.contains("stroke-dasharray=\"6,4\""));
        assert!(svg.contains("crossing-marker"));
    }
}
