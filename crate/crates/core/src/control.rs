//! EV planning and actuation: the maneuver-triggered longitudinal state
//! machine, PWM duty increments, PID speed tracking with the [0-255]
//! mapping, heading hold, and a first-order actuator plant that closes the
//! loop in simulation.

use crate::semantics::Maneuver;
use serde::{Deserialize, Serialize};

/// Longitudinal planner output; exactly one state is active per 100 ms tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LongitudinalState {
    Accelerate,
    Decelerate,
    Stop,
}

impl LongitudinalState {
    pub fn label(self) -> &'static str {
        match self {
            LongitudinalState::Accelerate => "accelerate",
            LongitudinalState::Decelerate => "decelerate",
            LongitudinalState::Stop => "stop",
        }
    }
}

/// PWM duty (percent) with its [0, 255] register mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwmCommand {
    pub duty: f64,
    pub mapped: u8,
}

impl PwmCommand {
    pub fn from_duty(duty: f64) -> Self {
        let duty = duty.clamp(0.0, 100.0);
        PwmCommand {
            duty,
            mapped: (duty / 100.0 * 255.0).round() as u8,
        }
    }

    pub fn zero() -> Self {
        PwmCommand::from_duty(0.0)
    }
}

/// Duty increments applied per control tick: +4% on accelerate, −8% on
/// decelerate, straight to 0% on stop.
pub fn apply_state(state: LongitudinalState, pwm: PwmCommand) -> PwmCommand {
    match state {
        LongitudinalState::Accelerate => PwmCommand::from_duty(pwm.duty + 4.0),
        LongitudinalState::Decelerate => PwmCommand::from_duty(pwm.duty - 8.0),
        LongitudinalState::Stop => PwmCommand::zero(),
    }
}

/// What the planner sees each tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvContext {
    /// TTC against whatever is ahead in the EV's own lane (s).
    pub frontal_ttc: f64,
    /// TV currently inside the interaction window: adjacent lane, within
    /// the configured longitudinal band around the EV.
    pub tv_in_window: bool,
    /// The maneuver that would bring the TV into the EV's lane.
    pub incoming_maneuver: Maneuver,
}

/// Planner thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Emergency-stop TTC (s).
    pub emergency_ttc_s: f64,
    /// Interaction window behind the EV (m).
    pub window_behind_m: f64,
    /// Interaction window ahead of the EV (m).
    pub window_ahead_m: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            emergency_ttc_s: 0.5,
            window_behind_m: 8.0,
            window_ahead_m: 2.0,
        }
    }
}

/// Maps the latest prediction to a longitudinal state: yield when the
/// predicted maneuver would bring the TV into the EV's lane while the TV is
/// in the interaction window, stop on an emergency frontal TTC, otherwise
/// cruise.
pub fn plan_state(
    prediction: Option<&crate::inference::ManeuverPosterior>,
    ctx: &EvContext,
    cfg: &PlannerConfig,
) -> LongitudinalState {
    if ctx.frontal_ttc < cfg.emergency_ttc_s {
        return LongitudinalState::Stop;
    }
    if let Some(p) = prediction {
        if p.argmax == ctx.incoming_maneuver && ctx.tv_in_window {
            return LongitudinalState::Decelerate;
        }
    }
    LongitudinalState::Accelerate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    /// Sampling time (s).
    pub t_s: f64,
    /// Anti-windup clamp on the integral accumulator.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            k_p: 2.0,
            k_i: 0.8,
            k_d: 0.05,
            t_s: 0.1,
            integral_limit: 1.5 / 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
}

/// One PID iteration with trapezoidal integration:
/// x(k) = k_p·e(k) + k_i·Σ (e(k)+e(k−1))/2·T_s + k_d·(e(k)−e(k−1))/T_s.
/// The integral accumulator only moves when k_i is active, and is clamped
/// so saturation cannot wind it up.
pub fn pid_step(gains: &PidGains, state: &PidState, v_desired: f64, v_actual: f64) -> (f64, PidState) {
    debug_assert!(gains.t_s > 0.0);
    let error = v_desired - v_actual;
    let mut integral = state.integral;
    if gains.k_i != 0.0 {
        integral += 0.5 * (error + state.prev_error) * gains.t_s;
        integral = integral.clamp(-gains.integral_limit, gains.integral_limit);
    }
    let derivative = (error - state.prev_error) / gains.t_s;
    let output = gains.k_p * error + gains.k_i * integral + gains.k_d * derivative;
    (
        output,
        PidState {
            integral,
            prev_error: error,
        },
    )
}

/// Top speed of the scaled vehicle (m/s); full PWM scale maps to it.
pub const EV_MAX_SPEED: f64 = 1.5;

/// Linear map from the PID output (a speed command) onto the [0, 255] PWM
/// register, saturating at the ends.
pub fn map_to_pwm(x: f64) -> PwmCommand {
    let mapped = (x * 255.0 / EV_MAX_SPEED).round().clamp(0.0, 255.0) as u8;
    PwmCommand {
        duty: mapped as f64 / 255.0 * 100.0,
        mapped,
    }
}

/// Heading-hold controller: a fixed counter-increment is issued only when
/// yaw leaves the ±margin band around the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadingController {
    pub reference_deg: f64,
    pub margin_deg: f64,
    pub increment_deg: f64,
}

impl Default for HeadingController {
    fn default() -> Self {
        HeadingController {
            reference_deg: 0.0,
            margin_deg: 2.0,
            increment_deg: 1.0,
        }
    }
}

/// Steering correction, if any: negative increments steer right (toward a
/// smaller yaw), positive steer left.
pub fn lateral_correct(yaw_deg: f64, ctl: &HeadingController) -> Option<f64> {
    let dev = yaw_deg - ctl.reference_deg;
    if dev.abs() <= ctl.margin_deg {
        None
    } else if dev > 0.0 {
        Some(-ctl.increment_deg)
    } else {
        Some(ctl.increment_deg)
    }
}

/// First-order actuator plant standing in for the drivetrain: speed relaxes
/// toward v_max·duty/100 with time constant `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorPlant {
    pub v_max: f64,
    pub tau_s: f64,
}

impl Default for ActuatorPlant {
    fn default() -> Self {
        ActuatorPlant {
            v_max: EV_MAX_SPEED,
            tau_s: 0.5,
        }
    }
}

impl ActuatorPlant {
    pub fn step(&self, pwm: PwmCommand, speed: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let v_ss = self.v_max * pwm.duty / 100.0;
        speed + (v_ss - speed) * (1.0 - (-dt / self.tau_s).exp())
    }
}

/// Rear-axle encoder model: 600 pulses per revolution quantize the measured
/// speed to whole pulses per control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderModel {
    pub wheel_radius_m: f64,
    pub pulses_per_rev: u32,
}

impl Default for EncoderModel {
    fn default() -> Self {
        EncoderModel {
            wheel_radius_m: 0.05,
            pulses_per_rev: 600,
        }
    }
}

impl EncoderModel {
    /// Distance per pulse (m).
    pub fn quantum(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.wheel_radius_m / self.pulses_per_rev as f64
    }

    /// Speed as reconstructed from whole pulses counted over `dt`.
    pub fn measure(&self, true_speed: f64, dt: f64) -> f64 {
        let pulses = (true_speed * dt / self.quantum()).floor();
        pulses * self.quantum() / dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::ManeuverPosterior;

    #[test]
    fn duty_increments_match_the_planner_steps() {
        let pwm = PwmCommand::from_duty(50.0);
        assert_eq!(apply_state(LongitudinalState::Accelerate, pwm).duty, 54.0);
        assert_eq!(apply_state(LongitudinalState::Decelerate, pwm).duty, 42.0);
        let high = PwmCommand::from_duty(97.0);
        assert_eq!(apply_state(LongitudinalState::Stop, high).duty, 0.0);
    }

    #[test]
    fn duty_saturates_at_both_ends() {
        let top = PwmCommand::from_duty(98.0);
        assert_eq!(apply_state(LongitudinalState::Accelerate, top).duty, 100.0);
        let low = PwmCommand::from_duty(5.0);
        assert_eq!(apply_state(LongitudinalState::Decelerate, low).duty, 0.0);
    }

    #[test]
    fn plan_defaults_to_cruise() {
        let ctx = EvContext {
            frontal_ttc: f64::INFINITY,
            tv_in_window: false,
            incoming_maneuver: Maneuver::LeftLaneChange,
        };
        assert_eq!(
            plan_state(None, &ctx, &PlannerConfig::default()),
            LongitudinalState::Accelerate
        );
    }

    #[test]
    fn predicted_incoming_lane_change_yields() {
        let ctx = EvContext {
            frontal_ttc: f64::INFINITY,
            tv_in_window: true,
            incoming_maneuver: Maneuver::LeftLaneChange,
        };
        let posterior = ManeuverPosterior::from_probs([0.1, 0.8, 0.1]);
        assert_eq!(
            plan_state(Some(&posterior), &ctx, &PlannerConfig::default()),
            LongitudinalState::Decelerate
        );
    }

    #[test]
    fn emergency_ttc_stops_regardless_of_prediction() {
        let ctx = EvContext {
            frontal_ttc: 0.4,
            tv_in_window: true,
            incoming_maneuver: Maneuver::LeftLaneChange,
        };
        let posterior = ManeuverPosterior::from_probs([0.1, 0.8, 0.1]);
        assert_eq!(
            plan_state(Some(&posterior), &ctx, &PlannerConfig::default()),
            LongitudinalState::Stop
        );
    }

    #[test]
    fn pure_proportional_output() {
        let gains = PidGains {
            k_p: 1.0,
            k_i: 0.0,
            k_d: 0.0,
            ..PidGains::default()
        };
        let (x, next) = pid_step(&gains, &PidState::default(), 0.5, 0.0);
        assert_eq!(x, 0.5);
        assert_eq!(next.integral, 0.0);
        assert_eq!(next.prev_error, 0.5);
    }

    #[test]
    fn trapezoidal_integral_grows_by_e_ts_per_tick() {
        let gains = PidGains {
            k_p: 0.0,
            k_i: 1.0,
            k_d: 0.0,
            t_s: 0.1,
            integral_limit: 100.0,
        };
        let mut state = PidState {
            integral: 0.0,
            prev_error: 1.0,
        };
        // Constant e(k) = e(k−1) = 1 → the trapezoid adds 0.1 per tick.
        for k in 1..=5 {
            let (x, next) = pid_step(&gains, &state, 1.0, 0.0);
            assert!((x - 0.1 * k as f64).abs() < 1e-12);
            state = next;
        }
    }

    #[test]
    fn derivative_of_unit_error_jump() {
        let gains = PidGains {
            k_p: 0.0,
            k_i: 0.0,
            k_d: 1.0,
            t_s: 0.1,
            integral_limit: 100.0,
        };
        let (x, _) = pid_step(&gains, &PidState::default(), 1.0, 0.0);
        assert!((x - 10.0).abs() < 1e-12);
    }

    #[test]
    fn integral_clamp_bounds_windup() {
        let gains = PidGains {
            k_p: 0.0,
            k_i: 1.0,
            k_d: 0.0,
            t_s: 0.1,
            integral_limit: 0.5,
        };
        let mut state = PidState::default();
        for _ in 0..100 {
            let (_, next) = pid_step(&gains, &state, 10.0, 0.0);
            state = next;
        }
        assert!(state.integral <= 0.5);
    }

    #[test]
    fn pwm_mapping_hand_values() {
        assert_eq!(map_to_pwm(EV_MAX_SPEED).mapped, 255);
        assert_eq!(map_to_pwm(0.0).mapped, 0);
        assert_eq!(map_to_pwm(-1.0).mapped, 0);
        assert_eq!(map_to_pwm(0.75).mapped, 128);
    }

    #[test]
    fn heading_hold_band() {
        let ctl = HeadingController::default();
        assert_eq!(lateral_correct(1.5, &ctl), None);
        assert_eq!(lateral_correct(3.0, &ctl), Some(-1.0));
        assert_eq!(lateral_correct(-3.0, &ctl), Some(1.0));
    }

    #[test]
    fn plant_reaches_one_minus_e_inverse_after_tau() {
        let plant = ActuatorPlant::default();
        let v = plant.step(PwmCommand::from_duty(100.0), 0.0, plant.tau_s);
        assert!((v - 1.5 * (1.0 - (-1.0_f64).exp())).abs() < 1e-12);
        assert!((v - 0.948).abs() < 1e-3);
    }

    #[test]
    fn plant_rest_at_zero_duty_stays_at_rest() {
        let plant = ActuatorPlant::default();
        assert_eq!(plant.step(PwmCommand::zero(), 0.0, 0.1), 0.0);
    }

    #[test]
    fn encoder_quantizes_to_whole_pulses() {
        let enc = EncoderModel::default();
        let measured = enc.measure(1.0, 0.1);
        assert!(measured <= 1.0);
        assert!(1.0 - measured < enc.quantum() / 0.1);
    }
}
