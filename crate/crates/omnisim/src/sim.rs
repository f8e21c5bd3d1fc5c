//! Closed-loop scenario execution, cross-surface comparison, gain tuning,
//! and the on-disk log formats.
//!
//! A run steps the four wheel controllers at the control rate over a plant
//! integrated at `control_hz × physics_substeps`. The chassis is open loop:
//! nothing feeds the pose back into the controllers, so the wheel-speed
//! channels are independent of the initial orientation. Runs are seed-free
//! and fully deterministic.

use crate::control::{ControllerKind, WheelController};
use crate::dynamics::{self, RobotState};
use crate::kinematics::{
    case_wheel_profiles, wheel_speeds_from_twist, CouplingMatrix, ScenarioCase, WheelVector,
};
use crate::motor::{torque_from_duty, EncoderState, DEFAULT_ENCODER_CPR};
use crate::params::{LoopRates, ParamsBundle};
use std::io::{self, Write};

pub const DEFAULT_DURATION: f64 = 4.0;
/// Rate of the independent pose record, standing in for an overhead camera.
pub const DEFAULT_POSE_HZ: f64 = 50.0;

/// Everything needed to reproduce one run. No random state anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub case: ScenarioCase,
    pub surface: String,
    pub controller: ControllerKind,
    pub kp: f64,
    pub ki: f64,
    pub duration: f64,
    pub rates: LoopRates,
    pub pose_hz: f64,
}

impl Scenario {
    /// A scenario over the bundle's rates and gains, ready for overrides.
    pub fn new(
        case: ScenarioCase,
        surface: &str,
        controller: ControllerKind,
        params: &ParamsBundle,
    ) -> Self {
        Self {
            case,
            surface: surface.to_string(),
            controller,
            kp: params.control.kp,
            ki: params.control.ki,
            duration: DEFAULT_DURATION,
            rates: params.rates,
            pose_hz: DEFAULT_POSE_HZ,
        }
    }

    pub fn with_gains(mut self, kp: f64, ki: f64) -> Self {
        self.kp = kp;
        self.ki = ki;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_controller(mut self, controller: ControllerKind) -> Self {
        self.controller = controller;
        self
    }

    pub fn with_surface(mut self, surface: &str) -> Self {
        self.surface = surface.to_string();
        self
    }
}

/// One wheel-channel log row, written once per wheel per control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelSample {
    pub tick: u64,
    pub t: f64,
    pub wheel: usize,
    pub desired_omega: f64,
    pub raw_omega: f64,
    pub filtered_omega: f64,
    pub err: f64,
    pub tau_d: f64,
    pub duty: f64,
    pub torque: f64,
}

/// World pose sampled on the slow pose channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub wheels: Vec<WheelSample>,
    pub poses: Vec<PoseSample>,
    pub final_state: RobotState,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown surface '{name}'; available: {available}")]
    UnknownSurface { name: String, available: String },
    #[error("integration diverged at tick {tick} (t = {t:.6} s): {source}")]
    Diverged {
        tick: u64,
        t: f64,
        source: dynamics::Diverged,
    },
    #[error("surface comparison needs at least 2 surfaces")]
    NeedTwoSurfaces,
    #[error("gain search grid is empty")]
    EmptyGrid,
}

/// Runs one closed-loop scenario from rest at the case's initial
/// orientation and returns the full log.
///
/// Per control tick: the encoders quantize the true motor speeds, each
/// wheel controller produces a duty, the motor law turns duties into
/// torques at the true speeds, and the plant integrates one control period
/// under those held torques.
pub fn run_scenario(s: &Scenario, params: &ParamsBundle) -> Result<TrajectoryLog, SimError> {
    let surface = params
        .surface(&s.surface)
        .ok_or_else(|| SimError::UnknownSurface {
            name: s.surface.clone(),
            available: params.surface_names().join(", "),
        })?;
    let robot = &params.robot;
    let motor = &params.motor;
    let coupling = CouplingMatrix::from_robot(robot);
    let period = s.rates.period();
    let n_ticks = (s.duration * s.rates.control_hz).round() as u64;
    let pose_div = ((s.rates.control_hz / s.pose_hz).round() as u64).max(1);

    let mut state = RobotState::at_rest(s.case.theta0());
    let mut encoders = [EncoderState::new(DEFAULT_ENCODER_CPR); 4];
    let mut controllers: [WheelController; 4] = std::array::from_fn(|_| {
        WheelController::new(
            s.controller,
            s.kp,
            s.ki,
            params.control.fir_taps,
            params.control.anti_windup,
        )
    });

    let mut wheels = Vec::with_capacity(4 * n_ticks as usize);
    let mut poses = Vec::with_capacity((n_ticks / pose_div + 1) as usize);

    for tick in 0..n_ticks {
        let t = tick as f64 / s.rates.control_hz;
        if tick % pose_div == 0 {
            poses.push(PoseSample {
                t,
                x: state.x,
                y: state.y,
                theta: state.theta,
            });
        }

        let desired_motor = case_wheel_profiles(&s.case, robot, t) * robot.gear_ratio;
        let true_motor = wheel_speeds_from_twist(&state.body_twist(), robot) * robot.gear_ratio;

        let mut motor_torques = WheelVector::zeros();
        for wheel in 0..4 {
            let raw = encoders[wheel].measure(true_motor[wheel], period);
            let (duty, diag) = controllers[wheel].step(desired_motor[wheel], raw, motor);
            let torque = torque_from_duty(duty, true_motor[wheel], motor);
            motor_torques[wheel] = torque;
            wheels.push(WheelSample {
                tick,
                t,
                wheel,
                desired_omega: desired_motor[wheel],
                raw_omega: raw,
                filtered_omega: diag.filtered_omega,
                err: diag.err,
                tau_d: diag.tau_d,
                duty: duty.value(),
                torque,
            });
        }

        let wheel_torques = dynamics::wheel_torques_from_motor(&motor_torques, robot);
        state = dynamics::rk4_step(
            &state,
            &wheel_torques,
            period,
            s.rates.physics_substeps,
            robot,
            surface,
            &coupling,
        )
        .map_err(|source| SimError::Diverged { tick, t, source })?;
    }

    Ok(TrajectoryLog {
        wheels,
        poses,
        final_state: state,
    })
}

// ---------------------------------------------------------------------------
// Metrics

/// RMS of the logged speed error over all wheels and the whole run (rad/s).
pub fn tracking_rms(log: &TrajectoryLog) -> f64 {
    rms(log.wheels.iter().map(|w| w.err))
}

pub fn tracking_rms_per_wheel(log: &TrajectoryLog) -> [f64; 4] {
    std::array::from_fn(|i| rms(log.wheels.iter().filter(|w| w.wheel == i).map(|w| w.err)))
}

/// RMS of the logged speed error restricted to ticks with `t0 <= t < t1`.
pub fn tracking_rms_window(log: &TrajectoryLog, t0: f64, t1: f64) -> f64 {
    rms(log
        .wheels
        .iter()
        .filter(|w| w.t >= t0 && w.t < t1)
        .map(|w| w.err))
}

/// The constant-speed segment of a case's profile.
pub fn cruise_window(case: &ScenarioCase) -> (f64, f64) {
    let ramp = case.profile.ramp_duration();
    (ramp, ramp + case.profile.cruise_duration)
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0u64;
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// RMS of the pointwise planar distance between two pose records taken at
/// matched timestamps (m).
pub fn path_rms_deviation(a: &TrajectoryLog, b: &TrajectoryLog) -> f64 {
    assert_eq!(
        a.poses.len(),
        b.poses.len(),
        "pose channels must share the sample grid"
    );
    rms(a
        .poses
        .iter()
        .zip(&b.poses)
        .map(|(p, q)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()))
}

// ---------------------------------------------------------------------------
// Cross-surface comparison

/// Outcome of one run inside a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceOutcome {
    pub surface: String,
    pub final_state: RobotState,
    /// World path at the pose-channel rate.
    pub path: Vec<PoseSample>,
    pub tracking_rms: f64,
    pub tracking_rms_per_wheel: [f64; 4],
    pub cruise_rms: f64,
}

/// Path robustness of one controller across several surfaces under
/// identical inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub controller: ControllerKind,
    pub kp: f64,
    pub ki: f64,
    pub outcomes: Vec<SurfaceOutcome>,
    /// Symmetric matrix of pairwise path RMS deviations (m).
    pub deviation: Vec<Vec<f64>>,
    pub max_deviation: f64,
    /// Spread (max − min) of the cruise-phase tracking RMS across surfaces.
    pub cruise_spread: f64,
}

/// Runs the same case and gains on every listed surface and compares the
/// resulting paths pairwise at matched timestamps.
pub fn compare_surfaces(
    case: &ScenarioCase,
    controller: ControllerKind,
    gains: (f64, f64),
    surfaces: &[String],
    duration: f64,
    params: &ParamsBundle,
) -> Result<RobustnessReport, SimError> {
    compare_surfaces_with_logs(case, controller, gains, surfaces, duration, params)
        .map(|(report, _)| report)
}

/// Like [`compare_surfaces`] but also hands back the per-surface logs, in
/// input order, for callers that write them out.
pub fn compare_surfaces_with_logs(
    case: &ScenarioCase,
    controller: ControllerKind,
    gains: (f64, f64),
    surfaces: &[String],
    duration: f64,
    params: &ParamsBundle,
) -> Result<(RobustnessReport, Vec<TrajectoryLog>), SimError> {
    if surfaces.len() < 2 {
        return Err(SimError::NeedTwoSurfaces);
    }
    let (t0, t1) = cruise_window(case);
    let mut logs = Vec::with_capacity(surfaces.len());
    let mut outcomes = Vec::with_capacity(surfaces.len());
    for name in surfaces {
        let scenario = Scenario {
            case: *case,
            surface: name.clone(),
            controller,
            kp: gains.0,
            ki: gains.1,
            duration,
            rates: params.rates,
            pose_hz: DEFAULT_POSE_HZ,
        };
        let log = run_scenario(&scenario, params)?;
        outcomes.push(SurfaceOutcome {
            surface: name.clone(),
            final_state: log.final_state,
            path: log.poses.clone(),
            tracking_rms: tracking_rms(&log),
            tracking_rms_per_wheel: tracking_rms_per_wheel(&log),
            cruise_rms: tracking_rms_window(&log, t0, t1),
        });
        logs.push(log);
    }

    let n = logs.len();
    let mut deviation = vec![vec![0.0; n]; n];
    let mut max_deviation = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = path_rms_deviation(&logs[i], &logs[j]);
            deviation[i][j] = d;
            deviation[j][i] = d;
            max_deviation = max_deviation.max(d);
        }
    }
    let cruise_min = outcomes
        .iter()
        .map(|o| o.cruise_rms)
        .fold(f64::INFINITY, f64::min);
    let cruise_max = outcomes.iter().map(|o| o.cruise_rms).fold(0.0f64, f64::max);

    let report = RobustnessReport {
        controller,
        kp: gains.0,
        ki: gains.1,
        outcomes,
        deviation,
        max_deviation,
        cruise_spread: cruise_max - cruise_min,
    };
    Ok((report, logs))
}

// ---------------------------------------------------------------------------
// Gain tuning

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub kp_grid: Vec<f64>,
    pub ki_grid: Vec<f64>,
}

impl SearchSpec {
    /// The default grid used when the caller does not supply one.
    pub fn default_grid() -> Self {
        Self {
            kp_grid: vec![0.002, 0.005, 0.01, 0.02],
            ki_grid: vec![0.0005, 0.001, 0.002, 0.005],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedGains {
    pub kp: f64,
    pub ki: f64,
    /// Full-run speed-tracking RMS achieved on the tuning surface (rad/s).
    pub score: f64,
}

/// Exhaustive grid search minimizing the speed-tracking RMS on one
/// surface. Ties break toward the smallest `kp`, then the smallest `ki`.
pub fn tune_gains(
    case: &ScenarioCase,
    surface: &str,
    controller: ControllerKind,
    search: &SearchSpec,
    duration: f64,
    params: &ParamsBundle,
) -> Result<TunedGains, SimError> {
    if search.kp_grid.is_empty() || search.ki_grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    let mut kp_grid = search.kp_grid.clone();
    let mut ki_grid = search.ki_grid.clone();
    kp_grid.sort_by(f64::total_cmp);
    ki_grid.sort_by(f64::total_cmp);

    let mut best: Option<TunedGains> = None;
    for &kp in &kp_grid {
        for &ki in &ki_grid {
            let scenario = Scenario {
                case: *case,
                surface: surface.to_string(),
                controller,
                kp,
                ki,
                duration,
                rates: params.rates,
                pose_hz: DEFAULT_POSE_HZ,
            };
            let score = tracking_rms(&run_scenario(&scenario, params)?);
            if best.is_none_or(|b| score < b.score) {
                best = Some(TunedGains { kp, ki, score });
            }
        }
    }
    Ok(best.expect("grids are non-empty"))
}

// ---------------------------------------------------------------------------
// On-disk formats

/// Fixed-width float serialization: 17 significant digits, enough to
/// reproduce any f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_wheels_csv<W: Write>(log: &TrajectoryLog, out: &mut W) -> io::Result<()> {
    writeln!(
        out,
        "tick,t,wheel,desired_omega,raw_omega,filtered_omega,err,tau_d,duty,torque"
    )?;
    for w in &log.wheels {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            w.tick,
            format_float(w.t),
            w.wheel,
            format_float(w.desired_omega),
            format_float(w.raw_omega),
            format_float(w.filtered_omega),
            format_float(w.err),
            format_float(w.tau_d),
            format_float(w.duty),
            format_float(w.torque),
        )?;
    }
    Ok(())
}

pub fn write_pose_csv<W: Write>(log: &TrajectoryLog, out: &mut W) -> io::Result<()> {
    writeln!(out, "t,x,y,theta")?;
    for p in &log.poses {
        writeln!(
            out,
            "{},{},{},{}",
            format_float(p.t),
            format_float(p.x),
            format_float(p.y),
            format_float(p.theta),
        )?;
    }
    Ok(())
}

/// Machine-readable key/value report for one or more controllers.
pub fn write_report_kv<W: Write>(reports: &[&RobustnessReport], out: &mut W) -> io::Result<()> {
    for r in reports {
        let c = r.controller.label();
        writeln!(out, "{c}.kp={}", format_float(r.kp))?;
        writeln!(out, "{c}.ki={}", format_float(r.ki))?;
        for o in &r.outcomes {
            let s = &o.surface;
            writeln!(out, "{c}.{s}.final_x={}", format_float(o.final_state.x))?;
            writeln!(out, "{c}.{s}.final_y={}", format_float(o.final_state.y))?;
            writeln!(
                out,
                "{c}.{s}.final_theta={}",
                format_float(o.final_state.theta)
            )?;
            writeln!(out, "{c}.{s}.tracking_rms={}", format_float(o.tracking_rms))?;
            for (i, w) in o.tracking_rms_per_wheel.iter().enumerate() {
                writeln!(out, "{c}.{s}.tracking_rms_wheel{i}={}", format_float(*w))?;
            }
            writeln!(out, "{c}.{s}.cruise_rms={}", format_float(o.cruise_rms))?;
        }
        for (i, row) in r.deviation.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if j > i {
                    let a = &r.outcomes[i].surface;
                    let b = &r.outcomes[j].surface;
                    writeln!(out, "{c}.deviation.{a}.{b}={}", format_float(*d))?;
                }
            }
        }
        writeln!(out, "{c}.max_deviation={}", format_float(r.max_deviation))?;
        writeln!(out, "{c}.cruise_spread={}", format_float(r.cruise_spread))?;
    }
    if let [torque, pi] = reports {
        let (torque, pi) = if torque.controller == ControllerKind::Torque {
            (torque, pi)
        } else {
            (pi, torque)
        };
        writeln!(
            out,
            "verdict.torque_more_robust={}",
            torque.max_deviation < pi.max_deviation
        )?;
        if torque.max_deviation > 0.0 {
            writeln!(
                out,
                "verdict.deviation_ratio={}",
                format_float(pi.max_deviation / torque.max_deviation)
            )?;
        }
    }
    Ok(())
}

/// Human-readable comparison summary.
pub fn write_report_txt<W: Write>(reports: &[&RobustnessReport], out: &mut W) -> io::Result<()> {
    for r in reports {
        writeln!(
            out,
            "controller {} (kp = {}, ki = {})",
            r.controller, r.kp, r.ki
        )?;
        writeln!(
            out,
            "  {:<12} {:>14} {:>14} {:>12} {:>12} {:>12}",
            "surface", "tracking rms", "cruise rms", "final x", "final y", "final theta"
        )?;
        for o in &r.outcomes {
            writeln!(
                out,
                "  {:<12} {:>14.6} {:>14.6} {:>12.6} {:>12.6} {:>12.6}",
                o.surface,
                o.tracking_rms,
                o.cruise_rms,
                o.final_state.x,
                o.final_state.y,
                o.final_state.theta
            )?;
        }
        writeln!(out, "  pairwise path rms deviation (m):")?;
        for (i, row) in r.deviation.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if j > i {
                    writeln!(
                        out,
                        "    {} vs {}: {:.6}",
                        r.outcomes[i].surface, r.outcomes[j].surface, d
                    )?;
                }
            }
        }
        writeln!(out, "  max pairwise deviation: {:.6} m", r.max_deviation)?;
        writeln!(out, "  cruise rms spread: {:.6} rad/s", r.cruise_spread)?;
        writeln!(out)?;
    }
    if let [a, b] = reports {
        let (torque, pi) = if a.controller == ControllerKind::Torque {
            (a, b)
        } else {
            (b, a)
        };
        let ratio = if torque.max_deviation > 0.0 {
            pi.max_deviation / torque.max_deviation
        } else {
            f64::INFINITY
        };
        writeln!(
            out,
            "verdict: torque controller max path deviation {:.6} m vs plain PI {:.6} m (ratio {:.2}) -> {}",
            torque.max_deviation,
            pi.max_deviation,
            ratio,
            if torque.max_deviation < pi.max_deviation {
                "torque controller is more surface-robust"
            } else {
                "plain PI is more surface-robust"
            }
        )?;
    }
    Ok(())
}

/// Desired wheel-speed profile table for plotting, sampled at the control
/// rate over the whole profile.
pub fn write_profiles_csv<W: Write>(
    case: &ScenarioCase,
    params: &ParamsBundle,
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "t,wheel1,wheel2,wheel3,wheel4")?;
    let hz = params.rates.control_hz;
    let samples = (case.profile.total_duration() * hz).floor() as u64 + 1;
    for k in 0..samples {
        let t = k as f64 / hz;
        let ws = case_wheel_profiles(case, &params.robot, t);
        writeln!(
            out,
            "{},{},{},{},{}",
            format_float(t),
            format_float(ws[0]),
            format_float(ws[1]),
            format_float(ws[2]),
            format_float(ws[3]),
        )?;
    }
    Ok(())
}
