//! The discrete wheel-speed controllers stepped at the control rate.
//!
//! Both variants share the measurement filter and the PI law; they differ
//! in how the PI output becomes a PWM duty:
//!
//! * `Torque`: the PI output is a torque demand (N·m) that the converter
//!   turns into the duty producing exactly that shaft torque at the
//!   filtered speed, compensating back-EMF.
//! * `PlainPi`: the PI output is the duty demand itself, with no knowledge
//!   of the motor model.

use crate::motor::DutyCycle;
use crate::params::{MotorParams, ParamsError};

/// Moving-average FIR filter with unity DC gain.
///
/// The encoder quantizes speed into steps of several rad/s at the control
/// rate; this filter knocks that high-frequency content down before the
/// error computation. History starts at zero, which defines the warmup.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    coeffs: Vec<f64>,
    history: Vec<f64>,
    next: usize,
}

impl FirFilter {
    /// Uniform-weight filter over the last `taps` samples.
    pub fn boxcar(taps: usize) -> Self {
        assert!(taps >= 1);
        Self::new(vec![1.0; taps]).expect("boxcar coefficients are valid")
    }

    /// Builds a filter from raw coefficients, normalizing them to unit sum.
    pub fn new(raw_coeffs: Vec<f64>) -> Result<Self, ParamsError> {
        if raw_coeffs.is_empty() {
            return Err(ParamsError::Validation(
                "filter needs at least one tap".into(),
            ));
        }
        let sum: f64 = raw_coeffs.iter().sum();
        if sum.abs() < 1e-12 || !sum.is_finite() {
            return Err(ParamsError::Validation(
                "filter coefficients must have a nonzero finite sum".into(),
            ));
        }
        let coeffs: Vec<f64> = raw_coeffs.iter().map(|c| c / sum).collect();
        let len = coeffs.len();
        Ok(Self {
            coeffs,
            history: vec![0.0; len],
            next: 0,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Pushes a sample and returns the filtered value.
    pub fn step(&mut self, sample: f64) -> f64 {
        let n = self.history.len();
        self.history[self.next] = sample;
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            acc += c * self.history[(self.next + n - k) % n];
        }
        self.next = (self.next + 1) % n;
        acc
    }
}

/// Which rail the duty output was pinned to on the previous tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Saturation {
    #[default]
    None,
    Positive,
    Negative,
}

/// Discrete PI law on the speed error with a running error sum.
///
/// With anti-windup enabled the sum is frozen whenever the duty output was
/// saturated on the previous tick and the new error would push it further
/// into the rail; errors that unwind the saturation integrate normally.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    pub kp: f64,
    pub ki: f64,
    anti_windup: bool,
    error_sum: f64,
    saturation: Saturation,
}

impl PiController {
    pub fn new(kp: f64, ki: f64, anti_windup: bool) -> Self {
        assert!(kp >= 0.0 && ki >= 0.0);
        Self {
            kp,
            ki,
            anti_windup,
            error_sum: 0.0,
            saturation: Saturation::None,
        }
    }

    pub fn error_sum(&self) -> f64 {
        self.error_sum
    }

    /// Accumulates the error and returns `kp·err + ki·Σerr`.
    pub fn step(&mut self, err: f64) -> f64 {
        let deepens = match self.saturation {
            Saturation::Positive => err > 0.0,
            Saturation::Negative => err < 0.0,
            Saturation::None => false,
        };
        if !(self.anti_windup && deepens) {
            self.error_sum += err;
        }
        self.kp * err + self.ki * self.error_sum
    }

    /// Records whether the downstream duty saturated this tick.
    pub fn note_saturation(&mut self, saturation: Saturation) {
        self.saturation = saturation;
    }
}

/// Fraction of the no-load speed beyond which the measured speed is not
/// trusted for back-EMF compensation.
pub const BACK_EMF_CLAMP: f64 = 0.95;

fn duty_demand_for_torque(tau_d: f64, filtered_motor_omega: f64, m: &MotorParams) -> f64 {
    let limit = BACK_EMF_CLAMP * m.no_load_speed();
    let omega = filtered_motor_omega.clamp(-limit, limit);
    (tau_d + m.damping * omega) / m.stall_torque()
}

/// Duty cycle whose average voltage makes the motor produce `tau_d` at the
/// filtered speed: the algebraic inverse of the torque law, so the
/// commanded torque is independent of back-EMF until the duty saturates.
/// The speed used for compensation is clamped near the no-load speed.
pub fn torque_to_duty(tau_d: f64, filtered_motor_omega: f64, m: &MotorParams) -> DutyCycle {
    DutyCycle::saturating(duty_demand_for_torque(tau_d, filtered_motor_omega, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Torque,
    PlainPi,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Torque => "torque",
            ControllerKind::PlainPi => "pi",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-tick internals exposed for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub filtered_omega: f64,
    pub err: f64,
    /// PI output: a torque demand (N·m) for the torque controller, the raw
    /// duty demand for plain PI.
    pub tau_d: f64,
    /// Duty demand before saturation.
    pub duty_demand: f64,
}

/// One wheel's complete controller: filter, PI law, and output stage.
#[derive(Debug, Clone, PartialEq)]
pub struct WheelController {
    kind: ControllerKind,
    fir: FirFilter,
    pi: PiController,
}

impl WheelController {
    pub fn new(kind: ControllerKind, kp: f64, ki: f64, fir_taps: usize, anti_windup: bool) -> Self {
        Self {
            kind,
            fir: FirFilter::boxcar(fir_taps),
            pi: PiController::new(kp, ki, anti_windup),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    /// Runs one control tick: filter the measurement, form the error
    /// against the desired motor speed, apply the PI law, and produce the
    /// duty command.
    pub fn step(
        &mut self,
        desired_omega: f64,
        raw_measured_omega: f64,
        m: &MotorParams,
    ) -> (DutyCycle, StepDiagnostics) {
        let filtered_omega = self.fir.step(raw_measured_omega);
        let err = desired_omega - filtered_omega;
        let tau_d = self.pi.step(err);
        let duty_demand = match self.kind {
            ControllerKind::Torque => duty_demand_for_torque(tau_d, filtered_omega, m),
            ControllerKind::PlainPi => tau_d,
        };
        let duty = DutyCycle::saturating(duty_demand);
        let saturation = if duty_demand > 1.0 {
            Saturation::Positive
        } else if duty_demand < -1.0 {
            Saturation::Negative
        } else {
            Saturation::None
        };
        self.pi.note_saturation(saturation);
        (
            duty,
            StepDiagnostics {
                filtered_omega,
                err,
                tau_d,
                duty_demand,
            },
        )
    }
}
