//! Brushless-motor torque law, electrical power bookkeeping, PWM duty
//! semantics, and the quadrature-encoder speed measurement.
//!
//! The motor is quasi-static: torque is affine in the applied voltage and
//! the shaft speed, `τ = a·u − b·ω` with `a = km/R` and `b = km/(R·kn)`.
//! No winding inductance, commutation, or thermal effects are modeled.

use crate::params::MotorParams;
use std::f64::consts::TAU;

/// Signed PWM duty cycle in `[-1, 1]`. The sign selects the drive
/// direction; `|value|·Vcc` is the applied voltage magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyCycle(f64);

impl DutyCycle {
    /// Clamps the demand into the representable range.
    pub fn saturating(value: f64) -> Self {
        Self(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Average applied voltage for a given supply (V).
    pub fn voltage(self, supply_vcc: f64) -> f64 {
        self.0 * supply_vcc
    }
}

/// Shaft torque (N·m) at the given duty and motor speed (rad/s).
///
/// Linear in both arguments; the duty bound is the only limit.
pub fn torque_from_duty(duty: DutyCycle, motor_omega: f64, m: &MotorParams) -> f64 {
    m.torque_per_volt * duty.voltage(m.supply_vcc) - m.damping * motor_omega
}

/// Electrical input power minus mechanical output power minus coil loss, in
/// watts, for an applied voltage `u` at speed `motor_omega`.
///
/// With the constants split under `km·kn = 1` this residual is zero by
/// construction; it is kept as a numerical self-check of the model.
pub fn energy_balance_residual(u: f64, motor_omega: f64, m: &MotorParams) -> f64 {
    let torque = m.torque_per_volt * u - m.damping * motor_omega;
    let current = torque / m.torque_constant();
    u * current - (motor_omega * torque + current * current * m.resistance())
}

pub const DEFAULT_ENCODER_CPR: u32 = 360;

/// Incremental encoder with exact angle bookkeeping.
///
/// Each sample advances the accumulated shaft angle, emits whole counts,
/// and carries the sub-count remainder to the next sample. Quantization to
/// whole counts is the measurement noise; no random noise is added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderState {
    counts_per_rev: u32,
    residual_angle: f64,
    last_measured: f64,
}

impl EncoderState {
    pub fn new(counts_per_rev: u32) -> Self {
        assert!(
            counts_per_rev > 0,
            "encoder needs at least one count per rev"
        );
        Self {
            counts_per_rev,
            residual_angle: 0.0,
            last_measured: 0.0,
        }
    }

    /// Shaft angle per count (rad).
    pub fn count_angle(&self) -> f64 {
        TAU / self.counts_per_rev as f64
    }

    /// Angle accumulated but not yet emitted as a count (rad), always
    /// strictly inside `±count_angle`.
    pub fn residual_angle(&self) -> f64 {
        self.residual_angle
    }

    pub fn last_measured(&self) -> f64 {
        self.last_measured
    }

    /// Advances the shaft by `true_omega·dt` and returns the quantized
    /// speed measurement (rad/s) for this sample period.
    pub fn measure(&mut self, true_omega: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        self.residual_angle += true_omega * dt;
        let step = self.count_angle();
        let counts = (self.residual_angle / step).trunc();
        self.residual_angle -= counts * step;
        self.last_measured = counts * step / dt;
        self.last_measured
    }
}
