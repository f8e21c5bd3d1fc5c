//! Wheel-to-body coupling and desired-velocity generation.
//!
//! The drive geometry is captured by a single 3×4 coupling matrix `G` whose
//! column for wheel `i` is `(−sin φᵢ, cos φᵢ, d)`. `G` maps wheel drive
//! forces to the net body force and yaw torque; its transpose maps a body
//! twist to wheel contact speeds, which is the inverse kinematics used to
//! build the desired wheel-speed profiles.

use crate::params::{CaseConfig, ParamsError, RobotParams};
use nalgebra::{Matrix3x4, Vector3, Vector4};

/// One value per wheel: speeds in rad/s, torques in N·m, or duties,
/// depending on context.
pub type WheelVector = Vector4<f64>;

/// Planar body-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    /// Velocity along the body x-axis (m/s).
    pub vx: f64,
    /// Velocity along the body y-axis (m/s).
    pub vy: f64,
    /// Yaw rate (rad/s).
    pub omega: f64,
}

impl Twist {
    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }
}

/// The 3×4 force coupling matrix for a four-wheel omni drive.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    m: Matrix3x4<f64>,
}

impl CouplingMatrix {
    pub fn from_robot(robot: &RobotParams) -> Self {
        let mut m = Matrix3x4::zeros();
        for (i, phi) in robot.wheel_angles().iter().enumerate() {
            let (sin, cos) = phi.sin_cos();
            m[(0, i)] = -sin;
            m[(1, i)] = cos;
            m[(2, i)] = robot.wheel_offset;
        }
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.m
    }

    /// Net body force (N, N) and yaw torque (N·m) produced by the four
    /// wheel drive forces (N).
    pub fn body_wrench(&self, wheel_forces: &WheelVector) -> Vector3<f64> {
        self.m * wheel_forces
    }
}

/// Wheel contact speeds (rad/s, wheel side) realizing a body twist.
///
/// `ωᵢ = (−sin φᵢ·vx + cos φᵢ·vy + d·ω) / r`. Multiply by the gear ratio
/// for motor-shaft speeds.
pub fn wheel_speeds_from_twist(v: &Twist, robot: &RobotParams) -> WheelVector {
    let d = robot.wheel_offset;
    let r = robot.wheel_radius;
    WheelVector::from_fn(|i, _| {
        let (sin, cos) = robot.wheel_angles()[i].sin_cos();
        (-sin * v.vx + cos * v.vy + d * v.omega) / r
    })
}

/// Symmetric trapezoidal speed profile: ramp up at `accel`, hold `v_peak`
/// for `cruise_duration`, ramp down at `accel`, then rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidProfile {
    pub v_peak: f64,
    pub accel: f64,
    pub cruise_duration: f64,
}

pub const DEFAULT_CRUISE_DURATION: f64 = 2.0;

impl TrapezoidProfile {
    pub fn new(v_peak: f64, accel: f64, cruise_duration: f64) -> Result<Self, ParamsError> {
        if !v_peak.is_finite() || v_peak <= 0.0 {
            return Err(ParamsError::Validation("profile v_peak must be > 0".into()));
        }
        if !accel.is_finite() || accel <= 0.0 {
            return Err(ParamsError::Validation("profile accel must be > 0".into()));
        }
        if !cruise_duration.is_finite() || cruise_duration < 0.0 {
            return Err(ParamsError::Validation(
                "profile cruise_duration must be >= 0".into(),
            ));
        }
        Ok(Self {
            v_peak,
            accel,
            cruise_duration,
        })
    }

    pub fn ramp_duration(&self) -> f64 {
        self.v_peak / self.accel
    }

    pub fn total_duration(&self) -> f64 {
        2.0 * self.ramp_duration() + self.cruise_duration
    }

    /// Distance covered by the whole profile (m).
    pub fn travel_distance(&self) -> f64 {
        self.v_peak * (self.cruise_duration + self.ramp_duration())
    }

    /// Profile speed at time `t` since the profile start. Continuous
    /// everywhere; zero before the start and after the end.
    pub fn speed(&self, t: f64) -> f64 {
        let ramp = self.ramp_duration();
        let cruise_end = ramp + self.cruise_duration;
        let total = self.total_duration();
        if t <= 0.0 {
            0.0
        } else if t < ramp {
            self.accel * t
        } else if t < cruise_end {
            self.v_peak
        } else if t < total {
            self.v_peak - self.accel * (t - cruise_end)
        } else {
            0.0
        }
    }
}

/// One test scenario: initial heading of the chassis plus the speed profile
/// applied along a body-frame direction of travel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioCase {
    theta0_deg: f64,
    theta0: f64,
    pub profile: TrapezoidProfile,
    heading: [f64; 2],
}

impl ScenarioCase {
    pub fn new(
        theta0_deg: f64,
        profile: TrapezoidProfile,
        heading: [f64; 2],
    ) -> Result<Self, ParamsError> {
        let norm = (heading[0] * heading[0] + heading[1] * heading[1]).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(ParamsError::Validation(
                "case heading must be a nonzero vector".into(),
            ));
        }
        Ok(Self {
            theta0_deg,
            theta0: theta0_deg.to_radians(),
            profile,
            heading: [heading[0] / norm, heading[1] / norm],
        })
    }

    /// The four built-in cases: initial orientation (deg), peak body speed
    /// (m/s), and body acceleration (m/s²), travelling along body +x.
    pub fn preset(case: u8) -> Option<Self> {
        let (theta0_deg, v_peak, accel) = match case {
            1 => (90.0, 2.0, 3.0),
            2 => (90.0, 1.5, 2.0),
            3 => (45.0, 0.8, 1.0),
            4 => (0.0, 0.8, 1.0),
            _ => return None,
        };
        let profile = TrapezoidProfile::new(v_peak, accel, DEFAULT_CRUISE_DURATION)
            .expect("preset profiles are valid");
        Some(Self::new(theta0_deg, profile, [1.0, 0.0]).expect("preset cases are valid"))
    }

    pub fn from_config(cfg: &CaseConfig) -> Result<Self, ParamsError> {
        let profile = TrapezoidProfile::new(cfg.v_peak, cfg.accel, cfg.cruise_duration)?;
        Self::new(cfg.theta0_deg, profile, cfg.heading)
    }

    /// Initial chassis orientation (rad).
    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn theta0_deg(&self) -> f64 {
        self.theta0_deg
    }

    /// Unit body-frame direction of travel.
    pub fn heading(&self) -> [f64; 2] {
        self.heading
    }

    /// Desired body twist at time `t`. The initial orientation does not
    /// appear here: it only rotates the resulting world path.
    pub fn twist_at(&self, t: f64) -> Twist {
        let s = self.profile.speed(t);
        Twist::new(s * self.heading[0], s * self.heading[1], 0.0)
    }
}

/// Desired wheel speeds (rad/s, wheel side) for a case at time `t`.
pub fn case_wheel_profiles(case: &ScenarioCase, robot: &RobotParams, t: f64) -> WheelVector {
    wheel_speeds_from_twist(&case.twist_at(t), robot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn robot() -> RobotParams {
        RobotParams::default_chassis()
    }

    #[test]
    #[allow(clippy::approx_constant)] // frozen six-digit expected values
    fn coupling_rows_for_default_angles() {
        let g = CouplingMatrix::from_robot(&robot());
        let m = g.matrix();
        let row1 = [-0.544639, -0.544639, 0.707107, 0.707107];
        let row2 = [0.838671, -0.838671, -0.707107, 0.707107];
        for i in 0..4 {
            assert_abs_diff_eq!(m[(0, i)], row1[i], epsilon = 1e-6);
            assert_abs_diff_eq!(m[(1, i)], row2[i], epsilon = 1e-6);
            assert_eq!(m[(2, i)], 0.07895);
        }
        assert_relative_eq!(m[(0, 0)], -(33f64.to_radians().sin()), max_relative = 1e-15);
    }

    #[test]
    fn coupling_axis_aligned_angles() {
        let r = RobotParams::new(1.0, 1.0, 0.1, [0.0, 90.0, 180.0, 270.0], 0.05, 1.0).unwrap();
        let g = CouplingMatrix::from_robot(&r);
        let m = g.matrix();
        let expected = [0.0, -1.0, 0.0, 1.0];
        for i in 0..4 {
            assert_abs_diff_eq!(m[(0, i)], expected[i], epsilon = 1e-12);
        }
    }

    // Writing the x-equation with explicit signs and acute reference angles
    // (33°, 33°, 45°, 45°) must agree with the absolute-angle construction.
    #[test]
    fn explicit_sign_form_matches_absolute_angles() {
        let g = CouplingMatrix::from_robot(&robot());
        let m = g.matrix();
        let a33 = 33f64.to_radians();
        let a45 = 45f64.to_radians();
        let explicit_row1 = [-a33.sin(), -a33.sin(), a45.sin(), a45.sin()];
        let explicit_row2 = [a33.cos(), -a33.cos(), -a45.cos(), a45.cos()];
        for i in 0..4 {
            assert_abs_diff_eq!(m[(0, i)], explicit_row1[i], epsilon = 1e-12);
            assert_abs_diff_eq!(m[(1, i)], explicit_row2[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_x_twist_wheel_speeds() {
        let ws = wheel_speeds_from_twist(&Twist::new(1.0, 0.0, 0.0), &robot());
        let expected = [-21.4425, -21.4425, 27.8388, 27.8388];
        for i in 0..4 {
            assert_abs_diff_eq!(ws[i], expected[i], epsilon = 1e-4);
        }
    }

    #[test]
    fn zero_twist_is_zero_speeds() {
        let ws = wheel_speeds_from_twist(&Twist::default(), &robot());
        assert_eq!(ws, WheelVector::zeros());
    }

    #[test]
    fn pure_spin_drives_all_wheels_equally() {
        let ws = wheel_speeds_from_twist(&Twist::new(0.0, 0.0, 1.0), &robot());
        for i in 0..4 {
            assert_relative_eq!(ws[i], 0.07895 / 0.0254, max_relative = 1e-12);
            assert_abs_diff_eq!(ws[i], 3.10827, epsilon = 1e-5);
        }
    }

    #[test]
    fn trapezoid_case1_samples() {
        let p = TrapezoidProfile::new(2.0, 3.0, DEFAULT_CRUISE_DURATION).unwrap();
        assert_relative_eq!(p.speed(0.3), 0.9, max_relative = 1e-12);
        assert_relative_eq!(p.speed(0.6667), 2.0, max_relative = 1e-12);
        assert_eq!(p.speed(p.total_duration() + 1.0), 0.0);
        assert_eq!(p.speed(0.0), 0.0);
    }

    #[test]
    fn cruise_profile_peaks_map_through_kinematics() {
        let case = ScenarioCase::preset(1).unwrap();
        let t_cruise = case.profile.ramp_duration() + 0.5;
        let ws = case_wheel_profiles(&case, &robot(), t_cruise);
        let expected = [-42.885, -42.885, 55.678, 55.678];
        for i in 0..4 {
            assert_abs_diff_eq!(ws[i], expected[i], epsilon = 1e-3);
        }
    }

    #[test]
    fn cases_3_and_4_share_wheel_profiles() {
        let c3 = ScenarioCase::preset(3).unwrap();
        let c4 = ScenarioCase::preset(4).unwrap();
        for k in 0..40 {
            let t = k as f64 * 0.1;
            assert_eq!(
                case_wheel_profiles(&c3, &robot(), t),
                case_wheel_profiles(&c4, &robot(), t)
            );
        }
        assert_ne!(c3.theta0(), c4.theta0());
    }

    #[test]
    fn all_cases_start_at_rest() {
        for case in 1..=4 {
            let c = ScenarioCase::preset(case).unwrap();
            assert_eq!(case_wheel_profiles(&c, &robot(), 0.0), WheelVector::zeros());
        }
    }

    #[test]
    fn profile_integral_matches_closed_form() {
        let p = TrapezoidProfile::new(1.5, 2.0, 2.0).unwrap();
        // Midpoint quadrature over the full support.
        let n = 400_000;
        let h = p.total_duration() / n as f64;
        let integral: f64 = (0..n).map(|k| p.speed((k as f64 + 0.5) * h) * h).sum();
        assert_relative_eq!(integral, p.travel_distance(), max_relative = 1e-9);
    }

    proptest! {
        // Power balance: wrench · twist equals the sum of per-wheel drive
        // force times contact speed, for arbitrary geometry.
        #[test]
        fn virtual_work_duality(
            vx in -5.0f64..5.0, vy in -5.0f64..5.0, om in -10.0f64..10.0,
            f in proptest::array::uniform4(-3.0f64..3.0),
            angles in proptest::array::uniform4(0.0f64..360.0),
            d in 0.01f64..0.5, r in 0.01f64..0.2,
        ) {
            let robot = RobotParams::new(1.0, 1.0, d, angles, r, 1.0).unwrap();
            let g = CouplingMatrix::from_robot(&robot);
            let twist = Twist::new(vx, vy, om);
            let forces = WheelVector::from_column_slice(&f);
            let wrench = g.body_wrench(&forces);
            let lhs = wrench.x * vx + wrench.y * vy + wrench.z * om;
            let speeds = wheel_speeds_from_twist(&twist, &robot);
            let rhs: f64 = (0..4).map(|i| forces[i] * r * speeds[i]).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn trapezoid_speed_is_continuous(
            v in 0.1f64..5.0, a in 0.1f64..10.0, c in 0.0f64..4.0,
            t in 0.0f64..20.0, eps in 1e-9f64..1e-3,
        ) {
            let p = TrapezoidProfile::new(v, a, c).unwrap();
            let jump = (p.speed(t + eps) - p.speed(t)).abs();
            prop_assert!(jump <= a * eps + 1e-12);
        }

        #[test]
        fn wheel_profiles_ignore_initial_orientation(
            theta0 in -180.0f64..180.0, t in 0.0f64..8.0,
        ) {
            let base = ScenarioCase::preset(1).unwrap();
            let rotated = ScenarioCase::new(theta0, base.profile, [1.0, 0.0]).unwrap();
            let robot = RobotParams::default_chassis();
            prop_assert_eq!(
                case_wheel_profiles(&base, &robot, t),
                case_wheel_profiles(&rotated, &robot, t)
            );
        }
    }
}
