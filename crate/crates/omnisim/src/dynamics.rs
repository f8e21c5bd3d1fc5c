//! The plant: planar chassis rigid-body dynamics under wheel drive forces,
//! regularized Coulomb friction, and surface traction torque, integrated
//! with fixed-step classical RK4.
//!
//! Body accelerations are `a = G·(τ/r)/M` plus a friction acceleration of
//! magnitude `μ·g` opposing the body velocity, and
//! `ω̇ = (d·Σ(τᵢ/r) + T_trac)/J` with the traction torque opposing the yaw
//! rate. The Coulomb signs are smoothed with `tanh(·/ε)` so the right-hand
//! side stays smooth for the integrator; there is no stick-slip hybrid.

use crate::kinematics::{CouplingMatrix, Twist, WheelVector};
use crate::params::{RobotParams, SurfaceParams};

/// World pose plus body-frame velocity of the chassis.
///
/// `theta` is left unwrapped so logged headings stay continuous.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx_b: f64,
    pub vy_b: f64,
    pub omega: f64,
}

impl RobotState {
    pub fn at_rest(theta0: f64) -> Self {
        Self {
            theta: theta0,
            ..Self::default()
        }
    }

    pub fn body_twist(&self) -> Twist {
        Twist::new(self.vx_b, self.vy_b, self.omega)
    }

    /// Velocity in the world frame (m/s).
    pub fn world_velocity(&self) -> (f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        (
            cos * self.vx_b - sin * self.vy_b,
            sin * self.vx_b + cos * self.vy_b,
        )
    }

    pub fn kinetic_energy(&self, robot: &RobotParams) -> f64 {
        0.5 * robot.mass * (self.vx_b * self.vx_b + self.vy_b * self.vy_b)
            + 0.5 * robot.inertia * self.omega * self.omega
    }

    fn fields(&self) -> [(f64, &'static str); 6] {
        [
            (self.x, "x"),
            (self.y, "y"),
            (self.theta, "theta"),
            (self.vx_b, "vx_b"),
            (self.vy_b, "vy_b"),
            (self.omega, "omega"),
        ]
    }
}

/// Time derivative of every `RobotState` field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub dvx_b: f64,
    pub dvy_b: f64,
    pub domega: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("state field {field} became non-finite")]
pub struct Diverged {
    pub field: &'static str,
}

/// Friction acceleration on the body (m/s², body frame) and traction
/// torque on the chassis (N·m). Both oppose the current motion and vanish
/// smoothly at rest.
pub fn friction_wrench(
    state: &RobotState,
    surface: &SurfaceParams,
    robot: &RobotParams,
) -> (f64, f64, f64) {
    let speed = (state.vx_b * state.vx_b + state.vy_b * state.vy_b).sqrt();
    let (ax, ay) = if speed == 0.0 {
        (0.0, 0.0)
    } else {
        let k = -surface.mu_linear * surface.gravity * (speed / surface.eps_linear).tanh() / speed;
        (k * state.vx_b, k * state.vy_b)
    };
    let torque = -surface.mu_rotational
        * robot.mass
        * surface.gravity
        * robot.wheel_offset
        * (state.omega / surface.eps_rotational).tanh();
    (ax, ay, torque)
}

/// Converts motor-shaft torques to wheel torques through the gearbox.
pub fn wheel_torques_from_motor(motor_torques: &WheelVector, robot: &RobotParams) -> WheelVector {
    motor_torques * robot.gear_ratio
}

/// Right-hand side of the chassis ODE for fixed wheel torques (N·m, wheel
/// side). Drive forces are `τᵢ/r`; pose rates rotate the body velocity
/// into the world frame.
pub fn state_derivative(
    state: &RobotState,
    wheel_torques: &WheelVector,
    robot: &RobotParams,
    surface: &SurfaceParams,
    coupling: &CouplingMatrix,
) -> StateDerivative {
    let wrench = coupling.body_wrench(&(wheel_torques / robot.wheel_radius));
    let (fric_ax, fric_ay, fric_torque) = friction_wrench(state, surface, robot);
    let (sin, cos) = state.theta.sin_cos();
    StateDerivative {
        dx: cos * state.vx_b - sin * state.vy_b,
        dy: sin * state.vx_b + cos * state.vy_b,
        dtheta: state.omega,
        dvx_b: wrench.x / robot.mass + fric_ax,
        dvy_b: wrench.y / robot.mass + fric_ay,
        domega: (wrench.z + fric_torque) / robot.inertia,
    }
}

fn add_scaled(s: &RobotState, d: &StateDerivative, h: f64) -> RobotState {
    RobotState {
        x: s.x + h * d.dx,
        y: s.y + h * d.dy,
        theta: s.theta + h * d.dtheta,
        vx_b: s.vx_b + h * d.dvx_b,
        vy_b: s.vy_b + h * d.dvy_b,
        omega: s.omega + h * d.domega,
    }
}

fn rk4_combine(
    s: &RobotState,
    k1: &StateDerivative,
    k2: &StateDerivative,
    k3: &StateDerivative,
    k4: &StateDerivative,
    h: f64,
) -> RobotState {
    let w = h / 6.0;
    RobotState {
        x: s.x + w * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        y: s.y + w * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy),
        theta: s.theta + w * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta),
        vx_b: s.vx_b + w * (k1.dvx_b + 2.0 * k2.dvx_b + 2.0 * k3.dvx_b + k4.dvx_b),
        vy_b: s.vy_b + w * (k1.dvy_b + 2.0 * k2.dvy_b + 2.0 * k3.dvy_b + k4.dvy_b),
        omega: s.omega + w * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega),
    }
}

fn check_finite(s: &RobotState) -> Result<(), Diverged> {
    for (value, field) in s.fields() {
        if !value.is_finite() {
            return Err(Diverged { field });
        }
    }
    Ok(())
}

/// Advances the state over `dt` with classical RK4 split into `substeps`
/// equal pieces, holding the wheel torques constant (zero-order hold from
/// the controller). The input state is untouched on error.
pub fn rk4_step(
    state: &RobotState,
    wheel_torques: &WheelVector,
    dt: f64,
    substeps: u32,
    robot: &RobotParams,
    surface: &SurfaceParams,
    coupling: &CouplingMatrix,
) -> Result<RobotState, Diverged> {
    assert!(dt > 0.0 && substeps >= 1);
    let h = dt / substeps as f64;
    let mut s = *state;
    for _ in 0..substeps {
        let k1 = state_derivative(&s, wheel_torques, robot, surface, coupling);
        let k2 = state_derivative(
            &add_scaled(&s, &k1, h / 2.0),
            wheel_torques,
            robot,
            surface,
            coupling,
        );
        let k3 = state_derivative(
            &add_scaled(&s, &k2, h / 2.0),
            wheel_torques,
            robot,
            surface,
            coupling,
        );
        let k4 = state_derivative(
            &add_scaled(&s, &k3, h),
            wheel_torques,
            robot,
            surface,
            coupling,
        );
        s = rk4_combine(&s, &k1, &k2, &k3, &k4, h);
        check_finite(&s)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn robot() -> RobotParams {
        RobotParams::default_chassis()
    }

    fn coupling() -> CouplingMatrix {
        CouplingMatrix::from_robot(&robot())
    }

    fn surface(mu: f64) -> SurfaceParams {
        SurfaceParams::with_mu(mu).unwrap()
    }

    #[test]
    fn friction_decelerates_at_mu_g() {
        let state = RobotState {
            vx_b: 1.0,
            ..Default::default()
        };
        let (ax, ay, _) = friction_wrench(&state, &surface(0.4), &robot());
        assert_relative_eq!(ax, -0.4 * 9.81, max_relative = 1e-10);
        assert_eq!(ay, 0.0);
    }

    #[test]
    fn friction_vanishes_at_rest() {
        let state = RobotState::at_rest(0.3);
        assert_eq!(
            friction_wrench(&state, &surface(0.5), &robot()),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn friction_opposes_lateral_motion() {
        let state = RobotState {
            vy_b: 1.0,
            ..Default::default()
        };
        let (ax, ay, _) = friction_wrench(&state, &surface(0.4), &robot());
        assert_eq!(ax, 0.0);
        assert!(ay < 0.0);
    }

    #[test]
    fn coasting_without_friction_has_zero_acceleration() {
        let state = RobotState {
            vx_b: 0.7,
            vy_b: -0.4,
            omega: 2.0,
            ..Default::default()
        };
        let d = state_derivative(
            &state,
            &WheelVector::zeros(),
            &robot(),
            &surface(0.0),
            &coupling(),
        );
        assert_eq!((d.dvx_b, d.dvy_b, d.domega), (0.0, 0.0, 0.0));
    }

    #[test]
    fn equal_torques_spin_and_push_along_x() {
        let state = RobotState::default();
        let torques = WheelVector::from_element(0.1);
        let d = state_derivative(&state, &torques, &robot(), &surface(0.0), &coupling());
        assert_abs_diff_eq!(d.domega, 64.756, epsilon = 1e-3);
        // The 33°/45° wheel split is fore-aft asymmetric, so equal torques
        // also produce a small surge force.
        assert_abs_diff_eq!(d.dvx_b, 0.853, epsilon = 1e-3);
        assert_abs_diff_eq!(d.dvy_b, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pose_rates_rotate_with_heading() {
        let state = RobotState {
            theta: FRAC_PI_2,
            vx_b: 1.0,
            ..Default::default()
        };
        let d = state_derivative(
            &state,
            &WheelVector::zeros(),
            &robot(),
            &surface(0.0),
            &coupling(),
        );
        assert_abs_diff_eq!(d.dx, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dy, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_velocity_transport_is_exact() {
        let state = RobotState {
            vx_b: 1.0,
            ..Default::default()
        };
        let s = rk4_step(
            &state,
            &WheelVector::zeros(),
            1.0,
            600,
            &robot(),
            &surface(0.0),
            &coupling(),
        )
        .unwrap();
        assert_abs_diff_eq!(s.x, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_torque_spin_up_matches_closed_form() {
        let robot = robot();
        let torques = WheelVector::from_element(0.05);
        let state = RobotState::default();
        let t = 0.5;
        let s = rk4_step(&state, &torques, t, 300, &robot, &surface(0.0), &coupling()).unwrap();
        let omega_exact =
            robot.wheel_offset / robot.inertia * (4.0 * 0.05 / robot.wheel_radius) * t;
        assert_relative_eq!(s.omega, omega_exact, max_relative = 1e-8);
    }

    /// A driven, frictionful trajectory that stays clear of the friction
    /// regularization corners, reused by the convergence tests.
    pub(crate) fn convergence_setup() -> (
        RobotParams,
        SurfaceParams,
        CouplingMatrix,
        RobotState,
        WheelVector,
    ) {
        let robot = RobotParams::default_chassis();
        let surface = SurfaceParams::new(0.45, 0.45, 9.81, 0.02, 0.02).unwrap();
        let coupling = CouplingMatrix::from_robot(&robot);
        let state = RobotState {
            x: 0.0,
            y: 0.0,
            theta: 0.3,
            vx_b: 0.3,
            vy_b: -0.2,
            omega: 1.0,
        };
        let torques = WheelVector::from_column_slice(&[-0.10, -0.10, 0.20, 0.20]);
        (robot, surface, coupling, state, torques)
    }

    fn endpoint_error(a: &RobotState, b: &RobotState) -> f64 {
        ((a.x - b.x).powi(2)
            + (a.y - b.y).powi(2)
            + (a.theta - b.theta).powi(2)
            + (a.vx_b - b.vx_b).powi(2)
            + (a.vy_b - b.vy_b).powi(2)
            + (a.omega - b.omega).powi(2))
        .sqrt()
    }

    #[test]
    fn halving_the_substep_cuts_the_error_sixteen_fold() {
        let (robot, surface, coupling, state, torques) = convergence_setup();
        let reference = rk4_step(&state, &torques, 1.0, 3200, &robot, &surface, &coupling).unwrap();
        let coarse = rk4_step(&state, &torques, 1.0, 16, &robot, &surface, &coupling).unwrap();
        let fine = rk4_step(&state, &torques, 1.0, 32, &robot, &surface, &coupling).unwrap();
        let ratio = endpoint_error(&coarse, &reference) / endpoint_error(&fine, &reference);
        assert!((12.0..=20.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn divergence_reports_the_field() {
        let state = RobotState::default();
        let torques = WheelVector::from_element(1e308);
        let err = rk4_step(
            &state,
            &torques,
            1.0,
            4,
            &robot(),
            &surface(0.0),
            &coupling(),
        )
        .unwrap_err();
        assert!(!err.field.is_empty());
        assert!(err.to_string().contains("non-finite"));
    }

    // The wheel layout maps to itself under φ → 180° − φ with the pairs
    // (1↔2, 3↔4) swapped. Mirroring the scenario accordingly — world
    // x → −x, heading negated, swapped and negated torques — must mirror
    // the resulting path exactly.
    #[test]
    fn mirrored_inputs_mirror_the_path() {
        let robot = robot();
        let surface = surface(0.45);
        let coupling = coupling();
        let torque_schedule = [
            [0.06, -0.02, 0.09, 0.01],
            [-0.04, 0.08, -0.03, 0.07],
            [0.02, 0.02, -0.06, 0.05],
        ];
        let mut a = RobotState {
            theta: 0.4,
            vx_b: 0.25,
            vy_b: 0.1,
            omega: 0.8,
            ..Default::default()
        };
        let mut b = RobotState {
            theta: -0.4,
            vx_b: -0.25,
            vy_b: 0.1,
            omega: -0.8,
            ..Default::default()
        };
        for taus in torque_schedule {
            let ta = WheelVector::from_column_slice(&taus);
            let tb = WheelVector::from_column_slice(&[-taus[1], -taus[0], -taus[3], -taus[2]]);
            a = rk4_step(&a, &ta, 0.2, 120, &robot, &surface, &coupling).unwrap();
            b = rk4_step(&b, &tb, 0.2, 120, &robot, &surface, &coupling).unwrap();
            assert_abs_diff_eq!(b.x, -a.x, epsilon = 1e-9);
            assert_abs_diff_eq!(b.y, a.y, epsilon = 1e-9);
            assert_abs_diff_eq!(b.theta, -a.theta, epsilon = 1e-9);
            assert_abs_diff_eq!(b.vx_b, -a.vx_b, epsilon = 1e-9);
            assert_abs_diff_eq!(b.vy_b, a.vy_b, epsilon = 1e-9);
            assert_abs_diff_eq!(b.omega, -a.omega, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn world_speed_equals_body_speed(
            theta in -10.0f64..10.0, vx in -3.0f64..3.0, vy in -3.0f64..3.0,
        ) {
            let state = RobotState { theta, vx_b: vx, vy_b: vy, ..Default::default() };
            let (wx, wy) = state.world_velocity();
            let world = (wx * wx + wy * wy).sqrt();
            let body = (vx * vx + vy * vy).sqrt();
            prop_assert!((world - body).abs() <= 1e-12 * body.max(1.0));
        }

        #[test]
        fn friction_power_is_never_positive(
            vx in -4.0f64..4.0, vy in -4.0f64..4.0, om in -10.0f64..10.0, mu in 0.0f64..1.0,
        ) {
            let state = RobotState { vx_b: vx, vy_b: vy, omega: om, ..Default::default() };
            let (ax, ay, torque) = friction_wrench(&state, &surface(mu), &robot());
            prop_assert!(ax * vx + ay * vy <= 0.0);
            prop_assert!(torque * om <= 0.0);
        }

        #[test]
        fn unforced_motion_dissipates_energy(
            vx in -4.0f64..4.0, vy in -4.0f64..4.0, om in -8.0f64..8.0,
            mu in 0.05f64..1.0, theta in -3.0f64..3.0,
        ) {
            let robot = robot();
            let surface = surface(mu);
            let coupling = coupling();
            let mut state = RobotState { theta, vx_b: vx, vy_b: vy, omega: om, ..Default::default() };
            let mut energy = state.kinetic_energy(&robot);
            for _ in 0..20 {
                state = rk4_step(&state, &WheelVector::zeros(), 1.0 / 600.0, 10, &robot, &surface, &coupling).unwrap();
                let next = state.kinetic_energy(&robot);
                prop_assert!(next <= energy * (1.0 + 1e-12) + 1e-15);
                energy = next;
            }
        }
    }
}
