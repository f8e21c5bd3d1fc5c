//! Physical constants of the chassis, motors, and floor surfaces, and the
//! structured config file they are loaded from.
//!
//! Everything is SI internally (kg, m, rad, N·m, V). The config file takes
//! wheel angles in degrees; they are converted once at load time and the
//! original degree values are kept so that serializing a loaded bundle
//! reproduces the file bit for bit.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// The parameter set shipped with the binary, used when neither `--params`
/// nor the `OMNISIM_PARAMS` environment variable points at a file.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Validation(String),
}

fn require(cond: bool, msg: &str) -> Result<(), ParamsError> {
    if cond {
        Ok(())
    } else {
        Err(ParamsError::Validation(msg.to_string()))
    }
}

/// Chassis geometry and mass properties.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    /// Total mass (kg).
    pub mass: f64,
    /// Yaw inertia about the chassis center (kg·m²).
    pub inertia: f64,
    /// Distance from the chassis center to each wheel contact (m).
    pub wheel_offset: f64,
    /// Wheel radius (m).
    pub wheel_radius: f64,
    /// Motor-shaft speed per wheel speed (1 = direct drive).
    pub gear_ratio: f64,
    wheel_angles_deg: [f64; 4],
    wheel_angles: [f64; 4],
}

impl RobotParams {
    pub fn new(
        mass: f64,
        inertia: f64,
        wheel_offset: f64,
        wheel_angles_deg: [f64; 4],
        wheel_radius: f64,
        gear_ratio: f64,
    ) -> Result<Self, ParamsError> {
        require(mass > 0.0, "robot.mass_m must be > 0")?;
        require(inertia > 0.0, "robot.inertia_j must be > 0")?;
        require(wheel_offset > 0.0, "robot.wheel_offset_d must be > 0")?;
        require(wheel_radius > 0.0, "robot.wheel_radius_r must be > 0")?;
        require(gear_ratio > 0.0, "robot.gear_ratio must be > 0")?;
        require(
            wheel_angles_deg.iter().all(|a| a.is_finite()),
            "robot.wheel_angles_deg must be finite",
        )?;
        let wheel_angles = wheel_angles_deg.map(f64::to_radians);
        Ok(Self {
            mass,
            inertia,
            wheel_offset,
            wheel_radius,
            gear_ratio,
            wheel_angles_deg,
            wheel_angles,
        })
    }

    /// Wheel mount angles in radians, measured from the chassis x-axis.
    pub fn wheel_angles(&self) -> &[f64; 4] {
        &self.wheel_angles
    }

    /// The angles exactly as they appeared in the config file (degrees).
    pub fn wheel_angles_deg(&self) -> &[f64; 4] {
        &self.wheel_angles_deg
    }

    /// The default chassis constants.
    pub fn default_chassis() -> Self {
        Self::new(
            1.5,
            0.0192,
            0.07895,
            [33.0, 147.0, 225.0, 315.0],
            0.0254,
            1.0,
        )
        .expect("default chassis constants are valid")
    }
}

/// Brushless motor constants.
///
/// The config supplies the supply voltage and two lumped constants:
/// `a = km/R` (torque per applied volt) and `b = km/(R·kn)` (torque lost per
/// rad/s of shaft speed). The individual constants are split back out with
/// the ideal-motor identity `km·kn = 1`, which makes the electrical power
/// balance close exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MotorParams {
    /// Driver supply voltage (V).
    pub supply_vcc: f64,
    /// Torque per applied volt, `km/R` (N·m/V).
    pub torque_per_volt: f64,
    /// Back-EMF torque loss per rad/s, `km/(R·kn)` (N·m·s/rad).
    pub damping: f64,
    speed_constant: f64,
    torque_constant: f64,
    resistance: f64,
}

/// Splits the lumped constants `a = km/R` and `b = km/(R·kn)` into
/// `(kn, km, R)` using `km·kn = 1`.
pub fn derive_motor_constants(a: f64, b: f64) -> Result<(f64, f64, f64), ParamsError> {
    require(a > 0.0, "motor.torque_per_volt_a must be > 0")?;
    require(b > 0.0, "motor.damping_b must be > 0")?;
    let kn = a / b;
    let km = b / a;
    let r = km / a;
    Ok((kn, km, r))
}

impl MotorParams {
    pub fn from_lumped(supply_vcc: f64, a: f64, b: f64) -> Result<Self, ParamsError> {
        require(supply_vcc > 0.0, "motor.supply_vcc must be > 0")?;
        let (speed_constant, torque_constant, resistance) = derive_motor_constants(a, b)?;
        Ok(Self {
            supply_vcc,
            torque_per_volt: a,
            damping: b,
            speed_constant,
            torque_constant,
            resistance,
        })
    }

    /// Speed constant `kn` (rad/(s·V)).
    pub fn speed_constant(&self) -> f64 {
        self.speed_constant
    }

    /// Torque constant `km` (N·m/A).
    pub fn torque_constant(&self) -> f64 {
        self.torque_constant
    }

    /// Coil resistance `R` (Ω).
    pub fn resistance(&self) -> f64 {
        self.resistance
    }

    /// Torque at full duty and zero speed (N·m).
    pub fn stall_torque(&self) -> f64 {
        self.torque_per_volt * self.supply_vcc
    }

    /// Speed at which back-EMF cancels the full supply voltage (rad/s).
    pub fn no_load_speed(&self) -> f64 {
        self.speed_constant * self.supply_vcc
    }

    /// The default motor constants.
    pub fn default_motor() -> Self {
        Self::from_lumped(14.8, 0.02125, 0.0005426).expect("default motor constants are valid")
    }
}

/// Floor surface constants for the regularized Coulomb friction model.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceParams {
    /// Kinetic friction coefficient acting on chassis translation.
    pub mu_linear: f64,
    /// Traction coefficient acting on chassis rotation.
    pub mu_rotational: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Smoothing width of the translational friction sign (m/s).
    pub eps_linear: f64,
    /// Smoothing width of the rotational traction sign (rad/s).
    pub eps_rotational: f64,
}

impl SurfaceParams {
    pub fn new(
        mu_linear: f64,
        mu_rotational: f64,
        gravity: f64,
        eps_linear: f64,
        eps_rotational: f64,
    ) -> Result<Self, ParamsError> {
        require(mu_linear >= 0.0, "surface.mu_linear must be >= 0")?;
        require(mu_rotational >= 0.0, "surface.mu_rotational must be >= 0")?;
        require(gravity > 0.0, "surface.gravity_g must be > 0")?;
        require(eps_linear > 0.0, "surface.regularization_eps must be > 0")?;
        require(
            eps_rotational > 0.0,
            "surface.regularization_eps_rot must be > 0",
        )?;
        Ok(Self {
            mu_linear,
            mu_rotational,
            gravity,
            eps_linear,
            eps_rotational,
        })
    }

    /// A surface with the given friction coefficient and default gravity
    /// and regularization widths.
    pub fn with_mu(mu: f64) -> Result<Self, ParamsError> {
        Self::new(
            mu,
            mu,
            DEFAULT_GRAVITY,
            DEFAULT_EPS_LINEAR,
            DEFAULT_EPS_ROTATIONAL,
        )
    }

    /// Frictionless floor, useful in tests.
    pub fn frictionless() -> Self {
        Self::with_mu(0.0).expect("zero friction is valid")
    }
}

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_EPS_LINEAR: f64 = 1e-3;
pub const DEFAULT_EPS_ROTATIONAL: f64 = 1e-2;

/// Control loop and physics integration rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopRates {
    /// Controller tick rate (Hz).
    pub control_hz: f64,
    /// Plant integration substeps per controller tick.
    pub physics_substeps: u32,
}

impl LoopRates {
    pub fn new(control_hz: f64, physics_substeps: u32) -> Result<Self, ParamsError> {
        require(
            control_hz > 0.0 && control_hz.is_finite(),
            "loop.control_hz must be > 0",
        )?;
        require(physics_substeps >= 1, "loop.physics_substeps must be >= 1")?;
        Ok(Self {
            control_hz,
            physics_substeps,
        })
    }

    /// Controller tick period (s).
    pub fn period(&self) -> f64 {
        1.0 / self.control_hz
    }
}

impl Default for LoopRates {
    fn default() -> Self {
        Self {
            control_hz: 600.0,
            physics_substeps: 10,
        }
    }
}

/// Controller configuration shared by all four wheels.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    /// Proportional gain. Torque controller: N·m per rad/s of speed error.
    /// Plain PI: duty per rad/s.
    pub kp: f64,
    /// Integral gain applied to the running error sum, same units as `kp`.
    pub ki: f64,
    /// Length of the boxcar measurement filter.
    pub fir_taps: usize,
    /// Freeze the integrator while the duty output is pinned at a rail.
    pub anti_windup: bool,
}

impl ControlConfig {
    fn validate(&self) -> Result<(), ParamsError> {
        require(self.kp >= 0.0, "control.kp must be >= 0")?;
        require(self.ki >= 0.0, "control.ki must be >= 0")?;
        require(self.fir_taps >= 1, "control.fir_taps must be >= 1")?;
        Ok(())
    }
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            kp: 0.01,
            ki: 0.002,
            fir_taps: 8,
            anti_windup: true,
        }
    }
}

/// An optional user-defined scenario case, selected with `--case custom`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub theta0_deg: f64,
    pub v_peak: f64,
    pub accel: f64,
    pub cruise_duration: f64,
    pub heading: [f64; 2],
}

/// A validated, immutable parameter set. Safe to share read-only across
/// concurrent simulation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsBundle {
    pub robot: RobotParams,
    pub motor: MotorParams,
    pub surfaces: IndexMap<String, SurfaceParams>,
    pub rates: LoopRates,
    pub control: ControlConfig,
    pub custom_case: Option<CaseConfig>,
}

impl ParamsBundle {
    /// The parameter set embedded in the binary.
    pub fn builtin() -> Self {
        load_params(DEFAULT_CONFIG).expect("embedded default config is valid")
    }

    pub fn surface(&self, name: &str) -> Option<&SurfaceParams> {
        self.surfaces.get(name)
    }

    pub fn surface_names(&self) -> Vec<String> {
        self.surfaces.keys().cloned().collect()
    }

    /// Serializes the bundle in the config-file format, with every
    /// effective value (including defaults) written explicitly.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("bundle serializes")
    }
}

/// Parses and validates a config document.
///
/// Missing optional keys take their documented defaults; a missing required
/// key or a violated invariant is reported with the offending name.
pub fn load_params(text: &str) -> Result<ParamsBundle, ParamsError> {
    let raw: RawConfig = toml::from_str(text)?;
    raw.try_into()
}

// ---------------------------------------------------------------------------
// Serde mirror of the config file.

#[derive(Debug, Deserialize, Serialize)]
struct RawConfig {
    robot: RawRobot,
    motor: RawMotor,
    surfaces: IndexMap<String, RawSurface>,
    #[serde(rename = "loop", default)]
    rates: RawLoop,
    #[serde(default)]
    control: RawControl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    case: Option<RawCase>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRobot {
    mass_m: f64,
    inertia_j: f64,
    wheel_offset_d: f64,
    wheel_angles_deg: [f64; 4],
    wheel_radius_r: f64,
    #[serde(default = "one")]
    gear_ratio: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawMotor {
    supply_vcc: f64,
    torque_per_volt_a: f64,
    damping_b: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawSurface {
    mu_linear: f64,
    mu_rotational: f64,
    #[serde(default = "default_gravity")]
    gravity_g: f64,
    #[serde(default = "default_eps_linear")]
    regularization_eps: f64,
    #[serde(default = "default_eps_rotational")]
    regularization_eps_rot: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawLoop {
    #[serde(default = "default_control_hz")]
    control_hz: f64,
    #[serde(default = "default_substeps")]
    physics_substeps: u32,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawControl {
    #[serde(default = "default_kp")]
    kp: f64,
    #[serde(default = "default_ki")]
    ki: f64,
    #[serde(default = "default_fir_taps")]
    fir_taps: usize,
    #[serde(default = "default_anti_windup")]
    anti_windup: bool,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawCase {
    theta0_deg: f64,
    v_peak: f64,
    accel: f64,
    #[serde(default = "default_cruise")]
    cruise_duration: f64,
    #[serde(default = "default_heading")]
    heading: [f64; 2],
}

fn one() -> f64 {
    1.0
}
fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}
fn default_eps_linear() -> f64 {
    DEFAULT_EPS_LINEAR
}
fn default_eps_rotational() -> f64 {
    DEFAULT_EPS_ROTATIONAL
}
fn default_control_hz() -> f64 {
    600.0
}
fn default_substeps() -> u32 {
    10
}
fn default_kp() -> f64 {
    ControlConfig::default().kp
}
fn default_ki() -> f64 {
    ControlConfig::default().ki
}
fn default_fir_taps() -> usize {
    8
}
fn default_anti_windup() -> bool {
    true
}
fn default_cruise() -> f64 {
    2.0
}
fn default_heading() -> [f64; 2] {
    [1.0, 0.0]
}

impl Default for RawLoop {
    fn default() -> Self {
        Self {
            control_hz: default_control_hz(),
            physics_substeps: default_substeps(),
        }
    }
}

impl Default for RawControl {
    fn default() -> Self {
        let c = ControlConfig::default();
        Self {
            kp: c.kp,
            ki: c.ki,
            fir_taps: c.fir_taps,
            anti_windup: c.anti_windup,
        }
    }
}

impl TryFrom<RawConfig> for ParamsBundle {
    type Error = ParamsError;

    fn try_from(raw: RawConfig) -> Result<Self, ParamsError> {
        let robot = RobotParams::new(
            raw.robot.mass_m,
            raw.robot.inertia_j,
            raw.robot.wheel_offset_d,
            raw.robot.wheel_angles_deg,
            raw.robot.wheel_radius_r,
            raw.robot.gear_ratio,
        )?;
        let motor = MotorParams::from_lumped(
            raw.motor.supply_vcc,
            raw.motor.torque_per_volt_a,
            raw.motor.damping_b,
        )?;
        require(
            !raw.surfaces.is_empty(),
            "at least one [surfaces.<name>] is required",
        )?;
        let mut surfaces = IndexMap::new();
        for (name, s) in raw.surfaces {
            let params = SurfaceParams::new(
                s.mu_linear,
                s.mu_rotational,
                s.gravity_g,
                s.regularization_eps,
                s.regularization_eps_rot,
            )
            .map_err(|e| ParamsError::Validation(format!("surfaces.{name}: {e}")))?;
            surfaces.insert(name, params);
        }
        let rates = LoopRates::new(raw.rates.control_hz, raw.rates.physics_substeps)?;
        let control = ControlConfig {
            kp: raw.control.kp,
            ki: raw.control.ki,
            fir_taps: raw.control.fir_taps,
            anti_windup: raw.control.anti_windup,
        };
        control.validate()?;
        let custom_case = match raw.case {
            Some(c) => {
                require(c.v_peak > 0.0, "case.v_peak must be > 0")?;
                require(c.accel > 0.0, "case.accel must be > 0")?;
                require(
                    c.cruise_duration >= 0.0,
                    "case.cruise_duration must be >= 0",
                )?;
                Some(CaseConfig {
                    theta0_deg: c.theta0_deg,
                    v_peak: c.v_peak,
                    accel: c.accel,
                    cruise_duration: c.cruise_duration,
                    heading: c.heading,
                })
            }
            None => None,
        };
        Ok(ParamsBundle {
            robot,
            motor,
            surfaces,
            rates,
            control,
            custom_case,
        })
    }
}

impl From<&ParamsBundle> for RawConfig {
    fn from(b: &ParamsBundle) -> Self {
        RawConfig {
            robot: RawRobot {
                mass_m: b.robot.mass,
                inertia_j: b.robot.inertia,
                wheel_offset_d: b.robot.wheel_offset,
                wheel_angles_deg: *b.robot.wheel_angles_deg(),
                wheel_radius_r: b.robot.wheel_radius,
                gear_ratio: b.robot.gear_ratio,
            },
            motor: RawMotor {
                supply_vcc: b.motor.supply_vcc,
                torque_per_volt_a: b.motor.torque_per_volt,
                damping_b: b.motor.damping,
            },
            surfaces: b
                .surfaces
                .iter()
                .map(|(name, s)| {
                    (
                        name.clone(),
                        RawSurface {
                            mu_linear: s.mu_linear,
                            mu_rotational: s.mu_rotational,
                            gravity_g: s.gravity,
                            regularization_eps: s.eps_linear,
                            regularization_eps_rot: s.eps_rotational,
                        },
                    )
                })
                .collect(),
            rates: RawLoop {
                control_hz: b.rates.control_hz,
                physics_substeps: b.rates.physics_substeps,
            },
            control: RawControl {
                kp: b.control.kp,
                ki: b.control.ki,
                fir_taps: b.control.fir_taps,
                anti_windup: b.control.anti_windup,
            },
            case: b.custom_case.as_ref().map(|c| RawCase {
                theta0_deg: c.theta0_deg,
                v_peak: c.v_peak,
                accel: c.accel,
                cruise_duration: c.cruise_duration,
                heading: c.heading,
            }),
        }
    }
}
