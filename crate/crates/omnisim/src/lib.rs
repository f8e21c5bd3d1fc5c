//! Deterministic closed-loop simulation of a four-wheel omni-directional
//! mobile robot driven by brushless motors.
//!
//! The crate models the chassis rigid-body dynamics under wheel drive
//! forces and surface-dependent Coulomb friction, the quasi-static motor
//! torque law with back-EMF, quantizing encoders, and two discrete
//! wheel-speed controllers: a torque controller (PI plus a model-based
//! torque-to-duty converter) and a plain PI duty controller. The simulation
//! harness runs identical velocity profiles across surfaces of differing
//! friction and measures how much the resulting paths and speed tracking
//! depend on the surface — the torque controller's whole point is that
//! they barely do.

pub mod cli;
pub mod control;
pub mod dynamics;
pub mod kinematics;
pub mod motor;
pub mod params;
pub mod sim;

pub use control::{ControllerKind, FirFilter, PiController, WheelController};
pub use dynamics::{RobotState, StateDerivative};
pub use kinematics::{CouplingMatrix, ScenarioCase, TrapezoidProfile, Twist, WheelVector};
pub use motor::{DutyCycle, EncoderState};
pub use params::{load_params, LoopRates, MotorParams, ParamsBundle, RobotParams, SurfaceParams};
pub use sim::{run_scenario, Scenario, TrajectoryLog};
