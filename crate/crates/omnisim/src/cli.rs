//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 for configuration/usage problems, 2 when the
//! integration diverges. Parameters come from `--params <path>`, falling
//! back to the `OMNISIM_PARAMS` environment variable and then to the
//! embedded defaults. Every command echoes its effective configuration into
//! a manifest so a run can be reproduced exactly.

use crate::control::ControllerKind;
use crate::kinematics::ScenarioCase;
use crate::params::{load_params, ParamsBundle, ParamsError, DEFAULT_CONFIG};
use crate::sim::{
    self, compare_surfaces_with_logs, run_scenario, tune_gains, RobustnessReport, Scenario,
    SearchSpec, DEFAULT_DURATION,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const PARAMS_ENV: &str = "OMNISIM_PARAMS";

#[derive(Debug, Parser)]
#[command(
    name = "omnisim",
    version,
    about = "Deterministic closed-loop simulator for a four-wheel omni-directional robot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write its logs
    Run(RunArgs),
    /// Run one scenario across several surfaces and compare the paths
    Compare(CompareArgs),
    /// Grid-search PI gains on one surface
    Tune(TuneArgs),
    /// Emit the desired wheel-speed profiles for a case
    Profiles(ProfilesArgs),
    /// Load and validate a parameter file
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Parameter file (defaults to $OMNISIM_PARAMS, then built-ins)
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControllerArg {
    Torque,
    Pi,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Torque => ControllerKind::Torque,
            ControllerArg::Pi => ControllerKind::PlainPi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CompareControllerArg {
    Both,
    Torque,
    Pi,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Built-in case 1-4, or "custom" for the params file's [case]
    #[arg(long, default_value = "1")]
    case: String,
    /// Surface name (defaults to the first one in the params)
    #[arg(long)]
    surface: Option<String>,
    #[arg(long, value_enum, default_value_t = ControllerArg::Torque)]
    controller: ControllerArg,
    /// Gains as "kp,ki" (defaults to the params file's [control])
    #[arg(long)]
    gains: Option<String>,
    /// Simulated time in seconds
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "1")]
    case: String,
    /// Comma-separated surface names (defaults to all loaded surfaces)
    #[arg(long)]
    surfaces: Option<String>,
    #[arg(long, value_enum, default_value_t = CompareControllerArg::Both)]
    controller: CompareControllerArg,
    #[arg(long)]
    gains: Option<String>,
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "1")]
    case: String,
    #[arg(long)]
    surface: Option<String>,
    #[arg(long, value_enum, default_value_t = ControllerArg::Torque)]
    controller: ControllerArg,
    /// Comma-separated kp candidates
    #[arg(long)]
    kp_grid: Option<String>,
    /// Comma-separated ki candidates
    #[arg(long)]
    ki_grid: Option<String>,
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Args)]
struct ProfilesArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "1")]
    case: String,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Diverged(String),
}

impl From<ParamsError> for CliError {
    fn from(e: ParamsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io error: {e}"))
    }
}

impl From<sim::SimError> for CliError {
    fn from(e: sim::SimError) -> Self {
        match e {
            sim::SimError::Diverged { .. } => CliError::Diverged(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Parses the process arguments, runs the selected command, and returns
/// the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Profiles(args) => cmd_profiles(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Diverged(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn load_bundle(flag: &Option<PathBuf>) -> Result<(ParamsBundle, String), CliError> {
    let path = flag
        .clone()
        .or_else(|| std::env::var_os(PARAMS_ENV).map(PathBuf::from));
    match path {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            Ok((load_params(&text)?, p.display().to_string()))
        }
        None => Ok((load_params(DEFAULT_CONFIG)?, "<builtin>".to_string())),
    }
}

fn resolve_case(label: &str, params: &ParamsBundle) -> Result<ScenarioCase, CliError> {
    if label == "custom" {
        let cfg = params.custom_case.as_ref().ok_or_else(|| {
            CliError::Config("--case custom requires a [case] section in the params file".into())
        })?;
        return Ok(ScenarioCase::from_config(cfg)?);
    }
    let n: u8 = label
        .parse()
        .map_err(|_| CliError::Config(format!("--case must be 1..4 or 'custom', got '{label}'")))?;
    ScenarioCase::preset(n)
        .ok_or_else(|| CliError::Config(format!("--case must be 1..4 or 'custom', got '{label}'")))
}

fn resolve_surface(flag: &Option<String>, params: &ParamsBundle) -> Result<String, CliError> {
    let name = match flag {
        Some(n) => n.clone(),
        None => params
            .surface_names()
            .first()
            .cloned()
            .ok_or_else(|| CliError::Config("no surfaces defined".into()))?,
    };
    if params.surface(&name).is_none() {
        return Err(CliError::Config(format!(
            "unknown surface '{}'; available: {}",
            name,
            params.surface_names().join(", ")
        )));
    }
    Ok(name)
}

fn parse_gains(flag: &Option<String>, params: &ParamsBundle) -> Result<(f64, f64), CliError> {
    match flag {
        None => Ok((params.control.kp, params.control.ki)),
        Some(text) => {
            let parts: Vec<&str> = text.split(',').collect();
            if parts.len() != 2 {
                return Err(CliError::Config(format!(
                    "--gains must be 'kp,ki', got '{text}'"
                )));
            }
            let kp: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad kp in --gains '{text}'")))?;
            let ki: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad ki in --gains '{text}'")))?;
            if kp < 0.0 || ki < 0.0 {
                return Err(CliError::Config("gains must be >= 0".into()));
            }
            Ok((kp, ki))
        }
    }
}

fn parse_grid(flag: &Option<String>, name: &str) -> Result<Option<Vec<f64>>, CliError> {
    match flag {
        None => Ok(None),
        Some(text) => {
            let values: Result<Vec<f64>, _> = text
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<f64>())
                .collect();
            let values =
                values.map_err(|_| CliError::Config(format!("bad value in --{name} '{text}'")))?;
            if values.is_empty() {
                return Err(CliError::Config(format!("--{name} is empty")));
            }
            if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(CliError::Config(format!(
                    "--{name} values must be finite and >= 0"
                )));
            }
            Ok(Some(values))
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Stub plotting script written next to the CSVs; the simulator itself has
/// no graphics dependency.
const PLOT_STUB: &str = r#"#!/usr/bin/env python3
"""Quick-look plots for the CSV files in this directory."""
import glob
import os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def load(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
    return header, list(zip(*rows)) if rows else ([], [])


poses = sorted(glob.glob(os.path.join(here, "pose*.csv")))
if poses:
    plt.figure()
    for path in poses:
        _, cols = load(path)
        label = os.path.basename(path)[:-4].replace("pose_", "") or "pose"
        plt.plot(cols[1], cols[2], label=label)
    plt.axis("equal")
    plt.xlabel("x [m]")
    plt.ylabel("y [m]")
    plt.legend()
    plt.title("robot path")

for path in sorted(glob.glob(os.path.join(here, "wheels*.csv"))):
    _, cols = load(path)
    plt.figure()
    for wheel in range(4):
        t = [cols[1][i] for i in range(len(cols[0])) if cols[2][i] == wheel]
        want = [cols[3][i] for i in range(len(cols[0])) if cols[2][i] == wheel]
        got = [cols[5][i] for i in range(len(cols[0])) if cols[2][i] == wheel]
        plt.plot(t, want, "--", label=f"wheel {wheel + 1} desired")
        plt.plot(t, got, label=f"wheel {wheel + 1} filtered")
    plt.xlabel("t [s]")
    plt.ylabel("motor speed [rad/s]")
    plt.legend(fontsize=6)
    plt.title(os.path.basename(path))

for path in sorted(glob.glob(os.path.join(here, "profiles.csv"))):
    _, cols = load(path)
    plt.figure()
    for wheel in range(4):
        plt.plot(cols[0], cols[wheel + 1], label=f"wheel {wheel + 1}")
    plt.xlabel("t [s]")
    plt.ylabel("desired wheel speed [rad/s]")
    plt.legend()
    plt.title("input velocity profiles")

plt.show()
"#;

fn manifest_header(command: &str, params_source: &str, params: &ParamsBundle) -> String {
    let mut doc = String::new();
    let _ = writeln!(doc, "[invocation]");
    let _ = writeln!(doc, "command = {command:?}");
    let _ = writeln!(doc, "params_source = {params_source:?}");
    let _ = writeln!(doc);
    doc + &params.to_toml_string()
}

fn case_manifest(label: &str, case: &ScenarioCase) -> String {
    let mut doc = String::new();
    let _ = writeln!(doc, "\n[scenario.case]");
    let _ = writeln!(doc, "label = {label:?}");
    let _ = writeln!(doc, "theta0_deg = {}", case.theta0_deg());
    let _ = writeln!(doc, "v_peak = {}", case.profile.v_peak);
    let _ = writeln!(doc, "accel = {}", case.profile.accel);
    let _ = writeln!(doc, "cruise_duration = {}", case.profile.cruise_duration);
    let _ = writeln!(
        doc,
        "heading = [{}, {}]",
        case.heading()[0],
        case.heading()[1]
    );
    doc
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (params, source) = load_bundle(&args.common.params)?;
    let case = resolve_case(&args.case, &params)?;
    let surface = resolve_surface(&args.surface, &params)?;
    let (kp, ki) = parse_gains(&args.gains, &params)?;
    let duration = args.duration.unwrap_or(DEFAULT_DURATION);
    if !duration.is_finite() || duration <= 0.0 {
        return Err(CliError::Config("--duration must be > 0".into()));
    }

    let controller: ControllerKind = args.controller.into();
    let scenario = Scenario::new(case, &surface, controller, &params)
        .with_gains(kp, ki)
        .with_duration(duration);
    let log = run_scenario(&scenario, &params)?;

    let mut wheels = Vec::new();
    sim::write_wheels_csv(&log, &mut wheels).map_err(CliError::from)?;
    let mut pose = Vec::new();
    sim::write_pose_csv(&log, &mut pose).map_err(CliError::from)?;

    let mut manifest = manifest_header("run", &source, &params);
    manifest.push_str(&case_manifest(&args.case, &case));
    let _ = writeln!(manifest, "\n[scenario]");
    let _ = writeln!(manifest, "surface = {surface:?}");
    let _ = writeln!(manifest, "controller = {:?}", controller.label());
    let _ = writeln!(manifest, "kp = {kp}");
    let _ = writeln!(manifest, "ki = {ki}");
    let _ = writeln!(manifest, "duration = {duration}");
    let _ = writeln!(manifest, "pose_hz = {}", scenario.pose_hz);

    let dir = &args.common.out;
    write_file(dir, "wheels.csv", &wheels)?;
    write_file(dir, "pose.csv", &pose)?;
    write_file(dir, "manifest.toml", manifest.as_bytes())?;
    write_file(dir, "plot.py", PLOT_STUB.as_bytes())?;
    println!(
        "run complete: {} ticks, final pose ({:.4}, {:.4}, {:.4}); logs in {}",
        log.wheels.len() / 4,
        log.final_state.x,
        log.final_state.y,
        log.final_state.theta,
        dir.display()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let (params, source) = load_bundle(&args.common.params)?;
    let case = resolve_case(&args.case, &params)?;
    let (kp, ki) = parse_gains(&args.gains, &params)?;
    let duration = args.duration.unwrap_or(DEFAULT_DURATION);
    let surfaces: Vec<String> = match &args.surfaces {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => params.surface_names(),
    };
    if surfaces.len() < 2 {
        return Err(CliError::Config("need >= 2 surfaces to compare".into()));
    }
    for name in &surfaces {
        if params.surface(name).is_none() {
            return Err(CliError::Config(format!(
                "unknown surface '{}'; available: {}",
                name,
                params.surface_names().join(", ")
            )));
        }
    }

    let kinds: Vec<ControllerKind> = match args.controller {
        CompareControllerArg::Both => vec![ControllerKind::Torque, ControllerKind::PlainPi],
        CompareControllerArg::Torque => vec![ControllerKind::Torque],
        CompareControllerArg::Pi => vec![ControllerKind::PlainPi],
    };

    let dir = &args.common.out;
    let mut reports: Vec<RobustnessReport> = Vec::new();
    for kind in &kinds {
        let (report, logs) =
            compare_surfaces_with_logs(&case, *kind, (kp, ki), &surfaces, duration, &params)?;
        for (name, log) in surfaces.iter().zip(&logs) {
            let mut wheels = Vec::new();
            sim::write_wheels_csv(log, &mut wheels).map_err(CliError::from)?;
            let mut pose = Vec::new();
            sim::write_pose_csv(log, &mut pose).map_err(CliError::from)?;
            write_file(
                dir,
                &format!("wheels_{}_{}.csv", kind.label(), name),
                &wheels,
            )?;
            write_file(dir, &format!("pose_{}_{}.csv", kind.label(), name), &pose)?;
        }
        reports.push(report);
    }

    let refs: Vec<&RobustnessReport> = reports.iter().collect();
    let mut kv = Vec::new();
    sim::write_report_kv(&refs, &mut kv).map_err(CliError::from)?;
    let mut txt = Vec::new();
    sim::write_report_txt(&refs, &mut txt).map_err(CliError::from)?;

    let mut manifest = manifest_header("compare", &source, &params);
    manifest.push_str(&case_manifest(&args.case, &case));
    let _ = writeln!(manifest, "\n[scenario]");
    let _ = writeln!(manifest, "surfaces = {surfaces:?}");
    let _ = writeln!(
        manifest,
        "controllers = {:?}",
        kinds.iter().map(|k| k.label()).collect::<Vec<_>>()
    );
    let _ = writeln!(manifest, "kp = {kp}");
    let _ = writeln!(manifest, "ki = {ki}");
    let _ = writeln!(manifest, "duration = {duration}");

    write_file(dir, "report.kv", &kv)?;
    write_file(dir, "report.txt", &txt)?;
    write_file(dir, "manifest.toml", manifest.as_bytes())?;
    write_file(dir, "plot.py", PLOT_STUB.as_bytes())?;
    print!("{}", String::from_utf8_lossy(&txt));
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<(), CliError> {
    let (params, source) = load_bundle(&args.common.params)?;
    let case = resolve_case(&args.case, &params)?;
    let surface = resolve_surface(&args.surface, &params)?;
    let duration = args.duration.unwrap_or(DEFAULT_DURATION);
    let default_grid = SearchSpec::default_grid();
    let search = SearchSpec {
        kp_grid: parse_grid(&args.kp_grid, "kp-grid")?.unwrap_or(default_grid.kp_grid),
        ki_grid: parse_grid(&args.ki_grid, "ki-grid")?.unwrap_or(default_grid.ki_grid),
    };
    let controller: ControllerKind = args.controller.into();
    let tuned = tune_gains(&case, &surface, controller, &search, duration, &params)?;

    let mut kv = String::new();
    let _ = writeln!(kv, "kp={}", sim::format_float(tuned.kp));
    let _ = writeln!(kv, "ki={}", sim::format_float(tuned.ki));
    let _ = writeln!(kv, "score={}", sim::format_float(tuned.score));

    let mut manifest = manifest_header("tune", &source, &params);
    manifest.push_str(&case_manifest(&args.case, &case));
    let _ = writeln!(manifest, "\n[scenario]");
    let _ = writeln!(manifest, "surface = {surface:?}");
    let _ = writeln!(manifest, "controller = {:?}", controller.label());
    let _ = writeln!(manifest, "kp_grid = {:?}", search.kp_grid);
    let _ = writeln!(manifest, "ki_grid = {:?}", search.ki_grid);
    let _ = writeln!(manifest, "duration = {duration}");

    let dir = &args.common.out;
    write_file(dir, "tuned.kv", kv.as_bytes())?;
    write_file(dir, "manifest.toml", manifest.as_bytes())?;
    println!(
        "tuned {} on {}: kp = {}, ki = {}, tracking rms = {:.6} rad/s",
        controller, surface, tuned.kp, tuned.ki, tuned.score
    );
    Ok(())
}

fn cmd_profiles(args: ProfilesArgs) -> Result<(), CliError> {
    let (params, source) = load_bundle(&args.common.params)?;
    let case = resolve_case(&args.case, &params)?;
    let mut csv = Vec::new();
    sim::write_profiles_csv(&case, &params, &mut csv).map_err(CliError::from)?;

    let mut manifest = manifest_header("profiles", &source, &params);
    manifest.push_str(&case_manifest(&args.case, &case));

    let dir = &args.common.out;
    write_file(dir, "profiles.csv", &csv)?;
    write_file(dir, "manifest.toml", manifest.as_bytes())?;
    write_file(dir, "plot.py", PLOT_STUB.as_bytes())?;
    println!(
        "profiles written for case {}: peak body speed {} m/s over {:.4} s",
        args.case,
        case.profile.v_peak,
        case.profile.total_duration()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let (params, source) = load_bundle(&args.params)?;
    println!("params ok ({source})");
    println!(
        "  robot: mass {} kg, inertia {} kg m^2, wheel offset {} m, wheel radius {} m, gear {}",
        params.robot.mass,
        params.robot.inertia,
        params.robot.wheel_offset,
        params.robot.wheel_radius,
        params.robot.gear_ratio
    );
    println!(
        "  motor: Vcc {} V, stall {:.5} N m, no-load {:.2} rad/s, kn {:.4}, km {:.6}, R {:.4}",
        params.motor.supply_vcc,
        params.motor.stall_torque(),
        params.motor.no_load_speed(),
        params.motor.speed_constant(),
        params.motor.torque_constant(),
        params.motor.resistance()
    );
    println!("  surfaces: {}", params.surface_names().join(", "));
    println!(
        "  loop: {} Hz control, {} physics substeps",
        params.rates.control_hz, params.rates.physics_substeps
    );
    println!(
        "  control: kp {}, ki {}, {} filter taps, anti-windup {}",
        params.control.kp, params.control.ki, params.control.fir_taps, params.control.anti_windup
    );
    Ok(())
}
