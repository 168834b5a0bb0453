//! Scenario configs, runners and their on-disk artifacts.

pub mod estimator_eval;
pub mod sysid_run;
pub mod trace;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{hybrid_control_step, rate_limit, ControllerConfig, ControllerError, HybridSpec, RateLimit};
use crate::plant::{observe_relative_pose, Attachment, EnvironmentModel, Plant, PlantError, PlantState, ToolModel};
use crate::se3::{Frame, RigidTransform, RollPitchYaw, Se3Error};
use crate::stiffness::{StiffnessError, StiffnessParams};
use trace::{pose_coordinates, TraceRecord, TraceWriter};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("step {step} (t = {time:.4} s): {message}")]
    Step { step: usize, time: f64, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Stiffness(#[from] StiffnessError),
    #[error(transparent)]
    Se3(#[from] Se3Error),
}

/// Parses a JSON file strictly, reporting the failing field path and position.
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ScenarioError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ScenarioError::Config { path: path.display().to_string(), message: e.to_string() })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        ScenarioError::Config {
            path: path.display().to_string(),
            message: format!("line {} column {}: at `{}`: {inner}", inner.line(), inner.column(), e.path()),
        }
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ScenarioError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Hybrid force/pose control through the compliant bushing.
    ClosedLoop,
    /// Fixed trajectory through the compliant bushing.
    OpenLoopBaseline,
    /// Fixed trajectory with the tool rigidly attached.
    Welded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StiffnessConfig {
    #[serde(rename = "true")]
    pub truth: StiffnessParams,
    /// The controller's estimate; defaults to the true stiffness.
    #[serde(default)]
    pub estimate: Option<StiffnessParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_rate_limit")]
    pub rate_limit: Option<RateLimit>,
}

fn default_dt() -> f64 {
    ControllerConfig::new(StiffnessParams::default(), 0.0).dt
}

fn default_rate_limit() -> Option<RateLimit> {
    Some(RateLimit::default())
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self { dt: default_dt(), rate_limit: default_rate_limit() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub time: f64,
    /// Tool position target `ᵂx^C`, m.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub position: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl StartPose {
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_rpy(
            Frame::World,
            Frame::Gripper,
            &RollPitchYaw::new(self.rpy[0], self.rpy[1], self.rpy[2]),
            Vector3::from(self.position),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Initial gripper pose `ᵂX^T`.
    pub start: StartPose,
    pub spec: HybridSpec,
    /// Piecewise-linear tool position target; empty means `spec.position` throughout.
    #[serde(default)]
    pub waypoints: Vec<Waypoint>,
    /// Depth of the lowest contact point below the nominal plane for the
    /// open-loop and welded trajectories, m.
    #[serde(default = "default_open_loop_penetration")]
    pub open_loop_penetration: f64,
    /// Add the tool weight to the force sent through the bushing so that the
    /// contact force, rather than the bushing force, tracks the command.
    #[serde(default = "default_true")]
    pub compensate_tool_weight: bool,
}

fn default_true() -> bool {
    true
}

fn default_open_loop_penetration() -> f64 {
    1e-4
}

impl TaskConfig {
    /// Tool position target at time `t`.
    pub fn target(&self, t: f64) -> Vector3<f64> {
        let w = &self.waypoints;
        match w.len() {
            0 => self.spec.position,
            _ if t <= w[0].time => Vector3::from(w[0].position),
            n if t >= w[n - 1].time => Vector3::from(w[n - 1].position),
            _ => {
                let i = w.windows(2).position(|p| t < p[1].time).expect("inside the waypoint span");
                let (a, b) = (&w[i], &w[i + 1]);
                let s = (t - a.time) / (b.time - a.time);
                Vector3::from(a.position) * (1.0 - s) + Vector3::from(b.position) * s
            }
        }
    }

    pub fn spec_at(&self, t: f64) -> HybridSpec {
        HybridSpec { position: self.target(t), ..self.spec }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Simulated time, s.
    pub duration: f64,
    pub stiffness: StiffnessConfig,
    pub tool: ToolModel,
    pub environment: EnvironmentModel,
    #[serde(default)]
    pub controller: ControllerSettings,
    pub task: TaskConfig,
    /// Per-axis gripper position noise, m.
    #[serde(default)]
    pub repeatability_noise: f64,
    /// Trailing fraction of the run averaged for steady-state figures.
    #[serde(default = "default_steady_fraction")]
    pub steady_state_fraction: f64,
}

fn default_steady_fraction() -> f64 {
    0.2
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let cfg: Self = load_json(path)?;
        cfg.validate().map_err(|message| ScenarioError::Config { path: path.display().to_string(), message })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.steady_state_fraction > 0.0 && self.steady_state_fraction <= 1.0) {
            return Err(format!("steady_state_fraction must be in (0, 1], got {}", self.steady_state_fraction));
        }
        if self.task.waypoints.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err("waypoint times must increase".into());
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(format!("name {:?} must be a plain file name", self.name));
        }
        self.controller_config().validate().map_err(|e| e.to_string())?;
        self.tool.validate().map_err(|e| e.to_string())?;
        self.environment.validate().map_err(|e| e.to_string())
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            stiffness_estimate: self.stiffness.estimate.unwrap_or(self.stiffness.truth),
            dt: self.controller.dt,
            rate_limit: self.controller.rate_limit,
            horizon: self.duration,
        }
    }

    pub fn plant(&self) -> Result<Plant, PlantError> {
        let attachment = match self.mode {
            Mode::Welded => Attachment::Welded,
            _ => Attachment::Compliant(self.stiffness.truth),
        };
        Plant::new(attachment, self.tool.clone(), self.environment.clone(), self.repeatability_noise)
    }

    /// Spec handed to the controller at time `t`.
    pub fn controller_spec(&self, t: f64) -> HybridSpec {
        let mut spec = self.task.spec_at(t);
        if self.task.compensate_tool_weight && !spec.position_axes[2] {
            spec.force.z += self.tool.mass * self.environment.gravity;
        }
        spec
    }

    /// Commanded normal force on the environment, N.
    pub fn commanded_normal_force(&self) -> f64 {
        -self.task.spec.force.z
    }

    /// Fixed gripper trajectory for the baselines: start orientation, target
    /// x and y, and a height that puts the lowest contact point
    /// `open_loop_penetration` below the untilted plane.
    pub fn open_loop_pose(&self, t: f64) -> RigidTransform {
        let start = self.task.start.transform();
        let lowest = self
            .tool
            .contact_points
            .iter()
            .map(|p| (start.rotation * p).z)
            .fold(f64::INFINITY, f64::min);
        let target = self.task.target(t);
        let z = self.environment.plane_height - lowest - self.task.open_loop_penetration;
        RigidTransform::new(Frame::World, Frame::Gripper, start.rotation, Vector3::new(target.x, target.y, z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    /// Control steps taken, excluding the initial state.
    pub steps: usize,
    pub commanded_f_z: f64,
    /// Mean contact normal force over the steady-state window.
    pub steady_f_z: f64,
    /// Mean of `|τ_x|` over the steady-state window.
    pub steady_abs_tau_x: f64,
    /// `|steady_f_z − commanded_f_z| / commanded_f_z`.
    pub steady_f_z_relative_error: f64,
    pub max_abs_tau_x: f64,
    /// First step with a positive contact force.
    pub first_contact_step: Option<usize>,
    /// Earliest time after which the normal force stays within 5% of the command.
    pub convergence_time: Option<f64>,
    /// Largest step-to-step increase of `|f_z − commanded_f_z|` after first contact.
    pub max_error_increase_after_contact: f64,
}

impl Summary {
    pub fn from_trace(cfg: &ScenarioConfig, records: &[TraceRecord]) -> Self {
        let fd = cfg.commanded_normal_force();
        let n = records.len();
        let window = ((n as f64 * cfg.steady_state_fraction).ceil() as usize).clamp(1, n.max(1));
        let tail = &records[n.saturating_sub(window)..];
        let mean = |f: &dyn Fn(&TraceRecord) -> f64| tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64;
        let steady_f_z = mean(&|r| r.f_z);
        let steady_abs_tau_x = mean(&|r| r.tau_x.abs());
        let first_contact_step = records.iter().position(|r| r.f_z > 0.0);
        let error = |r: &TraceRecord| (r.f_z - fd).abs();
        let convergence_time = if fd > 0.0 {
            let last_bad = records.iter().rposition(|r| error(r) > 0.05 * fd);
            match last_bad {
                None => records.first().map(|r| r.time),
                Some(i) if i + 1 < n => Some(records[i + 1].time),
                Some(_) => None,
            }
        } else {
            None
        };
        let max_error_increase_after_contact = first_contact_step.map_or(0.0, |k| {
            records[k..]
                .windows(2)
                .map(|w| error(&w[1]) - error(&w[0]))
                .fold(0.0, f64::max)
        });
        Self {
            name: cfg.name.clone(),
            mode: cfg.mode,
            seed: cfg.seed,
            steps: n.saturating_sub(1),
            commanded_f_z: fd,
            steady_f_z,
            steady_abs_tau_x,
            steady_f_z_relative_error: if fd != 0.0 { (steady_f_z - fd).abs() / fd.abs() } else { steady_f_z.abs() },
            max_abs_tau_x: records.iter().map(|r| r.tau_x.abs()).fold(0.0, f64::max),
            first_contact_step,
            convergence_time,
            max_error_increase_after_contact,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub records: Vec<TraceRecord>,
    pub summary: Summary,
}

fn record(cfg: &ScenarioConfig, plant: &Plant, state: &PlantState) -> Result<TraceRecord, ScenarioError> {
    let (torque, force) = cfg.task.spec.desired_wrench();
    let bushing = match plant.attachment {
        Attachment::Compliant(k) => k.wrench_of(&state.relative)?,
        Attachment::Welded => plant.external_wrench(state)?,
    };
    Ok(TraceRecord {
        time: state.time,
        commanded: pose_coordinates(&state.commanded)?,
        relative: pose_coordinates(&state.relative)?,
        desired_wrench: [torque.x, torque.y, torque.z, force.x, force.y, force.z],
        bushing_wrench: bushing.as_array(),
        f_z: state.contact.f_z,
        tau_x: state.contact.tau_x,
        lambdas: state.contact.lambdas.clone(),
    })
}

/// Runs one scenario, streaming the trace to `sink` when given.
///
/// On failure the partial trace is flushed with a truncation marker.
pub fn run_scenario(cfg: &ScenarioConfig, mut sink: Option<&mut TraceWriter>) -> Result<ScenarioOutput, ScenarioError> {
    cfg.validate().map_err(|message| ScenarioError::Config { path: cfg.name.clone(), message })?;
    let plant = cfg.plant()?;
    let control = cfg.controller_config();
    let mut records = Vec::with_capacity(control.steps() + 1);
    let mut step = 0;
    let result = (|| -> Result<(), ScenarioError> {
        let mut x_cmd = cfg.task.start.transform();
        let mut state = plant.initial_state(&x_cmd, cfg.seed)?;
        let mut emit = |state: &PlantState, records: &mut Vec<TraceRecord>| -> Result<(), ScenarioError> {
            let r = record(cfg, &plant, state)?;
            if let Some(w) = sink.as_deref_mut() {
                w.write(&r).map_err(|e| ScenarioError::Io(e.to_string()))?;
            }
            records.push(r);
            Ok(())
        };
        emit(&state, &mut records)?;
        for k in 1..=control.steps() {
            step = k;
            let t = k as f64 * control.dt;
            x_cmd = match cfg.mode {
                Mode::ClosedLoop => {
                    let y = observe_relative_pose(&state);
                    hybrid_control_step(&y, &x_cmd, &cfg.controller_spec(t), &control)?
                }
                Mode::OpenLoopBaseline | Mode::Welded => {
                    rate_limit(&x_cmd, &cfg.open_loop_pose(t), control.rate_limit.as_ref())
                }
            };
            state = plant.step(&state, &x_cmd, control.dt)?;
            // Accumulating `time += dt` drifts; pin it to the step grid.
            state.time = t;
            emit(&state, &mut records)?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => {
            let summary = Summary::from_trace(cfg, &records);
            Ok(ScenarioOutput { records, summary })
        }
        Err(e) => {
            let message = e.to_string();
            if let Some(w) = sink {
                let _ = w.truncate(step, &message);
            }
            Err(ScenarioError::Step { step, time: step as f64 * control.dt, message })
        }
    }
}

/// Files written for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioArtifacts {
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub output: ScenarioOutput,
}

/// Runs a scenario and writes `<out>/<name>/trace.csv` and `summary.json`.
pub fn run_scenario_to_dir(cfg: &ScenarioConfig, out: &Path) -> Result<ScenarioArtifacts, ScenarioError> {
    let dir = out.join(&cfg.name);
    create_dir(&dir)?;
    let trace = dir.join("trace.csv");
    let summary_path = dir.join("summary.json");
    let mut writer = TraceWriter::create(&trace, cfg.tool.contact_points.len())
        .map_err(|e| ScenarioError::Io(format!("{}: {e}", trace.display())))?;
    let output = run_scenario(cfg, Some(&mut writer))?;
    writer.finish().map_err(|e| ScenarioError::Io(format!("{}: {e}", trace.display())))?;
    write_json(&summary_path, &output.summary)?;
    Ok(ScenarioArtifacts { trace, summary: summary_path, output })
}

/// Runs independent scenarios on up to `jobs` threads; results keep input order.
pub fn run_many(
    configs: &[ScenarioConfig],
    out: &Path,
    jobs: usize,
) -> Vec<Result<ScenarioArtifacts, ScenarioError>> {
    let jobs = jobs.clamp(1, configs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<ScenarioArtifacts, ScenarioError>>>> =
        configs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let result = run_scenario_to_dir(&configs[i], out);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().expect("result slot").expect("every scenario ran")).collect()
}
