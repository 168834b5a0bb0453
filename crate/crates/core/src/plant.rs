//! Quasi-static tool-contact simulator.
//!
//! The gripper frame `T` tracks its pose command (optionally with
//! repeatability noise). The tool frame `C` hangs on the bushing and touches
//! a plane through penalty springs at its contact points. Each step returns
//! the tool pose minimizing
//!
//! ```text
//! E = ½ΘᵀK_τΘ + ½xᵀK_f x + Σᵢ ½ k_c max(0, -sᵢ)² + m g z_com
//! ```
//!
//! over the relative pose `ᵀX^C = (Θ, x)`, where `sᵢ` is the signed distance
//! of contact point `i` to the plane. Stationarity of `E` reproduces the
//! bushing map: the external wrench on the tool about its origin equals
//! `(Nᵀ K_τ Θ, K_f x)` in `T` coordinates.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{
    rate_matrix, rot_x, rot_y, rpy_to_rotation, skew, Frame, RigidTransform, RollPitchYaw,
    Se3Error, SpatialForce, GIMBAL_LOCK_TOLERANCE,
};
use crate::stiffness::StiffnessParams;

const MAX_NEWTON_ITERATIONS: usize = 200;
const GRADIENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("equilibrium solve did not converge in {iterations} iterations (|grad E| = {gradient_norm:.3e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("non-finite pose command")]
    NonFiniteCommand,
}

/// Rigid tool attached at frame `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolModel {
    pub name: String,
    /// Contact points in the tool frame, meters.
    pub contact_points: Vec<Vector3<f64>>,
    #[serde(default)]
    pub mass: f64,
    #[serde(default = "Vector3::zeros")]
    pub center_of_mass: Vector3<f64>,
}

impl ToolModel {
    /// Blade with one contact point at each corner, `handle` below `C`.
    pub fn squeegee(half_width: f64, handle: f64, mass: f64) -> Self {
        Self {
            name: "squeegee".into(),
            contact_points: vec![
                Vector3::new(0.0, -half_width, -handle),
                Vector3::new(0.0, half_width, -handle),
            ],
            mass,
            center_of_mass: Vector3::new(0.0, 0.0, -0.5 * handle),
        }
    }

    /// Single tip `length` below `C`.
    pub fn pen(length: f64, mass: f64) -> Self {
        Self {
            name: "pen".into(),
            contact_points: vec![Vector3::new(0.0, 0.0, -length)],
            mass,
            center_of_mass: Vector3::new(0.0, 0.0, -0.5 * length),
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.contact_points.is_empty() {
            return Err(PlantError::InvalidModel("tool needs at least one contact point".into()));
        }
        if !(self.mass >= 0.0 && self.mass.is_finite()) {
            return Err(PlantError::InvalidModel(format!("tool mass {} must be >= 0", self.mass)));
        }
        let finite = self
            .contact_points
            .iter()
            .chain(std::iter::once(&self.center_of_mass))
            .all(|p| p.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(PlantError::InvalidModel("non-finite tool geometry".into()));
        }
        Ok(())
    }
}

/// A penalty-contact plane and gravity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    /// Height of the plane at the world origin, meters.
    pub plane_height: f64,
    /// Plane tilt about world x then y, degrees.
    #[serde(default)]
    pub plane_tilt_deg: [f64; 2],
    /// Penalty stiffness per contact point, N/m.
    #[serde(default = "default_contact_stiffness")]
    pub contact_stiffness: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_contact_stiffness() -> f64 {
    1e4
}

fn default_gravity() -> f64 {
    9.81
}

impl Default for EnvironmentModel {
    fn default() -> Self {
        Self {
            plane_height: 0.0,
            plane_tilt_deg: [0.0, 0.0],
            contact_stiffness: default_contact_stiffness(),
            gravity: default_gravity(),
        }
    }
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.contact_stiffness > 0.0 && self.contact_stiffness.is_finite()) {
            return Err(PlantError::InvalidModel(format!(
                "contact stiffness {} must be > 0",
                self.contact_stiffness
            )));
        }
        let finite = self.plane_height.is_finite()
            && self.gravity.is_finite()
            && self.plane_tilt_deg.iter().all(|v| v.is_finite());
        if !finite {
            return Err(PlantError::InvalidModel("non-finite environment parameter".into()));
        }
        Ok(())
    }

    /// Unit plane normal in world coordinates.
    pub fn normal(&self) -> Vector3<f64> {
        let [ax, ay] = self.plane_tilt_deg;
        rot_y(ay.to_radians()) * rot_x(ax.to_radians()) * Vector3::z()
    }

    /// Signed distance of a world point to the plane (positive above).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal().dot(&(p - Vector3::new(0.0, 0.0, self.plane_height)))
    }
}

/// Normal contact forces at the tool's contact points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactResult {
    /// Per-point normal force magnitudes, N.
    pub lambdas: Vec<f64>,
    /// `Σ λᵢ`.
    pub f_z: f64,
    /// x-component of `Σ rᵢ × λᵢ`, tool frame, about the tool origin.
    pub tau_x: f64,
}

/// How the tool is attached to the gripper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attachment {
    Compliant(StiffnessParams),
    /// Rigid attachment; the relative pose is always the identity.
    Welded,
}

/// Static equilibrium of the tool for one gripper pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    /// `ᵀX^C`.
    pub relative: RigidTransform,
    /// `ᵂX^C`.
    pub tool_pose: RigidTransform,
    pub contact: ContactResult,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Plant configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub attachment: Attachment,
    pub tool: ToolModel,
    pub env: EnvironmentModel,
    /// Standard deviation of the per-axis gripper position error, meters.
    pub repeatability_noise: f64,
}

#[derive(Debug, Clone)]
pub struct PlantState {
    /// `ᵂX^T` as commanded.
    pub commanded: RigidTransform,
    /// `ᵂX^T` as realized by the arm.
    pub realized: RigidTransform,
    /// `ᵀX^C`.
    pub relative: RigidTransform,
    /// `ᵂX^C`.
    pub tool_pose: RigidTransform,
    pub contact: ContactResult,
    pub time: f64,
    rng: ChaCha8Rng,
}

/// Precomputed world quantities of the energy for a fixed gripper pose.
struct EnergyModel<'a> {
    stiffness: &'a StiffnessParams,
    tool: &'a ToolModel,
    gripper_rotation: Matrix3<f64>,
    gripper_position: Vector3<f64>,
    normal: Vector3<f64>,
    plane_offset: f64,
    contact_stiffness: f64,
    weight: f64,
}

impl<'a> EnergyModel<'a> {
    fn new(
        gripper: &RigidTransform,
        tool: &'a ToolModel,
        env: &EnvironmentModel,
        stiffness: &'a StiffnessParams,
    ) -> Self {
        let normal = env.normal();
        Self {
            stiffness,
            tool,
            gripper_rotation: *gripper.rotation.matrix(),
            gripper_position: gripper.translation,
            plane_offset: normal.dot(&Vector3::new(0.0, 0.0, env.plane_height)),
            normal,
            contact_stiffness: env.contact_stiffness,
            weight: tool.mass * env.gravity,
        }
    }

    fn split(q: &Vector6<f64>) -> (RollPitchYaw, Vector3<f64>) {
        (RollPitchYaw::new(q[0], q[1], q[2]), Vector3::new(q[3], q[4], q[5]))
    }

    fn penetration(&self, rot: &Matrix3<f64>, x: &Vector3<f64>, r: &Vector3<f64>) -> f64 {
        let p = self.gripper_position + self.gripper_rotation * (x + rot * r);
        (self.plane_offset - self.normal.dot(&p)).max(0.0)
    }

    fn energy(&self, q: &Vector6<f64>) -> f64 {
        let (rpy, x) = Self::split(q);
        let rot = *rpy_to_rotation(&rpy).matrix();
        let contact: f64 = self
            .tool
            .contact_points
            .iter()
            .map(|r| {
                let d = self.penetration(&rot, &x, r);
                0.5 * self.contact_stiffness * d * d
            })
            .sum();
        let com = self.gripper_position + self.gripper_rotation * (x + rot * self.tool.center_of_mass);
        self.stiffness.energy(&rpy, &x) + contact + self.weight * com.z
    }

    /// External wrench on the tool about its origin, in `T` coordinates.
    fn external_wrench(&self, rpy: &RollPitchYaw, x: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let rot = *rpy_to_rotation(rpy).matrix();
        let to_t = self.gripper_rotation.transpose();
        let normal_t = to_t * self.normal;
        let mut torque = Vector3::zeros();
        let mut force = Vector3::zeros();
        for r in &self.tool.contact_points {
            let lambda = self.contact_stiffness * self.penetration(&rot, x, r);
            let f = normal_t * lambda;
            torque += (rot * r).cross(&f);
            force += f;
        }
        let g = to_t * Vector3::new(0.0, 0.0, -self.weight);
        torque += (rot * self.tool.center_of_mass).cross(&g);
        force += g;
        (torque, force)
    }

    fn gradient(&self, q: &Vector6<f64>) -> Vector6<f64> {
        let (rpy, x) = Self::split(q);
        let (torque, force) = self.external_wrench(&rpy, &x);
        let th = rpy.to_vector();
        let g_rot = th.component_mul(self.stiffness.k_tau()) - rate_matrix(&rpy).transpose() * torque;
        let g_lin = x.component_mul(self.stiffness.k_f()) - force;
        Vector6::new(g_rot.x, g_rot.y, g_rot.z, g_lin.x, g_lin.y, g_lin.z)
    }

    fn hessian(&self, q: &Vector6<f64>) -> Matrix6<f64> {
        let h = 1e-7;
        let mut hess = Matrix6::zeros();
        for j in 0..6 {
            let mut e = Vector6::zeros();
            e[j] = h;
            let col = (self.gradient(&(q + e)) - self.gradient(&(q - e))) / (2.0 * h);
            hess.set_column(j, &col);
        }
        (hess + hess.transpose()) * 0.5
    }
}

fn contact_result(
    tool: &ToolModel,
    env: &EnvironmentModel,
    tool_pose: &RigidTransform,
) -> ContactResult {
    let normal_c = tool_pose.rotation.inverse() * env.normal();
    let mut lambdas = Vec::with_capacity(tool.contact_points.len());
    let mut torque = Vector3::zeros();
    for r in &tool.contact_points {
        let p = tool_pose.transform_point(r);
        let lambda = env.contact_stiffness * (-env.signed_distance(&p)).max(0.0);
        torque += r.cross(&(normal_c * lambda));
        lambdas.push(lambda);
    }
    ContactResult { f_z: lambdas.iter().sum(), tau_x: torque.x, lambdas }
}

fn check_pitch(q: &Vector6<f64>) -> Result<(), PlantError> {
    let cos_pitch = q[1].cos();
    if !q.iter().all(|v| v.is_finite()) {
        return Err(PlantError::NoConvergence { iterations: 0, gradient_norm: f64::NAN });
    }
    if cos_pitch < GIMBAL_LOCK_TOLERANCE.sqrt() {
        return Err(Se3Error::GimbalLock { pitch: q[1], cos_pitch }.into());
    }
    Ok(())
}

/// Finds the tool pose of minimum total potential energy for gripper pose
/// `gripper` (`ᵂX^T`), starting Newton's method at `warm_start` (`ᵀX^C`).
pub fn solve_tool_equilibrium(
    gripper: &RigidTransform,
    tool: &ToolModel,
    env: &EnvironmentModel,
    stiffness: &StiffnessParams,
    warm_start: Option<&RigidTransform>,
) -> Result<Equilibrium, PlantError> {
    let model = EnergyModel::new(gripper, tool, env, stiffness);
    let mut q = match warm_start {
        Some(x) => {
            let rpy = x.rpy()?;
            Vector6::new(rpy.roll, rpy.pitch, rpy.yaw, x.translation.x, x.translation.y, x.translation.z)
        }
        None => Vector6::zeros(),
    };
    let mut energy = model.energy(&q);
    let mut grad = model.gradient(&q);
    let mut iterations = 0;
    while grad.norm() >= GRADIENT_TOLERANCE {
        if iterations == MAX_NEWTON_ITERATIONS {
            return Err(PlantError::NoConvergence { iterations, gradient_norm: grad.norm() });
        }
        iterations += 1;
        let step = newton_direction(&model.hessian(&q), &grad);
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = q + step * alpha;
            if trial[1].cos() > GIMBAL_LOCK_TOLERANCE.sqrt() {
                let e = model.energy(&trial);
                let roundoff = 1e-13 * (energy.abs() + 1.0);
                if e <= energy + 1e-4 * alpha * slope + roundoff {
                    q = trial;
                    energy = e;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(PlantError::NoConvergence { iterations, gradient_norm: grad.norm() });
        }
        check_pitch(&q)?;
        grad = model.gradient(&q);
    }
    let (rpy, x) = EnergyModel::split(&q);
    let relative = RigidTransform::from_rpy(Frame::Gripper, Frame::Tool, &rpy, x);
    let tool_pose = gripper.relabel(Frame::World, Frame::Gripper).compose_unchecked(&relative);
    Ok(Equilibrium {
        contact: contact_result(tool, env, &tool_pose),
        relative,
        tool_pose,
        iterations,
        gradient_norm: grad.norm(),
    })
}

fn newton_direction(hess: &Matrix6<f64>, grad: &Vector6<f64>) -> Vector6<f64> {
    let scale = hess.diagonal().amax().max(1e-12);
    let mut damping = 0.0;
    loop {
        let h = hess + Matrix6::identity() * damping;
        if let Some(chol) = h.cholesky() {
            return -chol.solve(grad);
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
        if damping > 1e6 * scale {
            return -grad / scale;
        }
    }
}

impl Plant {
    pub fn new(
        attachment: Attachment,
        tool: ToolModel,
        env: EnvironmentModel,
        repeatability_noise: f64,
    ) -> Result<Self, PlantError> {
        tool.validate()?;
        env.validate()?;
        if !(repeatability_noise >= 0.0 && repeatability_noise.is_finite()) {
            return Err(PlantError::InvalidModel("repeatability noise must be >= 0".into()));
        }
        Ok(Self { attachment, tool, env, repeatability_noise })
    }

    /// Equilibrium for a realized gripper pose.
    pub fn equilibrium(
        &self,
        gripper: &RigidTransform,
        warm_start: Option<&RigidTransform>,
    ) -> Result<Equilibrium, PlantError> {
        match &self.attachment {
            Attachment::Compliant(k) => solve_tool_equilibrium(gripper, &self.tool, &self.env, k, warm_start),
            Attachment::Welded => {
                let relative = RigidTransform::identity(Frame::Gripper, Frame::Tool);
                let tool_pose = gripper.relabel(Frame::World, Frame::Tool);
                Ok(Equilibrium {
                    contact: contact_result(&self.tool, &self.env, &tool_pose),
                    relative,
                    tool_pose,
                    iterations: 0,
                    gradient_norm: 0.0,
                })
            }
        }
    }

    /// State at time zero with the gripper at `gripper` and no noise applied.
    pub fn initial_state(&self, gripper: &RigidTransform, seed: u64) -> Result<PlantState, PlantError> {
        let gripper = gripper.relabel(Frame::World, Frame::Gripper);
        let eq = self.equilibrium(&gripper, None)?;
        Ok(PlantState {
            commanded: gripper,
            realized: gripper,
            relative: eq.relative,
            tool_pose: eq.tool_pose,
            contact: eq.contact,
            time: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Applies a gripper pose command and settles the tool.
    pub fn step(&self, state: &PlantState, command: &RigidTransform, dt: f64) -> Result<PlantState, PlantError> {
        if !command.is_finite() {
            return Err(PlantError::NonFiniteCommand);
        }
        let command = command.relabel(Frame::World, Frame::Gripper);
        let mut rng = state.rng.clone();
        let mut realized = command;
        if self.repeatability_noise > 0.0 {
            let normal = Normal::new(0.0, self.repeatability_noise)
                .map_err(|e| PlantError::InvalidModel(e.to_string()))?;
            for i in 0..3 {
                realized.translation[i] += normal.sample(&mut rng);
            }
        }
        let eq = self.equilibrium(&realized, Some(&state.relative))?;
        Ok(PlantState {
            commanded: command,
            realized,
            relative: eq.relative,
            tool_pose: eq.tool_pose,
            contact: eq.contact,
            time: state.time + dt,
            rng,
        })
    }

    /// Contact plus gravity wrench on the tool about its origin, `T` coordinates.
    pub fn external_wrench(&self, state: &PlantState) -> Result<SpatialForce, PlantError> {
        let k = match &self.attachment {
            Attachment::Compliant(k) => *k,
            Attachment::Welded => StiffnessParams::default(),
        };
        let model = EnergyModel::new(&state.realized, &self.tool, &self.env, &k);
        let rpy = state.relative.rpy()?;
        let (torque, force) = model.external_wrench(&rpy, &state.relative.translation);
        Ok(SpatialForce::new(Frame::Gripper, torque, force))
    }

    /// Total potential energy of a candidate relative pose (compliant attachment only).
    pub fn energy(&self, gripper: &RigidTransform, relative: &RigidTransform) -> Result<f64, PlantError> {
        let Attachment::Compliant(k) = &self.attachment else {
            return Err(PlantError::InvalidModel("energy is undefined for a welded tool".into()));
        };
        let model = EnergyModel::new(gripper, &self.tool, &self.env, k);
        let rpy = relative.rpy()?;
        let t = relative.translation;
        Ok(model.energy(&Vector6::new(rpy.roll, rpy.pitch, rpy.yaw, t.x, t.y, t.z)))
    }
}

/// Relative pose as seen by a perfect sensor.
pub fn observe_relative_pose(state: &PlantState) -> RigidTransform {
    state.relative
}

/// Lever-arm helper for callers that want `[r]×`.
pub fn lever(r: &Vector3<f64>) -> Matrix3<f64> {
    skew(r)
}
