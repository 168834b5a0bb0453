//! Force and hybrid force/pose control through the bushing.
//!
//! Desired wrenches are those the tool exerts on the environment. The bushing
//! load that realizes them is the opposite wrench acting on the tool, which
//! is what the stiffness map relates to the relative pose.

pub mod sea;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{reexpress_spatial_force, Frame, RigidTransform, RollPitchYaw, Se3Error, SpatialForce};
use crate::stiffness::{
    hybrid_orientation_1t2a, hybrid_orientation_2t1a, hybrid_position, relative_rotation, Projection,
    StiffnessError, StiffnessParams,
};

pub use sea::{sea_1d_force_step, Sea1dState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error(transparent)]
    Stiffness(#[from] StiffnessError),
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

/// Largest pose change allowed per control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimit {
    /// Meters per step.
    pub translation: f64,
    /// Radians per step.
    pub rotation: f64,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self { translation: 0.002, rotation: 0.5f64.to_radians() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// The controller's estimate of the bushing stiffness.
    pub stiffness_estimate: StiffnessParams,
    /// Control period, seconds.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// `None` disables rate limiting.
    #[serde(default = "default_rate_limit")]
    pub rate_limit: Option<RateLimit>,
    /// Run length, seconds.
    pub horizon: f64,
}

fn default_dt() -> f64 {
    0.004
}

fn default_rate_limit() -> Option<RateLimit> {
    Some(RateLimit::default())
}

impl ControllerConfig {
    pub fn new(stiffness_estimate: StiffnessParams, horizon: f64) -> Self {
        Self { stiffness_estimate, dt: default_dt(), rate_limit: default_rate_limit(), horizon }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ControllerError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(ControllerError::InvalidConfig(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if let Some(r) = &self.rate_limit {
            if !(r.translation >= 0.0 && r.rotation >= 0.0) {
                return Err(ControllerError::InvalidConfig("rate limits must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Number of control steps in the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Moves from `current` toward `target`, shrinking the increment uniformly
/// so that neither its translation nor its rotation exceeds `limit`.
pub fn rate_limit(current: &RigidTransform, target: &RigidTransform, limit: Option<&RateLimit>) -> RigidTransform {
    let Some(limit) = limit else {
        return *target;
    };
    let dp = target.translation - current.translation;
    let dr = (target.rotation * current.rotation.inverse()).scaled_axis();
    let mut scale: f64 = 1.0;
    if dp.norm() > limit.translation {
        scale = scale.min(limit.translation / dp.norm());
    }
    if dr.norm() > limit.rotation {
        scale = scale.min(limit.rotation / dr.norm());
    }
    if scale >= 1.0 {
        return *target;
    }
    RigidTransform::new(
        target.parent,
        target.child,
        Rotation3::new(dr * scale) * current.rotation,
        current.translation + dp * scale,
    )
}

fn expect_frames(x: &RigidTransform, parent: Frame, child: Frame) -> Result<(), Se3Error> {
    if x.parent != parent {
        return Err(Se3Error::FrameMismatch { expected: parent, found: x.parent });
    }
    if x.child != child {
        return Err(Se3Error::FrameMismatch { expected: child, found: x.child });
    }
    Ok(())
}

/// Force control through the bushing.
///
/// `y` is the measured `ᵀX^C`, `x_cmd` the current gripper command `ᵂX^T`
/// and `f_d` the wrench the tool should exert on the environment, with
/// components along the world axes and torque about the tool origin.
pub fn force_control_step(
    y: &RigidTransform,
    x_cmd: &RigidTransform,
    f_d: &SpatialForce,
    cfg: &ControllerConfig,
) -> Result<RigidTransform, ControllerError> {
    expect_frames(y, Frame::Gripper, Frame::Tool)?;
    expect_frames(x_cmd, Frame::World, Frame::Gripper)?;
    let to_t = RigidTransform::new(Frame::Gripper, Frame::World, x_cmd.rotation.inverse(), Vector3::zeros());
    let f_t = reexpress_spatial_force(&to_t, f_d)?;
    let desired = cfg.stiffness_estimate.pose_of(&-f_t)?;
    let target = x_cmd.compose(y)?.compose(&desired.inverse())?;
    Ok(rate_limit(x_cmd, &target, cfg.rate_limit.as_ref()))
}

/// How the three rotational channels are controlled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrientationSpec {
    /// Absolute tool orientation `ᵂR^C` as roll, pitch, yaw.
    Pose { rpy: [f64; 3] },
    /// Torque exerted on the environment, in `T`.
    Torque { torque: [f64; 3] },
    /// Torques about `T`'s x and y axes, relative yaw of `C` in `T`.
    TwoTorquesOneAngle { tau_x: f64, tau_y: f64, yaw: f64 },
    /// Torque about `T`'s z axis, relative roll and pitch of `C` in `T`.
    OneTorqueTwoAngles { tau_z: f64, roll: f64, pitch: f64 },
}

/// Split of the six task axes into pose and wrench channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridSpec {
    /// World axes along which the tool position is tracked; the others are force controlled.
    pub position_axes: [bool; 3],
    /// Tool position target `ᵂx^C`, used on position axes.
    #[serde(default = "Vector3::zeros")]
    pub position: Vector3<f64>,
    /// Force on the environment in `W`, used on force axes.
    #[serde(default = "Vector3::zeros")]
    pub force: Vector3<f64>,
    pub orientation: OrientationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantity {
    Position,
    Angle,
    Force,
    Torque,
}

/// One controlled task coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Channel {
    pub quantity: Quantity,
    /// 0, 1, 2 for x, y, z (roll, pitch, yaw for angles).
    pub axis: usize,
    pub frame: Frame,
}

impl HybridSpec {
    /// Blade dragged along the table: tool x, y and relative yaw tracked,
    /// normal force and the two tilting torques regulated.
    pub fn squeegee(position: Vector3<f64>, normal_force: f64) -> Self {
        Self {
            position_axes: [true, true, false],
            position,
            force: Vector3::new(0.0, 0.0, -normal_force),
            orientation: OrientationSpec::TwoTorquesOneAngle { tau_x: 0.0, tau_y: 0.0, yaw: 0.0 },
        }
    }

    /// Upright pen: x, y tracked, normal force regulated.
    pub fn pen(position: Vector3<f64>, normal_force: f64) -> Self {
        Self {
            position_axes: [true, true, false],
            position,
            force: Vector3::new(0.0, 0.0, -normal_force),
            orientation: OrientationSpec::Pose { rpy: [0.0; 3] },
        }
    }

    /// Every translational and rotational axis tracked.
    pub fn all_position(position: Vector3<f64>, rpy: RollPitchYaw) -> Self {
        Self {
            position_axes: [true; 3],
            position,
            force: Vector3::zeros(),
            orientation: OrientationSpec::Pose { rpy: [rpy.roll, rpy.pitch, rpy.yaw] },
        }
    }

    /// Controlled channels split into (pose channels, wrench channels).
    pub fn channels(&self) -> (Vec<Channel>, Vec<Channel>) {
        let ch = |quantity, axis, frame| Channel { quantity, axis, frame };
        let mut pose = Vec::new();
        let mut wrench = Vec::new();
        for (axis, tracked) in self.position_axes.iter().enumerate() {
            if *tracked {
                pose.push(ch(Quantity::Position, axis, Frame::World));
            } else {
                wrench.push(ch(Quantity::Force, axis, Frame::World));
            }
        }
        match self.orientation {
            OrientationSpec::Pose { .. } => pose.extend((0..3).map(|a| ch(Quantity::Angle, a, Frame::World))),
            OrientationSpec::Torque { .. } => wrench.extend((0..3).map(|a| ch(Quantity::Torque, a, Frame::Gripper))),
            OrientationSpec::TwoTorquesOneAngle { .. } => {
                wrench.push(ch(Quantity::Torque, 0, Frame::Gripper));
                wrench.push(ch(Quantity::Torque, 1, Frame::Gripper));
                pose.push(ch(Quantity::Angle, 2, Frame::Gripper));
            }
            OrientationSpec::OneTorqueTwoAngles { .. } => {
                pose.push(ch(Quantity::Angle, 0, Frame::Gripper));
                pose.push(ch(Quantity::Angle, 1, Frame::Gripper));
                wrench.push(ch(Quantity::Torque, 2, Frame::Gripper));
            }
        }
        (pose, wrench)
    }

    /// Desired wrench on the environment with world-axis force and `T`-axis torque;
    /// pose channels read as zero.
    pub fn desired_wrench(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut force = self.force;
        for (axis, tracked) in self.position_axes.iter().enumerate() {
            if *tracked {
                force[axis] = 0.0;
            }
        }
        let torque = match self.orientation {
            OrientationSpec::Pose { .. } => Vector3::zeros(),
            OrientationSpec::Torque { torque } => Vector3::from(torque),
            OrientationSpec::TwoTorquesOneAngle { tau_x, tau_y, .. } => Vector3::new(tau_x, tau_y, 0.0),
            OrientationSpec::OneTorqueTwoAngles { tau_z, .. } => Vector3::new(0.0, 0.0, tau_z),
        };
        (torque, force)
    }
}

/// Hybrid force/pose control through the bushing.
///
/// Rotational channels are resolved in `T` into desired gimbal angles; the
/// gripper orientation is the measured tool orientation composed with their
/// inverse. Position channels place the tool at the target, compensating the
/// measured bushing deflection; force channels move the gripper by the
/// difference between the desired and measured deflection.
pub fn hybrid_control_step(
    y: &RigidTransform,
    x_cmd: &RigidTransform,
    spec: &HybridSpec,
    cfg: &ControllerConfig,
) -> Result<RigidTransform, ControllerError> {
    expect_frames(y, Frame::Gripper, Frame::Tool)?;
    expect_frames(x_cmd, Frame::World, Frame::Gripper)?;
    let k = &cfg.stiffness_estimate;
    let r_wt = *x_cmd.rotation.matrix();
    let r_tc = *y.rotation.matrix();
    let r_wc = r_wt * r_tc;

    let gimbal = match spec.orientation {
        OrientationSpec::Pose { .. } => None,
        OrientationSpec::Torque { torque } => {
            let load = SpatialForce::new(Frame::Gripper, -Vector3::from(torque), Vector3::zeros());
            Some(k.pose_of(&load)?.rpy()?)
        }
        OrientationSpec::TwoTorquesOneAngle { tau_x, tau_y, yaw } => {
            Some(hybrid_orientation_2t1a(-tau_x, -tau_y, yaw, k)?)
        }
        OrientationSpec::OneTorqueTwoAngles { tau_z, roll, pitch } => {
            Some(hybrid_orientation_1t2a(-tau_z, roll, pitch, k))
        }
    };
    let r_wt_d: Matrix3<f64> = match (gimbal, spec.orientation) {
        (Some(rpy), _) => r_wc * relative_rotation(&rpy).transpose(),
        (None, OrientationSpec::Pose { rpy }) => {
            relative_rotation(&RollPitchYaw::new(rpy[0], rpy[1], rpy[2])) * r_tc.transpose()
        }
        (None, _) => unreachable!("only pose orientation has no gimbal target"),
    };

    let selection = Projection::axes(spec.position_axes[0], spec.position_axes[1], spec.position_axes[2]);
    let p = *selection.matrix();
    let p_perp = selection.complement();
    let selection_t = selection.rotated(&r_wt_d.transpose());
    let load_t = r_wt_d.transpose() * -spec.force;
    let x_def = hybrid_position(&selection_t, &Vector3::zeros(), &load_t, k);

    let tool_position = x_cmd.translation + r_wt * y.translation;
    let target = p * spec.position + p_perp * tool_position;
    let offset = p * (r_wt * y.translation) + p_perp * (r_wt_d * x_def);
    let desired = RigidTransform::new(
        Frame::World,
        Frame::Gripper,
        Rotation3::from_matrix(&r_wt_d),
        target - offset,
    );
    Ok(rate_limit(x_cmd, &desired, cfg.rate_limit.as_ref()))
}
