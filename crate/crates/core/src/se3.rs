//! Rigid-body algebra used throughout the crate.
//!
//! Rotations are parametrized by roll-pitch-yaw gimbal angles with the
//! extrinsic x-y-z convention `R = Rz(yaw) * Ry(pitch) * Rx(roll)`. The
//! gimbal matrix `N(Θ)` maps gimbal torques to spatial torques, and its
//! inverse maps gimbal rates to angular velocity expressed in the parent
//! frame.

use std::fmt;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `|cos p|` below this is treated as gimbal lock.
pub const GIMBAL_LOCK_TOLERANCE: f64 = 1e-6;

pub type RotationMatrix = Rotation3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("gimbal lock: |cos(pitch)| = {cos_pitch:.3e} (pitch = {pitch} rad)")]
    GimbalLock { pitch: f64, cos_pitch: f64 },
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Named coordinate frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Frame {
    /// World.
    World,
    /// Gripper-fixed nominal frame `T`.
    Gripper,
    /// Tool-fixed compliance frame `C`; coincides with `T` at grasp.
    Tool,
    /// Gripper body frame `G` used by the tactile sensors.
    GripperBody,
    LeftCamera,
    RightCamera,
    /// Intermediate zero-pitch contact frame `C'`.
    ZeroPitch,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Frame::World => "W",
            Frame::Gripper => "T",
            Frame::Tool => "C",
            Frame::GripperBody => "G",
            Frame::LeftCamera => "L",
            Frame::RightCamera => "R",
            Frame::ZeroPitch => "C'",
        };
        f.write_str(s)
    }
}

/// Roll, pitch, yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RollPitchYaw {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl RollPitchYaw {
    pub const ZERO: Self = Self { roll: 0.0, pitch: 0.0, yaw: 0.0 };

    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.roll, self.pitch, self.yaw)
    }

    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }

    /// Fails when the pitch is at (or numerically near) the gimbal singularity.
    pub fn check_gimbal(&self) -> Result<(), Se3Error> {
        let cos_pitch = self.pitch.cos();
        if !self.is_finite() {
            return Err(Se3Error::NonFinite("roll-pitch-yaw"));
        }
        if cos_pitch.abs() < GIMBAL_LOCK_TOLERANCE {
            return Err(Se3Error::GimbalLock { pitch: self.pitch, cos_pitch });
        }
        Ok(())
    }
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rpy_to_rotation(rpy: &RollPitchYaw) -> RotationMatrix {
    Rotation3::from_matrix_unchecked(rot_z(rpy.yaw) * rot_y(rpy.pitch) * rot_x(rpy.roll))
}

/// Inverse of [`rpy_to_rotation`] on the principal branch `|pitch| < π/2`.
pub fn rotation_to_rpy(rotation: &RotationMatrix) -> Result<RollPitchYaw, Se3Error> {
    let m = rotation.matrix();
    let sin_pitch = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    if !cos_pitch.is_finite() {
        return Err(Se3Error::NonFinite("rotation matrix"));
    }
    if cos_pitch < GIMBAL_LOCK_TOLERANCE {
        return Err(Se3Error::GimbalLock { pitch: sin_pitch.asin(), cos_pitch });
    }
    Ok(RollPitchYaw {
        roll: m[(2, 1)].atan2(m[(2, 2)]),
        pitch: sin_pitch.atan2(cos_pitch),
        yaw: m[(1, 0)].atan2(m[(0, 0)]),
    })
}

/// The gimbal coordinate-transformation matrix `N(Θ)`.
///
/// Spatial torque is `Nᵀ τ_gimbal`; gimbal rates are `N ω` with `ω`
/// expressed in the parent frame.
pub fn gimbal_matrix(rpy: &RollPitchYaw) -> Result<Matrix3<f64>, Se3Error> {
    rpy.check_gimbal()?;
    let (sw, cw) = rpy.yaw.sin_cos();
    let sec_p = 1.0 / rpy.pitch.cos();
    let tan_p = rpy.pitch.tan();
    Ok(Matrix3::new(
        cw * sec_p,
        sw * sec_p,
        0.0,
        -sw,
        cw,
        0.0,
        cw * tan_p,
        sw * tan_p,
        1.0,
    ))
}

/// Angular-velocity matrix `M(Θ)` with `ω = M Θ̇`; `M = N⁻¹` away from gimbal lock.
pub fn rate_matrix(rpy: &RollPitchYaw) -> Matrix3<f64> {
    let (sw, cw) = rpy.yaw.sin_cos();
    let (sp, cp) = rpy.pitch.sin_cos();
    Matrix3::new(cw * cp, -sw, 0.0, sw * cp, cw, 0.0, -sp, 0.0, 1.0)
}

/// Angular velocity of the child frame, expressed in the parent frame.
pub fn gimbal_rates_to_angular_velocity(
    rpy: &RollPitchYaw,
    rates: &Vector3<f64>,
) -> Result<Vector3<f64>, Se3Error> {
    rpy.check_gimbal()?;
    Ok(rate_matrix(rpy) * rates)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Pose of `child` relative to `parent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub parent: Frame,
    pub child: Frame,
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(
        parent: Frame,
        child: Frame,
        rotation: RotationMatrix,
        translation: Vector3<f64>,
    ) -> Self {
        Self { parent, child, rotation, translation }
    }

    pub fn identity(parent: Frame, child: Frame) -> Self {
        Self::new(parent, child, RotationMatrix::identity(), Vector3::zeros())
    }

    pub fn from_rpy(parent: Frame, child: Frame, rpy: &RollPitchYaw, translation: Vector3<f64>) -> Self {
        Self::new(parent, child, rpy_to_rotation(rpy), translation)
    }

    pub fn from_translation(parent: Frame, child: Frame, translation: Vector3<f64>) -> Self {
        Self::new(parent, child, RotationMatrix::identity(), translation)
    }

    pub fn rpy(&self) -> Result<RollPitchYaw, Se3Error> {
        rotation_to_rpy(&self.rotation)
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        Self {
            parent: self.child,
            child: self.parent,
            translation: -(rotation * self.translation),
            rotation,
        }
    }

    /// `self * other`; requires `self.child == other.parent`.
    pub fn compose(&self, other: &RigidTransform) -> Result<Self, Se3Error> {
        if self.child != other.parent {
            return Err(Se3Error::FrameMismatch { expected: self.child, found: other.parent });
        }
        Ok(self.compose_unchecked(other))
    }

    pub(crate) fn compose_unchecked(&self, other: &RigidTransform) -> Self {
        Self {
            parent: self.parent,
            child: other.child,
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    /// Maps a point given in the child frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Same transform with different frame labels.
    pub fn relabel(&self, parent: Frame, child: Frame) -> Self {
        Self { parent, child, ..*self }
    }

    /// Translation distance and rotation angle to `other`.
    pub fn distance(&self, other: &RigidTransform) -> (f64, f64) {
        let dp = (self.translation - other.translation).norm();
        let m = (self.rotation.inverse() * other.rotation).into_inner();
        // atan2 keeps full precision for small angles, unlike acos of the trace.
        let sin = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
        let cos = 0.5 * (m.trace() - 1.0);
        (dp, sin.atan2(cos))
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.matrix().iter().all(|v| v.is_finite())
    }
}

/// Torque and force, both expressed in `frame`, with the torque taken about
/// the origin of `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialForce {
    pub frame: Frame,
    pub torque: Vector3<f64>,
    pub force: Vector3<f64>,
}

impl SpatialForce {
    pub fn new(frame: Frame, torque: Vector3<f64>, force: Vector3<f64>) -> Self {
        Self { frame, torque, force }
    }

    pub fn zero(frame: Frame) -> Self {
        Self::new(frame, Vector3::zeros(), Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.torque.iter().chain(self.force.iter()).all(|v| v.is_finite())
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.torque.x,
            self.torque.y,
            self.torque.z,
            self.force.x,
            self.force.y,
            self.force.z,
        ]
    }

    pub fn norm(&self) -> f64 {
        (self.torque.norm_squared() + self.force.norm_squared()).sqrt()
    }
}

impl std::ops::Neg for SpatialForce {
    type Output = SpatialForce;

    fn neg(self) -> SpatialForce {
        SpatialForce::new(self.frame, -self.torque, -self.force)
    }
}

/// Re-expresses a spatial force given in `x.child` into `x.parent`, shifting
/// the torque to the parent origin: `f' = R f`, `τ' = R τ + p × (R f)`.
pub fn reexpress_spatial_force(
    x: &RigidTransform,
    wrench: &SpatialForce,
) -> Result<SpatialForce, Se3Error> {
    if wrench.frame != x.child {
        return Err(Se3Error::FrameMismatch { expected: x.child, found: wrench.frame });
    }
    let force = x.rotation * wrench.force;
    let torque = x.rotation * wrench.torque + x.translation.cross(&force);
    Ok(SpatialForce::new(x.parent, torque, force))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn numeric_angular_velocity(rpy: &RollPitchYaw, rates: &Vector3<f64>) -> Vector3<f64> {
        let h = 1e-6;
        let plus = rpy_to_rotation(&RollPitchYaw::from_vector(&(rpy.to_vector() + rates * h)));
        let minus = rpy_to_rotation(&RollPitchYaw::from_vector(&(rpy.to_vector() - rates * h)));
        let r = rpy_to_rotation(rpy);
        let rdot = (plus.matrix() - minus.matrix()) / (2.0 * h);
        let w = rdot * r.matrix().transpose();
        Vector3::new(w[(2, 1)] - w[(1, 2)], w[(0, 2)] - w[(2, 0)], w[(1, 0)] - w[(0, 1)]) * 0.5
    }

    #[test]
    fn zero_rpy_is_identity() {
        assert_eq!(rpy_to_rotation(&RollPitchYaw::ZERO).matrix(), &Matrix3::identity());
    }

    #[test]
    fn quarter_roll_permutes_axes() {
        let r = rpy_to_rotation(&RollPitchYaw::new(FRAC_PI_2, 0.0, 0.0));
        assert_relative_eq!(r * Vector3::y(), Vector3::z(), epsilon = 1e-15);
        assert_relative_eq!(r * Vector3::z(), -Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn matches_nalgebra_euler_convention() {
        let rpy = RollPitchYaw::new(0.3, -0.7, 1.9);
        let ours = rpy_to_rotation(&rpy);
        let theirs = Rotation3::from_euler_angles(rpy.roll, rpy.pitch, rpy.yaw);
        assert_relative_eq!(ours.matrix(), theirs.matrix(), epsilon = 1e-14);
    }

    #[test]
    fn pure_yaw_round_trip() {
        let r = Rotation3::from_matrix_unchecked(rot_z(0.3));
        let rpy = rotation_to_rpy(&r).unwrap();
        assert_relative_eq!(rpy.roll, 0.0, epsilon = 1e-15);
        assert_relative_eq!(rpy.pitch, 0.0, epsilon = 1e-15);
        assert_relative_eq!(rpy.yaw, 0.3, epsilon = 1e-15);
        assert_eq!(rotation_to_rpy(&RotationMatrix::identity()).unwrap(), RollPitchYaw::ZERO);
    }

    #[test]
    fn gimbal_lock_is_reported() {
        let r = rpy_to_rotation(&RollPitchYaw::new(0.1, FRAC_PI_2, 0.2));
        assert!(matches!(rotation_to_rpy(&r), Err(Se3Error::GimbalLock { .. })));
        assert!(matches!(
            gimbal_matrix(&RollPitchYaw::new(0.0, -FRAC_PI_2, 0.0)),
            Err(Se3Error::GimbalLock { .. })
        ));
        assert!(gimbal_rates_to_angular_velocity(
            &RollPitchYaw::new(0.0, FRAC_PI_2, 0.0),
            &Vector3::x()
        )
        .is_err());
    }

    #[test]
    fn gimbal_matrix_special_values() {
        for roll in [-2.0, 0.0, 0.4, 3.0] {
            let n = gimbal_matrix(&RollPitchYaw::new(roll, 0.0, 0.0)).unwrap();
            assert_eq!(n, Matrix3::identity());
        }
        let n = gimbal_matrix(&RollPitchYaw::new(0.0, 0.0, FRAC_PI_2)).unwrap();
        let expected = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(n, expected, epsilon = 1e-15);
    }

    #[test]
    fn rates_simple_cases() {
        let w = gimbal_rates_to_angular_velocity(&RollPitchYaw::ZERO, &Vector3::x()).unwrap();
        assert_eq!(w, Vector3::x());
        let w = gimbal_rates_to_angular_velocity(&RollPitchYaw::new(0.2, 0.3, 0.4), &Vector3::zeros())
            .unwrap();
        assert_eq!(w, Vector3::zeros());
    }

    #[test]
    fn frame_labels_must_chain() {
        let a = RigidTransform::identity(Frame::World, Frame::Gripper);
        let b = RigidTransform::identity(Frame::Tool, Frame::Gripper);
        assert!(matches!(a.compose(&b), Err(Se3Error::FrameMismatch { .. })));
        let c = RigidTransform::identity(Frame::Gripper, Frame::Tool);
        let ac = a.compose(&c).unwrap();
        assert_eq!((ac.parent, ac.child), (Frame::World, Frame::Tool));
    }

    #[test]
    fn lever_arm_shift() {
        let x = RigidTransform::from_translation(Frame::World, Frame::Gripper, Vector3::z());
        let f = SpatialForce::new(Frame::Gripper, Vector3::zeros(), Vector3::x());
        let g = reexpress_spatial_force(&x, &f).unwrap();
        assert_eq!(g.frame, Frame::World);
        assert_relative_eq!(g.torque, Vector3::y(), epsilon = 1e-15);
        assert_relative_eq!(g.force, Vector3::x(), epsilon = 1e-15);

        let id = RigidTransform::identity(Frame::World, Frame::Gripper);
        let f = SpatialForce::new(Frame::Gripper, Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0));
        let g = reexpress_spatial_force(&id, &f).unwrap();
        assert_eq!((g.torque, g.force), (f.torque, f.force));
        assert!(reexpress_spatial_force(&id, &SpatialForce::zero(Frame::Tool)).is_err());
    }

    fn rpy_strategy(max_pitch: f64) -> impl Strategy<Value = RollPitchYaw> {
        (-3.0..3.0f64, -max_pitch..max_pitch, -3.0..3.0f64)
            .prop_map(|(r, p, y)| RollPitchYaw::new(r, p, y))
    }

    fn vec_strategy(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn rpy_round_trip(rpy in rpy_strategy(FRAC_PI_3)) {
            let back = rotation_to_rpy(&rpy_to_rotation(&rpy)).unwrap();
            prop_assert!((back.roll - rpy.roll).abs() < 1e-10);
            prop_assert!((back.pitch - rpy.pitch).abs() < 1e-10);
            prop_assert!((back.yaw - rpy.yaw).abs() < 1e-10);
        }

        #[test]
        fn rotation_round_trip(rpy in rpy_strategy(1.5)) {
            let r = rpy_to_rotation(&rpy);
            let r2 = rpy_to_rotation(&rotation_to_rpy(&r).unwrap());
            prop_assert!((r.matrix() - r2.matrix()).amax() < 1e-10);
            let orth = r.matrix().transpose() * r.matrix() - Matrix3::identity();
            prop_assert!(orth.amax() < 1e-12);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn angular_velocity_matches_finite_difference(
            rpy in rpy_strategy(1.2), rates in vec_strategy(2.0)
        ) {
            let w = gimbal_rates_to_angular_velocity(&rpy, &rates).unwrap();
            let w_fd = numeric_angular_velocity(&rpy, &rates);
            prop_assert!((w - w_fd).amax() < 1e-6);
        }

        #[test]
        fn gimbal_matrix_inverts_rate_matrix(rpy in rpy_strategy(1.4)) {
            let n = gimbal_matrix(&rpy).unwrap();
            let prod = n * rate_matrix(&rpy);
            prop_assert!((prod - Matrix3::identity()).amax() < 1e-9);
        }

        #[test]
        fn power_balance(rpy in rpy_strategy(FRAC_PI_3), rates in vec_strategy(2.0), tau_g in vec_strategy(5.0)) {
            let tau_spatial = gimbal_matrix(&rpy).unwrap().transpose() * tau_g;
            let w = gimbal_rates_to_angular_velocity(&rpy, &rates).unwrap();
            let spatial = tau_spatial.dot(&w);
            let gimbal = tau_g.dot(&rates);
            let scale = tau_g.norm() * rates.norm() + 1e-300;
            prop_assert!((spatial - gimbal).abs() <= 1e-8 * scale);
        }

        #[test]
        fn reexpression_is_invertible(
            rpy in rpy_strategy(1.5), p in vec_strategy(1.0),
            tau in vec_strategy(3.0), f in vec_strategy(3.0)
        ) {
            let x = RigidTransform::from_rpy(Frame::World, Frame::Gripper, &rpy, p);
            let w = SpatialForce::new(Frame::Gripper, tau, f);
            let there = reexpress_spatial_force(&x, &w).unwrap();
            let back = reexpress_spatial_force(&x.inverse(), &there).unwrap();
            prop_assert_eq!(back.frame, Frame::Gripper);
            prop_assert!((back.torque - tau).amax() < 1e-12);
            prop_assert!((back.force - f).amax() < 1e-12);
        }

        #[test]
        fn inverse_composes_to_identity(rpy in rpy_strategy(1.5), p in vec_strategy(1.0)) {
            let x = RigidTransform::from_rpy(Frame::World, Frame::Tool, &rpy, p);
            let id = x.compose(&x.inverse()).unwrap();
            prop_assert!(id.translation.amax() < 1e-14);
            prop_assert!((id.rotation.matrix() - Matrix3::identity()).amax() < 1e-14);
        }
    }
}
