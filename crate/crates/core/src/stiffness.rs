//! Bushing generalized stiffness map between a relative pose `ᵀX^C` and the
//! spatial force applied on the tool frame `C`, expressed in `T`.
//!
//! The orientation part is `τ = Nᵀ(Θ) K_τ Θ` and the translational part is
//! `f = K_f x`. Both are invertible in closed form on `|p| < π/2`; the
//! hybrid helpers invert only a subset of channels and take the remaining
//! channels as given pose coordinates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddouble::{self, Dd};
use crate::se3::{
    rpy_to_rotation, Frame, RigidTransform, RollPitchYaw, Se3Error, SpatialForce,
    GIMBAL_LOCK_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StiffnessError {
    #[error(transparent)]
    Se3(#[from] Se3Error),
    #[error("recovered pitch {pitch} rad is outside |p| < π/2")]
    OutOfRange { pitch: f64 },
    #[error("stiffness entries must be finite and strictly positive, got {0:?}")]
    NonPositive([f64; 6]),
    #[error("matrix is not an orthogonal projection (residual {0:.3e})")]
    NotAProjection(f64),
}

/// Diagonal gimbal stiffness (N·m/rad) and translational stiffness (N/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStiffness", into = "RawStiffness")]
pub struct StiffnessParams {
    k_tau: Vector3<f64>,
    k_f: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStiffness {
    k_tau: [f64; 3],
    k_f: [f64; 3],
}

impl TryFrom<RawStiffness> for StiffnessParams {
    type Error = StiffnessError;

    fn try_from(raw: RawStiffness) -> Result<Self, Self::Error> {
        StiffnessParams::new(Vector3::from(raw.k_tau), Vector3::from(raw.k_f))
    }
}

impl From<StiffnessParams> for RawStiffness {
    fn from(k: StiffnessParams) -> Self {
        RawStiffness { k_tau: k.k_tau.into(), k_f: k.k_f.into() }
    }
}

impl Default for StiffnessParams {
    /// Desk-scale values for a compliant bubble grasp.
    fn default() -> Self {
        Self { k_tau: Vector3::repeat(2.0), k_f: Vector3::repeat(300.0) }
    }
}

impl StiffnessParams {
    pub fn new(k_tau: Vector3<f64>, k_f: Vector3<f64>) -> Result<Self, StiffnessError> {
        let all = [k_tau.x, k_tau.y, k_tau.z, k_f.x, k_f.y, k_f.z];
        if all.iter().any(|k| !k.is_finite() || *k <= 0.0) {
            return Err(StiffnessError::NonPositive(all));
        }
        Ok(Self { k_tau, k_f })
    }

    /// Gimbal stiffnesses `(k_r, k_p, k_y)`.
    pub fn k_tau(&self) -> &Vector3<f64> {
        &self.k_tau
    }

    /// Translational stiffnesses `(k_x, k_y, k_z)`.
    pub fn k_f(&self) -> &Vector3<f64> {
        &self.k_f
    }

    /// All six entries, rotational first.
    pub fn as_array(&self) -> [f64; 6] {
        [self.k_tau.x, self.k_tau.y, self.k_tau.z, self.k_f.x, self.k_f.y, self.k_f.z]
    }

    pub fn from_array(k: [f64; 6]) -> Result<Self, StiffnessError> {
        Self::new(Vector3::new(k[0], k[1], k[2]), Vector3::new(k[3], k[4], k[5]))
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, StiffnessError> {
        Self::new(self.k_tau * factor, self.k_f * factor)
    }

    /// Potential energy stored in the bushing at deformation `(Θ, x)`.
    pub fn energy(&self, rpy: &RollPitchYaw, x: &Vector3<f64>) -> f64 {
        let th = rpy.to_vector();
        0.5 * (th.component_mul(&self.k_tau).dot(&th) + x.component_mul(&self.k_f).dot(x))
    }

    /// Forward map applied to a relative pose `ᵀX^C`.
    pub fn wrench_of(&self, relative: &RigidTransform) -> Result<SpatialForce, StiffnessError> {
        let rpy = relative.rpy()?;
        stiffness_forward(&rpy, &relative.translation, self)
    }

    /// Inverse map returned as a relative pose `ᵀX^C`.
    pub fn pose_of(&self, wrench: &SpatialForce) -> Result<RigidTransform, StiffnessError> {
        let (rpy, x) = stiffness_inverse(wrench, self)?;
        Ok(RigidTransform::from_rpy(Frame::Gripper, Frame::Tool, &rpy, x))
    }
}

/// `τ = Nᵀ(Θ) K_τ Θ`, `f = K_f x`, expressed in `T`.
pub fn stiffness_forward(
    rpy: &RollPitchYaw,
    x: &Vector3<f64>,
    k: &StiffnessParams,
) -> Result<SpatialForce, StiffnessError> {
    Ok(SpatialForce::new(Frame::Gripper, n_transpose_torque(rpy, k)?, x.component_mul(&k.k_f)))
}

/// `Nᵀ K_τ Θ` with each component rounded once.
fn n_transpose_torque(rpy: &RollPitchYaw, k: &StiffnessParams) -> Result<Vector3<f64>, StiffnessError> {
    rpy.check_gimbal()?;
    let (sp, cp) = ddouble::sin_cos(rpy.pitch);
    let (sy, cy) = ddouble::sin_cos(rpy.yaw);
    let g_r = Dd::prod(k.k_tau.x, rpy.roll);
    let g_p = Dd::prod(k.k_tau.y, rpy.pitch);
    let g_y = Dd::prod(k.k_tau.z, rpy.yaw);
    let a = (g_r + sp * g_y) / cp;
    Ok(Vector3::new((cy * a - sy * g_p).to_f64(), (sy * a + cy * g_p).to_f64(), g_y.to_f64()))
}

/// Closed-form inverse of [`stiffness_forward`], evaluated yaw first, then
/// pitch, then roll.
pub fn stiffness_inverse(
    wrench: &SpatialForce,
    k: &StiffnessParams,
) -> Result<(RollPitchYaw, Vector3<f64>), StiffnessError> {
    let rpy = orientation_inverse(&wrench.torque, k)?;
    Ok((rpy, wrench.force.component_div(&k.k_f)))
}

fn orientation_from_yaw(tau: &Vector3<f64>, k: &StiffnessParams, yaw: Dd) -> Result<RollPitchYaw, StiffnessError> {
    let (sy, cy) = ddouble::sin_cos_dd(yaw);
    let (tx, ty, tz) = (Dd::from(tau.x), Dd::from(tau.y), Dd::from(tau.z));
    let pitch = (ty * cy - tx * sy) / k.k_tau.y;
    check_pitch(pitch.to_f64())?;
    let (sp, cp) = ddouble::sin_cos_dd(pitch);
    let roll = ((tx * cy + ty * sy) * cp - tz * sp) / k.k_tau.x;
    Ok(RollPitchYaw::new(roll.to_f64(), pitch.to_f64(), yaw.to_f64()))
}

/// The forward map rounds `k_y * yaw`, so when `k_y` is large several
/// neighbouring yaw values give the same `τ_z`. Each of them is tried and the
/// one whose torque reproduces `τ_x, τ_y` best wins, since pitch and roll
/// amplify a yaw error by the stiffness ratios.
fn orientation_inverse(tau: &Vector3<f64>, k: &StiffnessParams) -> Result<RollPitchYaw, StiffnessError> {
    let q = Dd::from(tau.z) / k.k_tau.z;
    let candidates: Vec<f64> =
        [q.hi, q.hi.next_down(), q.hi.next_up()].into_iter().filter(|c| c * k.k_tau.z == tau.z).collect();
    if candidates.len() < 2 {
        let yaw = candidates.first().map_or(q, |&c| Dd::from(c));
        return orientation_from_yaw(tau, k, yaw);
    }
    let mut best: Option<(f64, RollPitchYaw)> = None;
    for yaw in candidates {
        let rpy = orientation_from_yaw(tau, k, Dd::from(yaw))?;
        let miss = (n_transpose_torque(&rpy, k)? - tau).xy().abs().sum();
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, rpy));
        }
    }
    Ok(best.expect("at least two candidates").1)
}

fn check_pitch(pitch: f64) -> Result<(), StiffnessError> {
    if !pitch.is_finite() || pitch.abs() >= std::f64::consts::FRAC_PI_2 || pitch.cos() < GIMBAL_LOCK_TOLERANCE {
        return Err(StiffnessError::OutOfRange { pitch });
    }
    Ok(())
}

/// Determinant of the Jacobian of the orientation map, `k_r k_p k_y / cos p`.
pub fn stiffness_jacobian_det(rpy: &RollPitchYaw, k: &StiffnessParams) -> Result<f64, StiffnessError> {
    rpy.check_gimbal()?;
    Ok(k.k_tau.x * k.k_tau.y * k.k_tau.z / rpy.pitch.cos())
}

/// Symmetric idempotent 3×3 matrix selecting position-controlled axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection(Matrix3<f64>);

impl Projection {
    pub fn new(p: Matrix3<f64>) -> Result<Self, StiffnessError> {
        let residual = (p * p - p).amax().max((p - p.transpose()).amax());
        if !residual.is_finite() || residual > 1e-9 {
            return Err(StiffnessError::NotAProjection(residual));
        }
        Ok(Self(p))
    }

    /// Diagonal selection of coordinate axes.
    pub fn axes(x: bool, y: bool, z: bool) -> Self {
        let d = |b: bool| if b { 1.0 } else { 0.0 };
        Self(Matrix3::from_diagonal(&Vector3::new(d(x), d(y), d(z))))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn complement(&self) -> Matrix3<f64> {
        Matrix3::identity() - self.0
    }

    /// `R P Rᵀ`: the same subspace seen from a frame rotated by `R`.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        Self(r * self.0 * r.transpose())
    }
}

/// `x = P x_d + P⊥ K_f⁻¹ f_d`.
pub fn hybrid_position(
    selection: &Projection,
    x_d: &Vector3<f64>,
    f_d: &Vector3<f64>,
    k: &StiffnessParams,
) -> Vector3<f64> {
    selection.matrix() * x_d + selection.complement() * f_d.component_div(&k.k_f)
}

/// Angles achieving torques `τx_d, τy_d` in `T` at yaw `y_d`.
///
/// Pitch depends only on the given channels, so it is evaluated first and
/// substituted into the roll row.
pub fn hybrid_orientation_2t1a(
    tau_x: f64,
    tau_y: f64,
    yaw: f64,
    k: &StiffnessParams,
) -> Result<RollPitchYaw, StiffnessError> {
    let (sy, cy) = yaw.sin_cos();
    let pitch = (tau_y * cy - tau_x * sy) / k.k_tau.y;
    check_pitch(pitch)?;
    let (sp, cp) = pitch.sin_cos();
    let roll = ((tau_x * cy + tau_y * sy) * cp - k.k_tau.z * yaw * sp) / k.k_tau.x;
    Ok(RollPitchYaw::new(roll, pitch, yaw))
}

/// Angles achieving torque `τz_d` at the given roll and pitch.
pub fn hybrid_orientation_1t2a(tau_z: f64, roll: f64, pitch: f64, k: &StiffnessParams) -> RollPitchYaw {
    RollPitchYaw::new(roll, pitch, tau_z / k.k_tau.z)
}

/// Rotation of the relative pose given by a gimbal-angle vector.
pub fn relative_rotation(rpy: &RollPitchYaw) -> Matrix3<f64> {
    *rpy_to_rotation(rpy).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn k(kt: [f64; 3], kf: [f64; 3]) -> StiffnessParams {
        StiffnessParams::new(Vector3::from(kt), Vector3::from(kf)).unwrap()
    }

    /// `Nᵀ K_τ Θ` written out entry by entry in plain `f64`.
    fn torque_by_hand(r: f64, p: f64, w: f64, kt: [f64; 3]) -> Vector3<f64> {
        let g = [kt[0] * r, kt[1] * p, kt[2] * w];
        let sec = 1.0 / p.cos();
        Vector3::new(
            w.cos() * sec * g[0] - w.sin() * g[1] + w.cos() * p.tan() * g[2],
            w.sin() * sec * g[0] + w.cos() * g[1] + w.sin() * p.tan() * g[2],
            g[2],
        )
    }

    /// Newton root finding on the forward map; independent of the closed form.
    /// Newton on `Θ - K_τ⁻¹ Mᵀ(Θ) τ = 0`, started at zero.
    fn newton_inverse(tau: &Vector3<f64>, k: &StiffnessParams) -> Vector3<f64> {
        let g = |th: &Vector3<f64>| {
            th - (crate::se3::rate_matrix(&RollPitchYaw::from_vector(th)).transpose() * tau).component_div(k.k_tau())
        };
        let mut th = Vector3::zeros();
        for _ in 0..50 {
            let res = g(&th);
            if res.amax() < 1e-15 {
                break;
            }
            let h = 1e-7;
            let mut j = Matrix3::zeros();
            for c in 0..3 {
                let mut e = Vector3::zeros();
                e[c] = h;
                j.set_column(c, &((g(&(th + e)) - g(&(th - e))) / (2.0 * h)));
            }
            th -= j.lu().solve(&res).unwrap();
        }
        th
    }

    #[test]
    fn undeformed_spring_is_zero_wrench() {
        let w = stiffness_forward(&RollPitchYaw::ZERO, &Vector3::zeros(), &StiffnessParams::default())
            .unwrap();
        assert_eq!(w.norm(), 0.0);
        assert_eq!(w.frame, Frame::Gripper);
    }

    #[test]
    fn linear_translational_spring() {
        let kk = k([1.0; 3], [100.0; 3]);
        let w = stiffness_forward(&RollPitchYaw::ZERO, &Vector3::new(0.01, 0.0, 0.0), &kk).unwrap();
        assert_relative_eq!(w.force, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_eq!(w.torque, Vector3::zeros());
    }

    #[test]
    fn torque_matches_hand_evaluation() {
        let kk = k([2.0, 3.0, 4.0], [1.0; 3]);
        let w = stiffness_forward(&RollPitchYaw::new(0.1, 0.2, 0.3), &Vector3::zeros(), &kk).unwrap();
        let expected = torque_by_hand(0.1, 0.2, 0.3, [2.0, 3.0, 4.0]);
        assert_relative_eq!(w.torque, expected, epsilon = 1e-14);
        // frozen from the hand evaluation above
        assert_relative_eq!(
            w.torque,
            Vector3::new(0.25002881433217378, 0.70539393664270689, 1.2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn inverse_of_zero_and_pure_yaw_torque() {
        let kk = StiffnessParams::default();
        let (rpy, x) = stiffness_inverse(&SpatialForce::zero(Frame::Gripper), &kk).unwrap();
        assert_eq!(rpy, RollPitchYaw::ZERO);
        assert_eq!(x, Vector3::zeros());

        let kk = k([1.0, 1.0, 2.0], [1.0; 3]);
        let w = SpatialForce::new(Frame::Gripper, Vector3::new(0.0, 0.0, 0.5), Vector3::zeros());
        let (rpy, _) = stiffness_inverse(&w, &kk).unwrap();
        assert_relative_eq!(rpy.yaw, 0.25, epsilon = 1e-15);
        assert_relative_eq!(rpy.pitch, 0.0, epsilon = 1e-15);
        assert_relative_eq!(rpy.roll, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn roll_row_grouping_reading() {
        // Only the reading with 1/k_r dividing the whole first row satisfies
        // the round trip with the forward map.
        let kk = k([2.5, 1.5, 0.7], [1.0; 3]);
        let rpy = RollPitchYaw::new(0.4, -0.3, 0.6);
        let tau = stiffness_forward(&rpy, &Vector3::zeros(), &kk).unwrap().torque;
        let (y, p) = (rpy.yaw, rpy.pitch);
        let whole = ((tau.x * y.cos() + tau.y * y.sin()) * p.cos() - tau.z * p.sin()) / 2.5;
        let partial = (tau.x * y.cos() + tau.y * y.sin()) * p.cos() / 2.5 - tau.z * p.sin();
        assert_relative_eq!(whole, rpy.roll, epsilon = 1e-12);
        assert!((partial - rpy.roll).abs() > 1e-3);
    }

    #[test]
    fn out_of_range_pitch() {
        let kk = k([1.0; 3], [1.0; 3]);
        let w = SpatialForce::new(Frame::Gripper, Vector3::new(0.0, 1.6, 0.0), Vector3::zeros());
        assert!(matches!(stiffness_inverse(&w, &kk), Err(StiffnessError::OutOfRange { .. })));
    }

    #[test]
    fn jacobian_det_values() {
        let kk = k([2.0, 3.0, 4.0], [1.0; 3]);
        assert_relative_eq!(stiffness_jacobian_det(&RollPitchYaw::ZERO, &kk).unwrap(), 24.0);
        let kk = k([1.0; 3], [1.0; 3]);
        let d = stiffness_jacobian_det(&RollPitchYaw::new(0.0, FRAC_PI_3, 0.0), &kk).unwrap();
        assert_relative_eq!(d, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_nonpositive_stiffness() {
        assert!(StiffnessParams::new(Vector3::new(1.0, 0.0, 1.0), Vector3::repeat(1.0)).is_err());
        assert!(StiffnessParams::new(Vector3::repeat(1.0), Vector3::new(1.0, f64::NAN, 1.0)).is_err());
        let bad: Result<StiffnessParams, _> =
            serde_json::from_str(r#"{"k_tau":[1,1,-1],"k_f":[1,1,1]}"#);
        assert!(bad.is_err());
        let unknown: Result<StiffnessParams, _> =
            serde_json::from_str(r#"{"k_tau":[1,1,1],"k_f":[1,1,1],"k_z":3}"#);
        assert!(unknown.is_err());
        let ok: StiffnessParams = serde_json::from_str(r#"{"k_tau":[2,2,2],"k_f":[300,300,300]}"#).unwrap();
        assert_eq!(ok, StiffnessParams::default());
    }

    #[test]
    fn hybrid_position_cases() {
        let kk = k([1.0; 3], [1000.0; 3]);
        let xd = Vector3::new(0.1, -0.2, 0.3);
        let x = hybrid_position(&Projection::axes(true, true, true), &xd, &Vector3::new(5.0, 6.0, 7.0), &kk);
        assert_eq!(x, xd);
        let x = hybrid_position(&Projection::axes(false, false, false), &xd, &Vector3::new(0.0, 0.0, 10.0), &kk);
        assert_relative_eq!(x, Vector3::new(0.0, 0.0, 0.01), epsilon = 1e-15);
        let kk = k([1.0; 3], [1000.0, 1000.0, 500.0]);
        let x = hybrid_position(
            &Projection::axes(true, true, false),
            &Vector3::new(0.1, 0.2, 9.0),
            &Vector3::new(3.0, 4.0, 5.0),
            &kk,
        );
        assert_relative_eq!(x, Vector3::new(0.1, 0.2, 0.01), epsilon = 1e-15);
    }

    #[test]
    fn projection_validation() {
        assert!(Projection::new(Matrix3::identity() * 0.5).is_err());
        let v = Vector3::new(1.0, 1.0, 0.0).normalize();
        let p = Projection::new(v * v.transpose()).unwrap();
        let q = p.rotated(&relative_rotation(&RollPitchYaw::new(0.3, 0.2, 0.1)));
        assert!(Projection::new(*q.matrix()).is_ok());
    }

    #[test]
    fn hybrid_orientation_simple_cases() {
        let kk = StiffnessParams::default();
        assert_eq!(hybrid_orientation_2t1a(0.0, 0.0, 0.0, &kk).unwrap(), RollPitchYaw::ZERO);
        let rpy = hybrid_orientation_2t1a(0.0, 0.0, 0.4, &kk).unwrap();
        assert_eq!((rpy.roll, rpy.pitch, rpy.yaw), (0.0, 0.0, 0.4));
        let w = stiffness_forward(&rpy, &Vector3::zeros(), &kk).unwrap();
        assert!(w.torque.x.abs() < 1e-12 && w.torque.y.abs() < 1e-12);

        assert_eq!(hybrid_orientation_1t2a(0.0, 0.0, 0.0, &kk), RollPitchYaw::ZERO);
        let kk = k([1.0, 1.0, 4.0], [1.0; 3]);
        let rpy = hybrid_orientation_1t2a(1.0, 0.1, 0.2, &kk);
        assert_eq!(rpy, RollPitchYaw::new(0.1, 0.2, 0.25));
        let w = stiffness_forward(&rpy, &Vector3::zeros(), &kk).unwrap();
        assert!((w.torque.z - 1.0).abs() < 1e-12);
    }

    fn stiffness_strategy() -> impl Strategy<Value = StiffnessParams> {
        proptest::array::uniform6(-1.0..2.0f64)
            .prop_map(|e| StiffnessParams::from_array(e.map(|v| 10f64.powf(v))).unwrap())
    }

    fn rpy_strategy() -> impl Strategy<Value = RollPitchYaw> {
        (-1.5..1.5f64, -FRAC_PI_3..FRAC_PI_3, -1.5..1.5f64).prop_map(|(r, p, y)| RollPitchYaw::new(r, p, y))
    }

    proptest! {
        #[test]
        fn inverse_matches_newton_oracle(rpy in rpy_strategy(), kk in stiffness_strategy()) {
            let tau = stiffness_forward(&rpy, &Vector3::zeros(), &kk).unwrap().torque;
            let (closed, _) = stiffness_inverse(&SpatialForce::new(Frame::Gripper, tau, Vector3::zeros()), &kk).unwrap();
            prop_assert!((closed.to_vector() - rpy.to_vector()).amax() < 1e-9);
            let newton = newton_inverse(&tau, &kk);
            prop_assert!((closed.to_vector() - newton).amax() < 1e-8, "{:?} vs {:?}", closed, newton);
        }

        #[test]
        fn two_torques_one_angle_matches_forward(
            tx in -1.0..1.0f64, ty in -1.0..1.0f64, yaw in -1.0..1.0f64, kk in stiffness_strategy()
        ) {
            let ty = ty * kk.k_tau().y;
            let tx = tx * kk.k_tau().y;
            match hybrid_orientation_2t1a(tx, ty, yaw, &kk) {
                Ok(rpy) => {
                    prop_assert_eq!(rpy.yaw, yaw);
                    let w = stiffness_forward(&rpy, &Vector3::zeros(), &kk).unwrap();
                    let scale = 1.0 + tx.abs() + ty.abs();
                    prop_assert!((w.torque.x - tx).abs() < 1e-8 * scale);
                    prop_assert!((w.torque.y - ty).abs() < 1e-8 * scale);
                }
                Err(StiffnessError::OutOfRange { pitch }) => prop_assert!(pitch.abs() >= FRAC_PI_2 || pitch.cos() < 1e-6),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn one_torque_two_angles_matches_forward(
            tz in -2.0..2.0f64, r in -1.0..1.0f64, p in -1.0..1.0f64, kk in stiffness_strategy()
        ) {
            let rpy = hybrid_orientation_1t2a(tz, r, p, &kk);
            let w = stiffness_forward(&rpy, &Vector3::zeros(), &kk).unwrap();
            prop_assert!((w.torque.z - tz).abs() < 1e-12 * (1.0 + tz.abs()));
            prop_assert_eq!((rpy.roll, rpy.pitch), (r, p));
        }

        #[test]
        fn translational_map_is_homogeneous(
            x in proptest::array::uniform3(-0.1..0.1f64), alpha in 0.0..10.0f64, kk in stiffness_strategy()
        ) {
            let x = Vector3::from(x);
            let f1 = stiffness_forward(&RollPitchYaw::ZERO, &(x * alpha), &kk).unwrap().force;
            let f0 = stiffness_forward(&RollPitchYaw::ZERO, &x, &kk).unwrap().force;
            prop_assert!((f1 - f0 * alpha).amax() <= 1e-12 * (1.0 + f1.amax()));
        }
    }
}
