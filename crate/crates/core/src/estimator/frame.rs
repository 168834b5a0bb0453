//! Contact frame from the two patch centroids.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::EstimatorError;
use crate::se3::{Frame, RigidTransform};

/// `ᴳX^{C′}` from the left and right patch centroids in `G`.
///
/// Origin at the midpoint; `v` along `p_R - p_L`; `u` horizontal (`u_z = 0`)
/// and orthogonal to `v`; `w = u × v`.
pub fn estimate_frame(left: &Vector3<f64>, right: &Vector3<f64>) -> Result<RigidTransform, EstimatorError> {
    let d = right - left;
    let separation = d.norm();
    if !(separation > 1e-3) {
        return Err(EstimatorError::DegeneratePatches { separation });
    }
    let v = d / separation;
    if v.y.abs() < 1e-9 {
        return Err(EstimatorError::DegenerateFrame { v: [v.x, v.y, v.z] });
    }
    let u = Vector3::new(1.0, -v.x / v.y, 0.0).normalize();
    let w = u.cross(&v);
    let rotation = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, w]));
    Ok(RigidTransform::new(Frame::GripperBody, Frame::ZeroPitch, rotation, (left + right) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nominal_grasp_is_identity() {
        let x = estimate_frame(&Vector3::new(0.0, -0.02, 0.0), &Vector3::new(0.0, 0.02, 0.0)).unwrap();
        assert_eq!(x.translation, Vector3::zeros());
        assert!((x.rotation.matrix() - Matrix3::identity()).amax() < 1e-15);
    }

    #[test]
    fn vertical_offset_gives_roll() {
        let x = estimate_frame(&Vector3::new(0.0, -0.02, 0.005), &Vector3::new(0.0, 0.02, -0.005)).unwrap();
        let rpy = x.rpy().unwrap();
        // v = (0, 0.04, -0.01)/|.|, w = (0, 0.01, 0.04)/|.|: roll = atan2(v_z, w_z).
        assert!((rpy.roll - (-0.01f64).atan2(0.04)).abs() < 1e-14);
        assert!(rpy.pitch.abs() < 1e-14 && rpy.yaw.abs() < 1e-14);
    }

    #[test]
    fn fore_aft_offset_gives_yaw() {
        let x = estimate_frame(&Vector3::new(0.004, -0.02, 0.0), &Vector3::new(-0.004, 0.02, 0.0)).unwrap();
        let rpy = x.rpy().unwrap();
        assert!((rpy.yaw - (0.008f64).atan2(0.04)).abs() < 1e-14);
        assert!(rpy.roll.abs() < 1e-14 && rpy.pitch.abs() < 1e-14);
    }

    #[test]
    fn coincident_and_sideways_patches_rejected() {
        let p = Vector3::new(0.0, 0.01, 0.0);
        assert!(matches!(estimate_frame(&p, &p), Err(EstimatorError::DegeneratePatches { .. })));
        let q = Vector3::new(0.03, 0.01, 0.0);
        assert!(matches!(estimate_frame(&p, &q), Err(EstimatorError::DegenerateFrame { .. })));
    }

    proptest! {
        #[test]
        fn output_is_a_rotation(
            l in prop::array::uniform3(-0.05f64..0.05),
            r in prop::array::uniform3(-0.05f64..0.05),
        ) {
            let (l, r) = (Vector3::from(l), Vector3::from(r));
            if let Ok(x) = estimate_frame(&l, &r) {
                let m = x.rotation.matrix();
                prop_assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-12);
                prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
                prop_assert!(m[(2, 0)].abs() < 1e-15);
            }
        }
    }
}
