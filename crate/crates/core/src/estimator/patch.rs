//! Contact patch extraction by depth background subtraction.

use nalgebra::Vector3;

use super::image::{Image, Mask};
use super::{CameraIntrinsics, EstimatorError, Side};

/// Masked region of one membrane and its centroid in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPatch {
    pub mask: Mask,
    /// Mean back-projected point over the mask, camera frame, m.
    pub centroid: Vector3<f64>,
    pub pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOptions {
    /// Minimum depth decrease counted as contact, m.
    pub threshold: f64,
    /// Opening kernel size, px.
    pub kernel: usize,
    pub min_pixels: usize,
}

impl Default for PatchOptions {
    fn default() -> Self {
        Self { threshold: 0.001, kernel: 5, min_pixels: 20 }
    }
}

pub fn estimate_contact_patch(
    background: &Image,
    depth: &Image,
    intrinsics: &CameraIntrinsics,
    options: &PatchOptions,
    side: Side,
) -> Result<ContactPatch, EstimatorError> {
    if !background.same_size(depth) || depth.width != intrinsics.width || depth.height != intrinsics.height {
        return Err(EstimatorError::SizeMismatch(format!(
            "background {}x{}, depth {}x{}, intrinsics {}x{}",
            background.width, background.height, depth.width, depth.height, intrinsics.width, intrinsics.height
        )));
    }
    let raw = Mask {
        width: depth.width,
        height: depth.height,
        data: background
            .data
            .iter()
            .zip(&depth.data)
            .map(|(d0, dk)| d0 - dk > options.threshold && dk.is_finite() && *dk > 0.0)
            .collect(),
    };
    let mask = raw.open(options.kernel);
    let pixels = mask.count();
    if pixels < options.min_pixels.max(1) {
        return Err(EstimatorError::NoContact { camera: side, pixels });
    }
    let mut sum = Vector3::zeros();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if mask.get(u, v) {
                sum += intrinsics.back_project(u as f64, v as f64, depth.get(u, v));
            }
        }
    }
    Ok(ContactPatch { mask, centroid: sum / pixels as f64, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(k: &CameraIntrinsics, radius: f64, press: f64) -> Image {
        Image::from_fn(k.width, k.height, |u, v| {
            let r2 = (u as f64 - k.cx).powi(2) + (v as f64 - k.cy).powi(2);
            if r2 <= radius * radius { 0.05 - press } else { 0.05 }
        })
    }

    #[test]
    fn unchanged_depth_is_no_contact() {
        let k = CameraIntrinsics::default();
        let d0 = Image::new(k.width, k.height, 0.05);
        let err = estimate_contact_patch(&d0, &d0, &k, &PatchOptions::default(), Side::Left).unwrap_err();
        assert_eq!(err, EstimatorError::NoContact { camera: Side::Left, pixels: 0 });
    }

    #[test]
    fn centred_disc_centroid_on_optical_axis() {
        let k = CameraIntrinsics::default();
        let d0 = Image::new(k.width, k.height, 0.05);
        let dk = disc(&k, 10.0, 0.003);
        let p = estimate_contact_patch(&d0, &dk, &k, &PatchOptions::default(), Side::Right).unwrap();
        assert!(p.centroid.x.abs() < 1e-12 && p.centroid.y.abs() < 1e-12);
        assert!((p.centroid.z - 0.047).abs() < 1e-12);
    }

    #[test]
    fn shallow_change_below_threshold_ignored() {
        let k = CameraIntrinsics::default();
        let d0 = Image::new(k.width, k.height, 0.05);
        let dk = disc(&k, 10.0, 0.0009);
        assert!(estimate_contact_patch(&d0, &dk, &k, &PatchOptions::default(), Side::Left).is_err());
    }

    #[test]
    fn size_mismatch_rejected() {
        let k = CameraIntrinsics::default();
        let d0 = Image::new(k.width, k.height, 0.05);
        let dk = Image::new(10, 10, 0.05);
        assert!(matches!(
            estimate_contact_patch(&d0, &dk, &k, &PatchOptions::default(), Side::Left),
            Err(EstimatorError::SizeMismatch(_))
        ));
    }
}
