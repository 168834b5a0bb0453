//! Synthetic stereo bubble frames with known tool pose.
//!
//! Gripper frame `G`: the membranes rest on the planes `y = ∓d`, each watched
//! by a camera `D0` behind it looking toward the tool. A cylindrical tool of
//! radius `ρ` with its axis along `C`'s x touches the membranes at the
//! material points `(0, ∓ρ, 0)` of `C`. Each membrane is indented over an
//! elliptical footprint around its contact point, following the cylinder
//! surface, then smoothed. The speckle texture printed on the membrane moves
//! rigidly with the in-plane motion of the contact.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{quantize_depth, quantize_intensity, Image};
use super::{CameraIntrinsics, CameraView, SensorFrame, Side};
use crate::se3::{Frame, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BubbleGeometry {
    /// Distance from the gripper mid-plane to each resting membrane, m.
    pub membrane_offset: f64,
    /// Camera to resting membrane distance, m.
    pub camera_standoff: f64,
    /// Footprint semi-axis along the tool axis, m.
    pub contact_half_length: f64,
    /// Footprint semi-axis across the tool axis, as a fraction of the radius.
    pub contact_width_ratio: f64,
    /// Fraction of the tool's in-plane x motion followed by the patch.
    pub shear_lag: f64,
    /// Membrane smoothing, m.
    pub blur: f64,
    /// Membrane raster spacing, m.
    pub resolution: f64,
    /// Half extent of the membrane raster along x and z, m.
    pub half_extent: f64,
    /// Speckle correlation length, m.
    pub speckle: f64,
    pub texture_seed: u64,
}

impl Default for BubbleGeometry {
    fn default() -> Self {
        Self {
            membrane_offset: 0.007,
            camera_standoff: 0.05,
            contact_half_length: 0.025,
            contact_width_ratio: 0.7,
            shear_lag: 0.8,
            blur: 0.002,
            resolution: 0.0005,
            half_extent: 0.05,
            speckle: 0.0006,
            texture_seed: 7,
        }
    }
}

/// `ᴳX^L` or `ᴳX^R`. The image v axis points along `-z_G`; the left
/// camera's u axis is `+x_G`, the right camera's `-x_G`.
pub fn camera_extrinsics(side: Side, geometry: &BubbleGeometry) -> RigidTransform {
    let s = side.sign();
    let forward = Vector3::new(0.0, -s, 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let right = down.cross(&forward);
    let rotation = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
    let child = match side {
        Side::Left => Frame::LeftCamera,
        Side::Right => Frame::RightCamera,
    };
    let translation = Vector3::new(0.0, s * (geometry.membrane_offset + geometry.camera_standoff), 0.0);
    RigidTransform::new(Frame::GripperBody, child, rotation, translation)
}

/// In-plane rotation of the membrane about `+y_G` produced by a tool rotation.
pub fn in_plane_rotation(tool: &RigidTransform) -> f64 {
    let a = tool.rotation * Vector3::x();
    (-a.z).atan2(a.x)
}

fn rot_y2(theta: f64, p: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c * p.x + s * p.y, -s * p.x + c * p.y)
}

/// State of one membrane under the given tool pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembraneContact {
    /// Penetration of the contact point through the resting membrane, m.
    pub penetration: f64,
    /// Footprint center in membrane coordinates `(x_G, z_G)`.
    pub center: Vector2<f64>,
    /// In-plane rotation of the membrane material, rad.
    pub rotation: f64,
}

pub fn membrane_contact(side: Side, tool: &RigidTransform, radius: f64, geometry: &BubbleGeometry) -> MembraneContact {
    let s = side.sign();
    let c = tool.transform_point(&Vector3::new(0.0, s * radius, 0.0));
    MembraneContact {
        penetration: s * c.y - geometry.membrane_offset,
        center: Vector2::new(geometry.shear_lag * c.x, c.z),
        rotation: in_plane_rotation(tool),
    }
}

struct Raster {
    /// Index of the cell at the membrane origin.
    middle: f64,
    resolution: f64,
    image: Image,
}

impl Raster {
    fn new(geometry: &BubbleGeometry) -> Self {
        let half = (geometry.half_extent / geometry.resolution).round() as usize;
        let n = 2 * half + 1;
        Self { middle: half as f64, resolution: geometry.resolution, image: Image::new(n, n, 0.0) }
    }

    fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.middle) * self.resolution
    }

    fn sample(&self, m: Vector2<f64>) -> f64 {
        self.image.sample(m.x / self.resolution + self.middle, m.y / self.resolution + self.middle)
    }
}

fn indentation(side: Side, tool: &RigidTransform, radius: f64, geometry: &BubbleGeometry) -> Option<Raster> {
    let contact = membrane_contact(side, tool, radius, geometry);
    if contact.penetration <= 0.0 {
        return None;
    }
    let a = tool.rotation * Vector3::x();
    let in_plane = Vector2::new(a.x, a.z);
    let along = in_plane.normalize();
    let across = Vector2::new(-along.y, along.x);
    let slope = side.sign() * a.y / in_plane.norm();
    let half_length = geometry.contact_half_length;
    let half_width = geometry.contact_width_ratio * radius;
    let mut raster = Raster::new(geometry);
    let n = raster.image.width;
    for j in 0..n {
        for i in 0..n {
            let d = Vector2::new(raster.coord(i), raster.coord(j)) - contact.center;
            let (l, t) = (d.dot(&along), d.dot(&across));
            if (l / half_length).powi(2) + (t / half_width).powi(2) <= 1.0 {
                let sag = radius - (radius * radius - t * t).max(0.0).sqrt();
                raster.image.set(i, j, (contact.penetration + slope * l - sag).max(0.0));
            }
        }
    }
    raster.image = raster.image.gaussian_blur(geometry.blur / geometry.resolution);
    Some(raster)
}

fn texture(side: Side, geometry: &BubbleGeometry) -> Raster {
    let mut raster = Raster::new(geometry);
    let seed = geometry.texture_seed.wrapping_mul(2).wrapping_add(matches!(side, Side::Right) as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in raster.image.data.iter_mut() {
        *v = rng.random::<f64>();
    }
    let img = raster.image.gaussian_blur(geometry.speckle / geometry.resolution);
    let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
    let std = (img.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.data.len() as f64).sqrt();
    raster.image = Image { data: img.data.iter().map(|v| (0.5 + 0.18 * (v - mean) / std).clamp(0.0, 1.0)).collect(), ..img };
    raster
}

/// Nearest depth along a ray where it meets the indented membrane, i.e. the
/// smallest root of `D = D0 − h(D)`, by marching from the deepest possible
/// point and bisecting the first bracket.
fn surface_depth(d0: f64, peak: f64, height: impl Fn(f64) -> f64) -> f64 {
    let gap = |d: f64| d - d0 + height(d);
    let step = 5e-4;
    let mut lo = d0 - peak;
    if gap(lo) >= 0.0 {
        return lo;
    }
    let mut hi = lo;
    while hi < d0 {
        hi = (hi + step).min(d0);
        if gap(hi) >= 0.0 {
            break;
        }
        lo = hi;
    }
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn render_view(
    side: Side,
    tool: &RigidTransform,
    radius: f64,
    geometry: &BubbleGeometry,
    intrinsics: &CameraIntrinsics,
) -> CameraView {
    let extrinsics = camera_extrinsics(side, geometry);
    let bump = indentation(side, tool, radius, geometry);
    let contact = membrane_contact(side, tool, radius, geometry);
    let texture = texture(side, geometry);
    let d0 = geometry.camera_standoff;
    let peak = bump.as_ref().map_or(0.0, |b| b.image.data.iter().cloned().fold(0.0, f64::max));
    let to_plane = |p: Vector3<f64>| {
        let g = extrinsics.transform_point(&p);
        Vector2::new(g.x, g.z)
    };
    let mut depth = Image::new(intrinsics.width, intrinsics.height, d0);
    let mut ir = Image::new(intrinsics.width, intrinsics.height, 0.0);
    for v in 0..intrinsics.height {
        for u in 0..intrinsics.width {
            let ray = intrinsics.ray(u as f64, v as f64);
            let d = match &bump {
                Some(bump) => surface_depth(d0, peak, |d| bump.sample(to_plane(ray * d))),
                None => d0,
            };
            let m = to_plane(ray * d);
            let rest = if bump.is_some() { rot_y2(-contact.rotation, m - contact.center) } else { m };
            depth.set(u, v, quantize_depth(d));
            ir.set(u, v, quantize_intensity(texture.sample(rest)));
        }
    }
    CameraView { depth, ir, intrinsics: *intrinsics, extrinsics }
}

/// Renders both cameras for tool pose `ᴳX^C`.
pub fn render_synthetic(
    tool: &RigidTransform,
    radius: f64,
    geometry: &BubbleGeometry,
    intrinsics: &CameraIntrinsics,
) -> SensorFrame {
    SensorFrame {
        left: render_view(Side::Left, tool, radius, geometry, intrinsics),
        right: render_view(Side::Right, tool, radius, geometry, intrinsics),
    }
}

/// Tool pose far from both membranes.
pub fn no_contact_pose() -> RigidTransform {
    RigidTransform::from_translation(Frame::GripperBody, Frame::Tool, Vector3::new(0.0, 0.0, 1.0))
}

/// Adds Gaussian noise to depth (m) and intensity, requantizing both.
pub fn add_noise(frame: &SensorFrame, depth_sigma: f64, ir_sigma: f64, seed: u64) -> SensorFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = frame.clone();
    for view in [&mut out.left, &mut out.right] {
        if depth_sigma > 0.0 {
            let n = Normal::new(0.0, depth_sigma).expect("finite sigma");
            for d in view.depth.data.iter_mut() {
                *d = quantize_depth(*d + n.sample(&mut rng));
            }
        }
        if ir_sigma > 0.0 {
            let n = Normal::new(0.0, ir_sigma).expect("finite sigma");
            for i in view.ir.data.iter_mut() {
                *i = quantize_intensity(*i + n.sample(&mut rng));
            }
        }
    }
    out
}

/// Gaussian depth noise plus a fraction of pixels replaced by ±`spike` outliers.
pub fn add_salt_and_pepper(frame: &SensorFrame, sigma: f64, fraction: f64, spike: f64, seed: u64) -> SensorFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    let mut out = frame.clone();
    for view in [&mut out.left, &mut out.right] {
        for d in view.depth.data.iter_mut() {
            let mut value = *d + n.sample(&mut rng);
            if rng.random::<f64>() < fraction {
                value += if rng.random::<bool>() { spike } else { -spike };
            }
            *d = quantize_depth(value);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::RollPitchYaw;

    fn nominal() -> RigidTransform {
        RigidTransform::identity(Frame::GripperBody, Frame::Tool)
    }

    #[test]
    fn extrinsics_are_proper_rotations() {
        let g = BubbleGeometry::default();
        for side in [Side::Left, Side::Right] {
            let x = camera_extrinsics(side, &g);
            assert!((x.rotation.matrix().determinant() - 1.0).abs() < 1e-15);
            // The optical axis hits the resting membrane at the gripper's (0, ∓d, 0).
            let p = x.transform_point(&Vector3::new(0.0, 0.0, g.camera_standoff));
            assert!((p - Vector3::new(0.0, side.sign() * g.membrane_offset, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn far_tool_leaves_background() {
        let g = BubbleGeometry::default();
        let k = CameraIntrinsics::default();
        let frame = render_synthetic(&no_contact_pose(), 0.015, &g, &k);
        assert!(frame.left.depth.data.iter().all(|d| *d == 0.05));
        assert!(frame.right.depth.data.iter().all(|d| *d == 0.05));
        let again = render_synthetic(&no_contact_pose(), 0.015, &g, &k);
        assert_eq!(frame, again);
    }

    #[test]
    fn centered_press_is_symmetric() {
        let g = BubbleGeometry::default();
        let k = CameraIntrinsics::default();
        let frame = render_synthetic(&nominal(), 0.015, &g, &k);
        let d = &frame.left.depth;
        // Mirror symmetry about the principal point.
        for v in 0..k.height {
            for u in 0..k.width {
                let mu = k.width - 1 - u;
                let mv = k.height - 1 - v;
                assert!((d.get(u, v) - d.get(mu, mv)).abs() <= 1.5e-6, "({u},{v})");
            }
        }
        let centre = d.get(63, 47);
        assert!(centre < 0.05 - 0.007, "{centre}");
    }

    #[test]
    fn pitch_rotates_membrane_material() {
        let g = BubbleGeometry::default();
        let pitch = 10f64.to_radians();
        let tool = RigidTransform::from_rpy(Frame::GripperBody, Frame::Tool, &RollPitchYaw::new(0.0, pitch, 0.0), Vector3::zeros());
        let left = membrane_contact(Side::Left, &tool, 0.015, &g);
        assert!((left.rotation - pitch).abs() < 1e-12);
        assert!(left.center.norm() < 1e-15);
    }
}
