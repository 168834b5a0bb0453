//! Visuotactile relative-pose estimation from stereo bubble-sensor frames.
//!
//! Each gripper finger carries a membrane watched from behind by a depth/IR
//! camera. Contact patches are found by depth background subtraction; their
//! centroids fix the tool position, roll and yaw, and the curl of the IR
//! optical flow gives the pitch about the axis joining the patches.

pub mod corpus;
pub mod flow;
pub mod frame;
pub mod image;
pub mod patch;
pub mod pose;
pub mod render;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{RigidTransform, Se3Error};
pub use flow::{estimate_flow, estimate_pitch, FlowField};
pub use frame::estimate_frame;
pub use image::{Image, Mask};
pub use patch::{estimate_contact_patch, ContactPatch};
pub use pose::{calibrate, estimate_relative_pose, Calibration, EstimatorParams};
pub use render::{render_synthetic, BubbleGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("no contact patch in the {camera} camera ({pixels} pixels)")]
    NoContact { camera: Side, pixels: usize },
    #[error("contact patches coincide ({separation:.3e} m apart)")]
    DegeneratePatches { separation: f64 },
    #[error("patch axis has no component along y (v = {v:?})")]
    DegenerateFrame { v: [f64; 3] },
    #[error("only {valid} of {total} flow cells are usable")]
    InsufficientFlow { valid: usize, total: usize },
    #[error("image size mismatch: {0}")]
    SizeMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Se3(#[from] Se3Error),
}

/// Which finger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// -1 for the left membrane at `y = -d`, +1 for the right one.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Pinhole intrinsics; pixel `(u, v)` is column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self { fx: 100.0, fy: 100.0, cx: 63.5, cy: 47.5, width: 128, height: 96 }
    }
}

impl CameraIntrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K⁻¹ [u, v, 1]ᵀ`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Camera-frame point at z-depth `depth` along pixel `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        self.ray(u, v) * depth
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let inside = self.cx >= 0.0 && self.cy >= 0.0 && self.cx < self.width as f64 && self.cy < self.height as f64;
        if !(self.fx > 0.0 && self.fy > 0.0 && inside) {
            return Err(EstimatorError::Format(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }
}

/// One camera's images and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    /// z-depth, meters.
    pub depth: Image,
    /// Intensity in `[0, 1]`.
    pub ir: Image,
    pub intrinsics: CameraIntrinsics,
    /// `ᴳX^L` or `ᴳX^R`.
    pub extrinsics: RigidTransform,
}

impl CameraView {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        self.intrinsics.validate()?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        for (name, img) in [("depth", &self.depth), ("ir", &self.ir)] {
            if img.width != w || img.height != h {
                return Err(EstimatorError::SizeMismatch(format!(
                    "{name} image is {}x{}, intrinsics say {w}x{h}",
                    img.width, img.height
                )));
            }
        }
        Ok(())
    }
}

/// Simultaneous captures from both fingers.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub left: CameraView,
    pub right: CameraView,
}

impl SensorFrame {
    pub fn view(&self, side: Side) -> &CameraView {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}
