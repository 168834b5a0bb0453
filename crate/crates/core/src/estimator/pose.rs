//! Full relative-pose pipeline and its calibration.

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use super::flow::{estimate_flow, estimate_pitch, FlowOptions};
use super::frame::estimate_frame;
use super::image::Image;
use super::patch::{estimate_contact_patch, PatchOptions};
use super::{EstimatorError, SensorFrame, Side};
use crate::se3::{Frame, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorParams {
    /// Depth decrease counted as contact, m.
    pub threshold: f64,
    /// Opening kernel size, px.
    pub kernel: usize,
    pub min_pixels: usize,
    pub flow: FlowOptions,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        let patch = PatchOptions::default();
        Self { threshold: patch.threshold, kernel: patch.kernel, min_pixels: patch.min_pixels, flow: FlowOptions::default() }
    }
}

impl EstimatorParams {
    pub fn patch(&self) -> PatchOptions {
        PatchOptions { threshold: self.threshold, kernel: self.kernel, min_pixels: self.min_pixels }
    }
}

/// Everything fixed once per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Depth images with nothing touching the membranes.
    pub background_left: Image,
    pub background_right: Image,
    pub k_curl: f64,
    /// `ᵀX^G`: the gripper body in the nominal grasp frame.
    pub body_in_gripper: RigidTransform,
    pub params: EstimatorParams,
}

impl Calibration {
    pub fn background(&self, side: Side) -> &Image {
        match side {
            Side::Left => &self.background_left,
            Side::Right => &self.background_right,
        }
    }
}

/// `ᴳX^{C′}` from the two contact patches.
pub fn estimate_zero_pitch_frame(
    frame: &SensorFrame,
    background_left: &Image,
    background_right: &Image,
    params: &EstimatorParams,
) -> Result<RigidTransform, EstimatorError> {
    let mut points = [nalgebra::Vector3::zeros(); 2];
    for (i, (side, background)) in [(Side::Left, background_left), (Side::Right, background_right)].into_iter().enumerate() {
        let view = frame.view(side);
        view.validate()?;
        let patch = estimate_contact_patch(background, &view.depth, &view.intrinsics, &params.patch(), side)?;
        points[i] = view.extrinsics.transform_point(&patch.centroid);
    }
    estimate_frame(&points[0], &points[1])
}

/// Uncalibrated curl-based pitch: the mean of both cameras' curls, halved,
/// with the right camera's mirrored image axis undone.
pub fn raw_pitch(frame: &SensorFrame, reference: &SensorFrame, flow: &FlowOptions) -> Result<f64, EstimatorError> {
    let left = estimate_pitch(&estimate_flow(&reference.left.ir, &frame.left.ir, flow)?, 1.0)?;
    let right = estimate_pitch(&estimate_flow(&reference.right.ir, &frame.right.ir, flow)?, 1.0)?;
    Ok(0.5 * (left - right))
}

/// `ᴳX^C` before the fixed body-to-gripper calibration is applied.
pub fn estimate_body_pose(
    frame: &SensorFrame,
    reference: &SensorFrame,
    background_left: &Image,
    background_right: &Image,
    k_curl: f64,
    params: &EstimatorParams,
) -> Result<RigidTransform, EstimatorError> {
    let zero_pitch = estimate_zero_pitch_frame(frame, background_left, background_right, params)?;
    let pitch = k_curl * raw_pitch(frame, reference, &params.flow)?;
    let about_y = RigidTransform::new(
        Frame::ZeroPitch,
        Frame::Tool,
        Rotation3::from_axis_angle(&nalgebra::Vector3::y_axis(), pitch),
        nalgebra::Vector3::zeros(),
    );
    Ok(zero_pitch.compose(&about_y)?)
}

/// `ᵀX^C` for `frame`, with IR flow measured against `reference`.
pub fn estimate_relative_pose(
    frame: &SensorFrame,
    reference: &SensorFrame,
    cal: &Calibration,
) -> Result<RigidTransform, EstimatorError> {
    let body = estimate_body_pose(frame, reference, &cal.background_left, &cal.background_right, cal.k_curl, &cal.params)?;
    Ok(cal.body_in_gripper.compose(&body)?)
}

/// Fits `k_curl` by least squares over `(frame, true pitch)` pairs and fixes
/// `ᵀX^G` so that `reference` maps to the identity.
pub fn calibrate(
    background: &SensorFrame,
    reference: &SensorFrame,
    pitch_sweep: &[(SensorFrame, f64)],
    params: &EstimatorParams,
) -> Result<Calibration, EstimatorError> {
    let (mut num, mut den) = (0.0, 0.0);
    for (frame, pitch) in pitch_sweep {
        let raw = raw_pitch(frame, reference, &params.flow)?;
        num += raw * pitch;
        den += raw * raw;
    }
    if !(den > 0.0) {
        return Err(EstimatorError::InsufficientFlow { valid: 0, total: pitch_sweep.len() });
    }
    let k_curl = num / den;
    let (bl, br) = (background.left.depth.clone(), background.right.depth.clone());
    let body = estimate_body_pose(reference, reference, &bl, &br, k_curl, params)?;
    let body_in_gripper = body.inverse().relabel(Frame::Gripper, Frame::GripperBody);
    Ok(Calibration { background_left: bl, background_right: br, k_curl, body_in_gripper, params: *params })
}
