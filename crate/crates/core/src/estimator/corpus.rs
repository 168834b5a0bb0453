//! Synthetic pose sweeps: generation, persistence and error evaluation.
//!
//! On-disk layout:
//!
//! ```text
//! corpus.json                 sweep definition and frame list
//! calibration.json            k_curl, ᵀX^G, estimator parameters
//! background/ reference/      no-contact and nominal-grasp captures
//! calibration/pitch_NN/       k_curl fitting sweep
//! frames/NNNN/                evaluation frames
//! ```
//!
//! Each capture directory holds `left_depth.pgm`, `left_ir.pgm`,
//! `right_depth.pgm`, `right_ir.pgm` and `meta.json`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::image::{read_depth_pgm, read_ir_pgm, write_depth_pgm, write_ir_pgm};
use super::pose::{calibrate, estimate_relative_pose, Calibration, EstimatorParams};
use super::render::{add_noise, no_contact_pose, render_synthetic, BubbleGeometry};
use super::{CameraIntrinsics, CameraView, EstimatorError, SensorFrame, Side};
use crate::se3::{Frame, RigidTransform, RollPitchYaw};

/// Serializable rigid transform; the rotation is stored as a row-major matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub parent: Frame,
    pub child: Frame,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for PoseRecord {
    fn from(x: &RigidTransform) -> Self {
        let m = x.rotation.matrix();
        Self {
            parent: x.parent,
            child: x.child,
            rotation: [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]),
            translation: [x.translation.x, x.translation.y, x.translation.z],
        }
    }
}

impl PoseRecord {
    pub fn to_transform(&self) -> Result<RigidTransform, EstimatorError> {
        let r = self.rotation;
        let m = Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]);
        if (m.transpose() * m - Matrix3::identity()).amax() > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(EstimatorError::Format(format!("rotation {r:?} is not orthonormal")));
        }
        Ok(RigidTransform::new(self.parent, self.child, Rotation3::from_matrix_unchecked(m), Vector3::from(self.translation)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Roll,
    Pitch,
    Yaw,
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::Roll, Axis::Pitch, Axis::Yaw, Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_angle(self) -> bool {
        self.index() < 3
    }

    pub fn name(self) -> &'static str {
        ["roll", "pitch", "yaw", "x", "y", "z"][self.index()]
    }

    /// Degrees for angles, millimeters for translations.
    pub fn unit(self) -> &'static str {
        if self.is_angle() { "deg" } else { "mm" }
    }

    fn to_si(self, value: f64) -> f64 {
        if self.is_angle() { value.to_radians() } else { value * 1e-3 }
    }
}

/// Evenly spaced values of one coordinate, all others at the nominal grasp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    /// Half range in degrees or millimeters.
    pub amplitude: f64,
    pub count: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n).map(|i| -self.amplitude + 2.0 * self.amplitude * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    /// Tool cylinder radius, m.
    pub radius: f64,
    pub geometry: BubbleGeometry,
    pub intrinsics: CameraIntrinsics,
    pub params: EstimatorParams,
    /// Depth noise standard deviation, m.
    pub depth_noise: f64,
    /// Intensity noise standard deviation.
    pub ir_noise: f64,
    pub seed: u64,
    /// Pitch values for fitting k_curl, degrees.
    pub calibration_pitch: Vec<f64>,
    pub sweeps: Vec<Sweep>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let sweep = |axis, amplitude, count| Sweep { axis, amplitude, count };
        Self {
            radius: 0.015,
            geometry: BubbleGeometry::default(),
            intrinsics: CameraIntrinsics::default(),
            params: EstimatorParams::default(),
            depth_noise: 1e-4,
            ir_noise: 0.01,
            seed: 1,
            calibration_pitch: (0..9).map(|i| -12.0 + 3.0 * i as f64).collect(),
            sweeps: vec![
                sweep(Axis::Roll, 20.0, 40),
                sweep(Axis::Pitch, 15.0, 40),
                sweep(Axis::Yaw, 20.0, 40),
                sweep(Axis::Y, 5.0, 40),
                sweep(Axis::X, 5.0, 20),
                sweep(Axis::Z, 5.0, 20),
            ],
        }
    }
}

/// Ground-truth `ᵀX^C` for one sweep coordinate.
pub fn sweep_pose(axis: Axis, value: f64) -> RigidTransform {
    let mut c = [0.0; 6];
    c[axis.index()] = axis.to_si(value);
    RigidTransform::from_rpy(
        Frame::Gripper,
        Frame::Tool,
        &RollPitchYaw::new(c[0], c[1], c[2]),
        Vector3::new(c[3], c[4], c[5]),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFrame {
    pub axis: Axis,
    /// Swept coordinate in degrees or millimeters.
    pub value: f64,
    pub truth: RigidTransform,
    pub frame: SensorFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub background: SensorFrame,
    pub reference: SensorFrame,
    pub calibration: Vec<(SensorFrame, f64)>,
    pub frames: Vec<CorpusFrame>,
}

fn capture(spec: &CorpusSpec, truth: &RigidTransform, noise_seed: u64) -> SensorFrame {
    // The nominal grasp frame T coincides with the gripper body frame G.
    let pose = truth.relabel(Frame::GripperBody, Frame::Tool);
    let clean = render_synthetic(&pose, spec.radius, &spec.geometry, &spec.intrinsics);
    if spec.depth_noise > 0.0 || spec.ir_noise > 0.0 {
        add_noise(&clean, spec.depth_noise, spec.ir_noise, noise_seed)
    } else {
        clean
    }
}

fn parallel_map<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> U + Sync) -> Vec<U> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                scope.spawn(move || part.iter().enumerate().map(|(i, t)| f(c * chunk + i, t)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

pub fn generate_corpus(spec: &CorpusSpec) -> Corpus {
    let seed = spec.seed.wrapping_mul(1_000_003);
    let background = capture(spec, &no_contact_pose().relabel(Frame::Gripper, Frame::Tool), seed);
    let reference = capture(spec, &RigidTransform::identity(Frame::Gripper, Frame::Tool), seed + 1);
    let calibration = parallel_map(&spec.calibration_pitch, |i, p| {
        (capture(spec, &sweep_pose(Axis::Pitch, *p), seed + 2 + i as u64), p.to_radians())
    });
    let points: Vec<(Axis, f64)> = spec.sweeps.iter().flat_map(|s| s.values().into_iter().map(move |v| (s.axis, v))).collect();
    let base = seed + 2 + spec.calibration_pitch.len() as u64;
    let frames = parallel_map(&points, |i, &(axis, value)| {
        let truth = sweep_pose(axis, value);
        CorpusFrame { axis, value, truth, frame: capture(spec, &truth, base + i as u64) }
    });
    Corpus { spec: spec.clone(), background, reference, calibration, frames }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewMeta {
    intrinsics: CameraIntrinsics,
    extrinsics: PoseRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureMeta {
    left: ViewMeta,
    right: ViewMeta,
    /// Ground-truth `ᵀX^C`, absent for the background capture.
    pub truth: Option<PoseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameEntry {
    dir: String,
    axis: Axis,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationEntry {
    dir: String,
    pitch_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusIndex {
    spec: CorpusSpec,
    calibration: Vec<CalibrationEntry>,
    frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRecord {
    pub k_curl: f64,
    pub body_in_gripper: PoseRecord,
    pub params: EstimatorParams,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EstimatorError {
    EstimatorError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EstimatorError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EstimatorError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| EstimatorError::Format(format!("{}: {e}", path.display())))
}

/// Writes one capture directory.
pub fn save_frame(dir: &Path, frame: &SensorFrame, truth: Option<&RigidTransform>) -> Result<(), EstimatorError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (side, view) in [(Side::Left, &frame.left), (Side::Right, &frame.right)] {
        write_depth_pgm(&dir.join(format!("{side}_depth.pgm")), &view.depth)?;
        write_ir_pgm(&dir.join(format!("{side}_ir.pgm")), &view.ir)?;
    }
    let view_meta = |v: &CameraView| ViewMeta { intrinsics: v.intrinsics, extrinsics: PoseRecord::from(&v.extrinsics) };
    let meta = CaptureMeta { left: view_meta(&frame.left), right: view_meta(&frame.right), truth: truth.map(PoseRecord::from) };
    write_json(&dir.join("meta.json"), &meta)
}

/// Reads one capture directory and its metadata.
pub fn load_frame(dir: &Path) -> Result<(SensorFrame, CaptureMeta), EstimatorError> {
    let meta: CaptureMeta = read_json(&dir.join("meta.json"))?;
    let view = |side: Side, m: &ViewMeta| -> Result<CameraView, EstimatorError> {
        let v = CameraView {
            depth: read_depth_pgm(&dir.join(format!("{side}_depth.pgm")))?,
            ir: read_ir_pgm(&dir.join(format!("{side}_ir.pgm")))?,
            intrinsics: m.intrinsics,
            extrinsics: m.extrinsics.to_transform()?,
        };
        v.validate()?;
        Ok(v)
    };
    let frame = SensorFrame { left: view(Side::Left, &meta.left)?, right: view(Side::Right, &meta.right)? };
    Ok((frame, meta))
}

pub fn save_calibration(path: &Path, cal: &Calibration) -> Result<(), EstimatorError> {
    write_json(
        path,
        &CalibrationRecord { k_curl: cal.k_curl, body_in_gripper: PoseRecord::from(&cal.body_in_gripper), params: cal.params },
    )
}

pub fn load_calibration(path: &Path, background: &SensorFrame) -> Result<Calibration, EstimatorError> {
    let rec: CalibrationRecord = read_json(path)?;
    Ok(Calibration {
        background_left: background.left.depth.clone(),
        background_right: background.right.depth.clone(),
        k_curl: rec.k_curl,
        body_in_gripper: rec.body_in_gripper.to_transform()?,
        params: rec.params,
    })
}

pub fn save_corpus(dir: &Path, corpus: &Corpus, calibration: Option<&Calibration>) -> Result<(), EstimatorError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    save_frame(&dir.join("background"), &corpus.background, None)?;
    let nominal = RigidTransform::identity(Frame::Gripper, Frame::Tool);
    save_frame(&dir.join("reference"), &corpus.reference, Some(&nominal))?;
    let mut index = CorpusIndex { spec: corpus.spec.clone(), calibration: Vec::new(), frames: Vec::new() };
    for (i, (frame, pitch)) in corpus.calibration.iter().enumerate() {
        let name = format!("calibration/pitch_{i:02}");
        save_frame(&dir.join(&name), frame, Some(&sweep_pose(Axis::Pitch, pitch.to_degrees())))?;
        index.calibration.push(CalibrationEntry { dir: name, pitch_deg: pitch.to_degrees() });
    }
    for (i, f) in corpus.frames.iter().enumerate() {
        let name = format!("frames/{i:04}");
        save_frame(&dir.join(&name), &f.frame, Some(&f.truth))?;
        index.frames.push(FrameEntry { dir: name, axis: f.axis, value: f.value });
    }
    write_json(&dir.join("corpus.json"), &index)?;
    if let Some(cal) = calibration {
        save_calibration(&dir.join("calibration.json"), cal)?;
    }
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Corpus, EstimatorError> {
    let index: CorpusIndex = read_json(&dir.join("corpus.json"))?;
    let (background, _) = load_frame(&dir.join("background"))?;
    let (reference, _) = load_frame(&dir.join("reference"))?;
    let calibration = index
        .calibration
        .iter()
        .map(|c| Ok((load_frame(&dir.join(&c.dir))?.0, c.pitch_deg.to_radians())))
        .collect::<Result<Vec<_>, EstimatorError>>()?;
    let frames = parallel_map(&index.frames, |_, e| -> Result<CorpusFrame, EstimatorError> {
        let (frame, meta) = load_frame(&dir.join(&e.dir))?;
        let truth = meta
            .truth
            .ok_or_else(|| EstimatorError::Format(format!("{}: missing ground truth", e.dir)))?
            .to_transform()?;
        Ok(CorpusFrame { axis: e.axis, value: e.value, truth, frame })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus { spec: index.spec, background, reference, calibration, frames })
}

/// Fits the calibration from the corpus's own background, reference and pitch sweep.
pub fn calibrate_corpus(corpus: &Corpus) -> Result<Calibration, EstimatorError> {
    calibrate(&corpus.background, &corpus.reference, &corpus.calibration, &corpus.spec.params)
}

/// Estimate minus truth: roll, pitch, yaw in degrees, then x, y, z in millimeters.
pub fn pose_error(estimate: &RigidTransform, truth: &RigidTransform) -> Result<[f64; 6], EstimatorError> {
    let (e, t) = (estimate.rpy()?, truth.rpy()?);
    let wrap = |a: f64| (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    let d = estimate.translation - truth.translation;
    Ok([
        wrap(e.roll - t.roll).to_degrees(),
        wrap(e.pitch - t.pitch).to_degrees(),
        wrap(e.yaw - t.yaw).to_degrees(),
        d.x * 1e3,
        d.y * 1e3,
        d.z * 1e3,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub axis: Axis,
    pub value: f64,
    /// `None` when estimation failed.
    pub error: Option<[f64; 6]>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: Axis,
    pub frames: usize,
    pub failures: usize,
    /// RMS error per coordinate (deg, deg, deg, mm, mm, mm).
    pub rms: [f64; 6],
    /// Mean of `(estimate − truth)·sign(truth)` along the swept coordinate;
    /// negative means the estimate underestimates the magnitude.
    pub signed_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k_curl: f64,
    pub sweeps: Vec<SweepSummary>,
    pub frames: Vec<FrameResult>,
    pub seconds: f64,
}

impl EvalReport {
    pub fn sweep(&self, axis: Axis) -> Option<&SweepSummary> {
        self.sweeps.iter().find(|s| s.axis == axis)
    }

    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|f| f.error.is_none()).count()
    }

    /// Plain-text per-sweep RMS table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:>6} {:>5}", "sweep", "frames", "fail");
        for a in Axis::ALL {
            out += &format!(" {:>11}", format!("{}[{}]", a.name(), a.unit()));
        }
        out += &format!(" {:>11}\n", "bias");
        for s in &self.sweeps {
            out += &format!("{:<6} {:>6} {:>5}", s.axis.name(), s.frames, s.failures);
            for v in s.rms {
                out += &format!(" {v:>11.4}");
            }
            out += &format!(" {:>11.4}\n", s.signed_bias);
        }
        out
    }
}

fn summarize(axis: Axis, results: &[&FrameResult]) -> SweepSummary {
    let ok: Vec<(f64, [f64; 6])> = results.iter().filter_map(|r| r.error.map(|e| (r.value, e))).collect();
    let n = ok.len().max(1) as f64;
    let rms = std::array::from_fn(|k| (ok.iter().map(|(_, e)| e[k] * e[k]).sum::<f64>() / n).sqrt());
    let signed_bias = ok.iter().map(|(v, e)| e[axis.index()] * if *v == 0.0 { 0.0 } else { v.signum() }).sum::<f64>() / n;
    SweepSummary { axis, frames: results.len(), failures: results.len() - ok.len(), rms, signed_bias }
}

/// Estimates every frame with `cal` and tabulates errors per sweep.
pub fn evaluate(corpus: &Corpus, cal: &Calibration) -> EvalReport {
    let start = Instant::now();
    let frames = parallel_map(&corpus.frames, |_, f| {
        match estimate_relative_pose(&f.frame, &corpus.reference, cal).and_then(|est| pose_error(&est, &f.truth)) {
            Ok(e) => FrameResult { axis: f.axis, value: f.value, error: Some(e), failure: None },
            Err(e) => FrameResult { axis: f.axis, value: f.value, error: None, failure: Some(e.to_string()) },
        }
    });
    let mut sweeps = Vec::new();
    for axis in Axis::ALL {
        let group: Vec<&FrameResult> = frames.iter().filter(|r| r.axis == axis).collect();
        if !group.is_empty() {
            sweeps.push(summarize(axis, &group));
        }
    }
    EvalReport { k_curl: cal.k_curl, sweeps, frames, seconds: start.elapsed().as_secs_f64() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> CorpusSpec {
        CorpusSpec {
            sweeps: vec![Sweep { axis: Axis::Roll, amplitude: 10.0, count: 3 }],
            calibration_pitch: vec![-6.0, 0.0, 6.0],
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn sweep_values_are_symmetric() {
        let s = Sweep { axis: Axis::Y, amplitude: 5.0, count: 5 };
        assert_eq!(s.values(), vec![-5.0, -2.5, 0.0, 2.5, 5.0]);
        assert_eq!(CorpusSpec::default().sweeps.iter().map(|s| s.count).sum::<usize>(), 200);
    }

    #[test]
    fn reference_against_itself_is_identity() {
        let corpus = generate_corpus(&small_spec());
        let cal = calibrate_corpus(&corpus).unwrap();
        let est = estimate_relative_pose(&corpus.reference, &corpus.reference, &cal).unwrap();
        let e = pose_error(&est, &RigidTransform::identity(Frame::Gripper, Frame::Tool)).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-9), "{e:?}");
    }

    #[test]
    fn save_load_round_trip() {
        let spec = small_spec();
        let corpus = generate_corpus(&spec);
        let cal = calibrate_corpus(&corpus).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(dir.path(), &corpus, Some(&cal)).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded.frames.len(), corpus.frames.len());
        for (a, b) in loaded.frames.iter().zip(&corpus.frames) {
            assert_eq!(a.frame, b.frame);
            assert_eq!(a.axis, b.axis);
            let (dt, dr) = a.truth.distance(&b.truth);
            assert!(dt == 0.0 && dr < 1e-15);
        }
        assert_eq!(loaded.background, corpus.background);
        let cal2 = load_calibration(&dir.path().join("calibration.json"), &loaded.background).unwrap();
        assert_eq!(cal2.k_curl, cal.k_curl);
    }

    #[test]
    fn pose_record_rejects_non_rotation() {
        let rec = PoseRecord {
            parent: Frame::Gripper,
            child: Frame::Tool,
            rotation: [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        };
        assert!(rec.to_transform().is_err());
    }
}
