//! Stiffness identification from (relative pose, wrench) samples.
//!
//! Translational axes fit `f_a = k_a x_a`. Rotational axes are fit in gimbal
//! torque coordinates: `Mᵀ(Θ) τ = K_τ Θ` is linear and exact under the
//! bushing model, so each gimbal axis is again a one-parameter fit through
//! the origin.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{rate_matrix, Frame, RigidTransform, RollPitchYaw, Se3Error, SpatialForce};
use crate::stiffness::{StiffnessError, StiffnessParams};

pub const AXIS_NAMES: [&str; 6] = ["roll", "pitch", "yaw", "x", "y", "z"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SysIdError {
    #[error("no samples")]
    Empty,
    #[error("sample {index}: {source}")]
    BadSample { index: usize, source: Se3Error },
    #[error("rotation amplitude {0} rad exceeds π/3")]
    AmplitudeTooLarge(f64),
    #[error("axes {0:?} are unidentifiable")]
    Unidentifiable(Vec<&'static str>),
    #[error(transparent)]
    Stiffness(#[from] StiffnessError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SysIdSample {
    /// `ᵀX^C`.
    pub relative: RigidTransform,
    /// Measured bushing wrench in `T`.
    pub wrench: SpatialForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysIdOptions {
    /// Smallest usable spread of the rotational coordinates, rad.
    #[serde(default = "default_min_rotation")]
    pub min_rotation_range: f64,
    /// Smallest usable spread of the translational coordinates, m.
    #[serde(default = "default_min_translation")]
    pub min_translation_range: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_min_rotation() -> f64 {
    1f64.to_radians()
}

fn default_min_translation() -> f64 {
    1e-3
}

fn default_bootstrap() -> usize {
    200
}

impl Default for SysIdOptions {
    fn default() -> Self {
        Self {
            min_rotation_range: default_min_rotation(),
            min_translation_range: default_min_translation(),
            bootstrap: default_bootstrap(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisReport {
    pub axis: &'static str,
    /// `None` when the axis is unidentifiable.
    pub stiffness: Option<f64>,
    pub residual_rms: f64,
    pub bootstrap_std: f64,
    /// Max minus min of the pose coordinate over the samples.
    pub excitation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SysIdReport {
    pub axes: Vec<AxisReport>,
    pub samples: usize,
}

impl SysIdReport {
    pub fn unidentifiable(&self) -> Vec<&'static str> {
        self.axes.iter().filter(|a| a.stiffness.is_none()).map(|a| a.axis).collect()
    }

    /// Identified parameters; fails if any axis is unidentifiable.
    pub fn stiffness(&self) -> Result<StiffnessParams, SysIdError> {
        let missing = self.unidentifiable();
        if !missing.is_empty() {
            return Err(SysIdError::Unidentifiable(missing));
        }
        let mut k = [0.0; 6];
        for (slot, axis) in k.iter_mut().zip(&self.axes) {
            *slot = axis.stiffness.unwrap_or_default();
        }
        Ok(StiffnessParams::from_array(k)?)
    }
}

/// Per-axis regressor and response for every sample.
fn regression_data(samples: &[SysIdSample]) -> Result<Vec<([f64; 6], [f64; 6])>, SysIdError> {
    samples
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let rpy = s.relative.rpy().map_err(|source| SysIdError::BadSample { index, source })?;
            rpy.check_gimbal().map_err(|source| SysIdError::BadSample { index, source })?;
            let gimbal = rate_matrix(&rpy).transpose() * s.wrench.torque;
            let x = s.relative.translation;
            let f = s.wrench.force;
            Ok((
                [rpy.roll, rpy.pitch, rpy.yaw, x.x, x.y, x.z],
                [gimbal.x, gimbal.y, gimbal.z, f.x, f.y, f.z],
            ))
        })
        .collect()
}

fn fit_through_origin<'a>(pairs: impl Iterator<Item = &'a ([f64; 6], [f64; 6])>, axis: usize) -> f64 {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in pairs {
        sxy += x[axis] * y[axis];
        sxx += x[axis] * x[axis];
    }
    sxy / sxx
}

/// Least-squares stiffness per axis with bootstrap spread.
pub fn identify_stiffness(samples: &[SysIdSample], options: &SysIdOptions) -> Result<SysIdReport, SysIdError> {
    if samples.is_empty() {
        return Err(SysIdError::Empty);
    }
    let data = regression_data(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut boot = vec![Vec::with_capacity(options.bootstrap); 6];
    for _ in 0..options.bootstrap {
        let picks: Vec<usize> = (0..data.len()).map(|_| rng.random_range(0..data.len())).collect();
        for (axis, estimates) in boot.iter_mut().enumerate() {
            let k = fit_through_origin(picks.iter().map(|&i| &data[i]), axis);
            if k.is_finite() {
                estimates.push(k);
            }
        }
    }
    let axes = (0..6)
        .map(|axis| {
            let lo = data.iter().map(|(x, _)| x[axis]).fold(f64::INFINITY, f64::min);
            let hi = data.iter().map(|(x, _)| x[axis]).fold(f64::NEG_INFINITY, f64::max);
            let excitation = hi - lo;
            let min_range = if axis < 3 { options.min_rotation_range } else { options.min_translation_range };
            let excited = data.iter().filter(|(x, _)| x[axis].abs() > 0.25 * min_range).count();
            let k = fit_through_origin(data.iter(), axis);
            let identified = excitation >= min_range && excited >= 2 && k.is_finite() && k > 0.0;
            let residual_rms = if k.is_finite() {
                (data.iter().map(|(x, y)| (y[axis] - k * x[axis]).powi(2)).sum::<f64>() / data.len() as f64).sqrt()
            } else {
                f64::NAN
            };
            AxisReport {
                axis: AXIS_NAMES[axis],
                stiffness: identified.then_some(k),
                residual_rms,
                bootstrap_std: std_dev(&boot[axis]),
                excitation,
            }
        })
        .collect();
    Ok(SysIdReport { axes, samples: samples.len() })
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Amplitudes of an excitation schedule, one per axis (rad for roll, pitch,
/// yaw; m for x, y, z). A zero amplitude leaves the axis unexcited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Excitation {
    pub amplitude: [f64; 6],
    /// Points per ramp; also the number of mixed-axis poses.
    pub count: usize,
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn pose_from(v: &[f64; 6]) -> RigidTransform {
    RigidTransform::from_rpy(
        Frame::Gripper,
        Frame::Tool,
        &RollPitchYaw::new(v[0], v[1], v[2]),
        Vector3::new(v[3], v[4], v[5]),
    )
}

/// Per-axis ramps over `[-a, a]`, followed by Halton-sampled poses over the
/// box of all excited axes when more than one axis is excited.
pub fn generate_excitation(spec: &Excitation) -> Result<Vec<RigidTransform>, SysIdError> {
    let max_rot = spec.amplitude[..3].iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if max_rot > std::f64::consts::FRAC_PI_3 {
        return Err(SysIdError::AmplitudeTooLarge(max_rot));
    }
    let ramp = |i: usize| {
        if spec.count < 2 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (spec.count - 1) as f64
        }
    };
    let mut poses = Vec::new();
    for axis in 0..6 {
        if spec.amplitude[axis] == 0.0 && spec.amplitude.iter().any(|a| *a != 0.0) {
            continue;
        }
        for i in 0..spec.count {
            let mut v = [0.0; 6];
            v[axis] = spec.amplitude[axis] * ramp(i);
            poses.push(pose_from(&v));
        }
        if spec.amplitude.iter().all(|a| *a == 0.0) {
            break;
        }
    }
    let excited = spec.amplitude.iter().filter(|a| **a != 0.0).count();
    if excited > 1 {
        const BASES: [usize; 6] = [2, 3, 5, 7, 11, 13];
        for i in 1..=spec.count {
            let mut v = [0.0; 6];
            for axis in 0..6 {
                v[axis] = spec.amplitude[axis] * (2.0 * radical_inverse(i, BASES[axis]) - 1.0);
            }
            poses.push(pose_from(&v));
        }
    }
    Ok(poses)
}

/// Samples from the forward map with optional multiplicative wrench noise.
pub fn synthesize_samples(
    poses: &[RigidTransform],
    k: &StiffnessParams,
    relative_noise: f64,
    seed: u64,
) -> Result<Vec<SysIdSample>, SysIdError> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, relative_noise.max(0.0)).map_err(|_| SysIdError::Empty)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    poses
        .iter()
        .map(|x| {
            let mut w = k.wrench_of(x)?;
            if relative_noise > 0.0 {
                for v in w.torque.iter_mut().chain(w.force.iter_mut()) {
                    *v *= 1.0 + normal.sample(&mut rng);
                }
            }
            Ok(SysIdSample { relative: *x, wrench: w })
        })
        .collect()
}
