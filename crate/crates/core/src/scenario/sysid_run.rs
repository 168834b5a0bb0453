//! Stiffness identification runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trace::{pose_from_coordinates, read_trace};
use super::{create_dir, load_json, write_json, ScenarioError};
use crate::se3::Frame;
use crate::stiffness::StiffnessParams;
use crate::sysid::{
    generate_excitation, identify_stiffness, synthesize_samples, Excitation, SysIdOptions, SysIdReport, SysIdSample,
};

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleSource {
    /// Excitation schedule through the forward map of `stiffness`, with
    /// multiplicative wrench noise.
    Synthetic {
        excitation: Excitation,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Relative pose and bushing wrench columns of a scenario trace.
    Trace { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysIdConfig {
    pub name: String,
    /// Ground truth for synthetic samples; also reported alongside the estimate.
    pub stiffness: Option<StiffnessParams>,
    pub source: SampleSource,
    #[serde(default)]
    pub options: SysIdOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SysIdRun {
    pub name: String,
    pub truth: Option<[f64; 6]>,
    pub report: SysIdReport,
    pub unidentifiable: Vec<&'static str>,
    /// Per-axis `(estimate − truth) / truth`, when both exist.
    pub relative_error: Vec<Option<f64>>,
}

impl SysIdRun {
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:>12} {:>12} {:>12} {:>12} {:>10}\n", "axis", "estimate", "boot_std", "resid_rms", "truth", "rel_err");
        for (i, a) in self.report.axes.iter().enumerate() {
            let est = a.stiffness.map_or("unident.".to_string(), |k| format!("{k:.6}"));
            let truth = self.truth.map_or("-".to_string(), |t| format!("{:.6}", t[i]));
            let err = self.relative_error[i].map_or("-".to_string(), |e| format!("{:.3e}", e));
            out += &format!("{:<6} {est:>12} {:>12.3e} {:>12.3e} {truth:>12} {err:>10}\n", a.axis, a.bootstrap_std, a.residual_rms);
        }
        out
    }
}

fn samples(cfg: &SysIdConfig, base: &Path) -> Result<Vec<SysIdSample>, ScenarioError> {
    let to_err = |e: crate::sysid::SysIdError| ScenarioError::Config { path: cfg.name.clone(), message: e.to_string() };
    match &cfg.source {
        SampleSource::Synthetic { excitation, noise, seed } => {
            let k = cfg.stiffness.ok_or_else(|| ScenarioError::Config {
                path: cfg.name.clone(),
                message: "synthetic samples need `stiffness`".into(),
            })?;
            let poses = generate_excitation(excitation).map_err(to_err)?;
            synthesize_samples(&poses, &k, *noise, *seed).map_err(to_err)
        }
        SampleSource::Trace { path } => {
            let path = if path.is_absolute() { path.clone() } else { base.join(path) };
            let (_, records, _) = read_trace(&path).map_err(|e| ScenarioError::Io(e.to_string()))?;
            Ok(records
                .iter()
                .map(|r| SysIdSample {
                    relative: pose_from_coordinates(Frame::Gripper, Frame::Tool, &r.relative),
                    wrench: r.bushing(),
                })
                .collect())
        }
    }
}

/// Identifies the stiffness; relative trace paths resolve against `base`.
pub fn run_sysid(cfg: &SysIdConfig, base: &Path) -> Result<SysIdRun, ScenarioError> {
    let samples = samples(cfg, base)?;
    let report = identify_stiffness(&samples, &cfg.options)
        .map_err(|e| ScenarioError::Config { path: cfg.name.clone(), message: e.to_string() })?;
    let truth = cfg.stiffness.map(|k| k.as_array());
    let relative_error = report
        .axes
        .iter()
        .enumerate()
        .map(|(i, a)| match (a.stiffness, truth) {
            (Some(k), Some(t)) => Some((k - t[i]) / t[i]),
            _ => None,
        })
        .collect();
    Ok(SysIdRun { name: cfg.name.clone(), truth, unidentifiable: report.unidentifiable(), report, relative_error })
}

/// Loads `config`, identifies, and writes `<out>/<name>/sysid_report.json`.
pub fn run_sysid_file(config: &Path, out: &Path) -> Result<(SysIdRun, PathBuf), ScenarioError> {
    let cfg: SysIdConfig = load_json(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let run = run_sysid(&cfg, base)?;
    let dir = out.join(&cfg.name);
    create_dir(&dir)?;
    let path = dir.join("sysid_report.json");
    write_json(&path, &run)?;
    Ok((run, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn synthetic_run_recovers_truth() {
        let k = StiffnessParams::new(Vector3::new(1.5, 2.0, 2.5), Vector3::new(250.0, 300.0, 350.0)).unwrap();
        let a = 15f64.to_radians();
        let cfg = SysIdConfig {
            name: "s".into(),
            stiffness: Some(k),
            source: SampleSource::Synthetic {
                excitation: Excitation { amplitude: [a, a, a, 0.005, 0.005, 0.005], count: 20 },
                noise: 0.0,
                seed: 0,
            },
            options: SysIdOptions::default(),
        };
        let run = run_sysid(&cfg, Path::new(".")).unwrap();
        assert!(run.unidentifiable.is_empty());
        assert!(run.relative_error.iter().all(|e| e.unwrap().abs() < 1e-10));
        assert!(run.table().contains("unident.") == false);
    }
}
