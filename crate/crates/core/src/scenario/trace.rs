//! CSV trace records.
//!
//! One row per control step. Columns, in order:
//!
//! | columns | meaning |
//! |---|---|
//! | `time` | seconds |
//! | `cmd_x … cmd_yaw` | commanded gripper pose `ᵂX^T` (m, rad) |
//! | `rel_x … rel_yaw` | realized relative pose `ᵀX^C` (m, rad) |
//! | `des_tau_x … des_f_z` | desired wrench on the environment (torque in `T`, force in `W`) |
//! | `bush_tau_x … bush_f_z` | bushing wrench in `T`, torque about the tool origin |
//! | `f_z`, `tau_x` | total contact normal force, contact torque about the tool x axis |
//! | `lambda_0 …` | per-contact normal force |
//!
//! Numbers use C `%.9g` formatting. A run that fails part way ends with a
//! `# truncated at step N: reason` line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::se3::{Frame, RigidTransform, RollPitchYaw, Se3Error, SpatialForce};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    /// `x, y, z, roll, pitch, yaw` of `ᵂX^T`.
    pub commanded: [f64; 6],
    /// `x, y, z, roll, pitch, yaw` of `ᵀX^C`.
    pub relative: [f64; 6],
    /// `τx, τy, τz, fx, fy, fz`.
    pub desired_wrench: [f64; 6],
    /// `τx, τy, τz, fx, fy, fz`.
    pub bushing_wrench: [f64; 6],
    pub f_z: f64,
    pub tau_x: f64,
    pub lambdas: Vec<f64>,
}

/// `x, y, z, roll, pitch, yaw`.
pub fn pose_coordinates(x: &RigidTransform) -> Result<[f64; 6], Se3Error> {
    let rpy = x.rpy()?;
    let t = x.translation;
    Ok([t.x, t.y, t.z, rpy.roll, rpy.pitch, rpy.yaw])
}

pub fn pose_from_coordinates(parent: Frame, child: Frame, c: &[f64; 6]) -> RigidTransform {
    RigidTransform::from_rpy(parent, child, &RollPitchYaw::new(c[3], c[4], c[5]), nalgebra::Vector3::new(c[0], c[1], c[2]))
}

impl TraceRecord {
    pub fn header(contacts: usize) -> Vec<String> {
        let mut h = vec!["time".to_string()];
        let pose = ["x", "y", "z", "roll", "pitch", "yaw"];
        let wrench = ["tau_x", "tau_y", "tau_z", "f_x", "f_y", "f_z"];
        h.extend(pose.iter().map(|c| format!("cmd_{c}")));
        h.extend(pose.iter().map(|c| format!("rel_{c}")));
        h.extend(wrench.iter().map(|c| format!("des_{c}")));
        h.extend(wrench.iter().map(|c| format!("bush_{c}")));
        h.push("f_z".into());
        h.push("tau_x".into());
        h.extend((0..contacts).map(|i| format!("lambda_{i}")));
        h
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.time];
        v.extend_from_slice(&self.commanded);
        v.extend_from_slice(&self.relative);
        v.extend_from_slice(&self.desired_wrench);
        v.extend_from_slice(&self.bushing_wrench);
        v.push(self.f_z);
        v.push(self.tau_x);
        v.extend_from_slice(&self.lambdas);
        v
    }

    pub fn from_values(v: &[f64]) -> Option<Self> {
        if v.len() < 27 {
            return None;
        }
        let six = |i: usize| -> [f64; 6] { v[i..i + 6].try_into().expect("six values") };
        Some(Self {
            time: v[0],
            commanded: six(1),
            relative: six(7),
            desired_wrench: six(13),
            bushing_wrench: six(19),
            f_z: v[25],
            tau_x: v[26],
            lambdas: v[27..].to_vec(),
        })
    }

    pub fn bushing(&self) -> SpatialForce {
        let w = &self.bushing_wrench;
        SpatialForce::new(Frame::Gripper, nalgebra::Vector3::new(w[0], w[1], w[2]), nalgebra::Vector3::new(w[3], w[4], w[5]))
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// C `printf("%.9g", x)`.
pub fn format_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

/// Streams records to a CSV file.
pub struct TraceWriter {
    out: BufWriter<File>,
    columns: usize,
}

impl TraceWriter {
    pub fn create(path: &Path, contacts: usize) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let header = TraceRecord::header(contacts);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, columns: header.len() })
    }

    pub fn write(&mut self, record: &TraceRecord) -> std::io::Result<()> {
        let values = record.values();
        if values.len() != self.columns {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("record has {} columns, header has {}", values.len(), self.columns),
            ));
        }
        let line: Vec<String> = values.into_iter().map(format_g9).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn truncate(&mut self, step: usize, reason: &str) -> std::io::Result<()> {
        writeln!(self.out, "# truncated at step {step}: {}", reason.replace('\n', " "))?;
        self.out.flush()
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Reads a trace written by [`TraceWriter`]. The second value is the
/// truncation line, if any.
pub fn read_trace(path: &Path) -> anyhow::Result<(Vec<String>, Vec<TraceRecord>, Option<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let truncated = text.lines().find(|l| l.starts_with('#')).map(str::to_string);
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < 27 || header[..27] != TraceRecord::header(0)[..] {
        anyhow::bail!("{}: unexpected trace header", path.display());
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let values = row
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| anyhow::anyhow!("{}: row {}: {e}", path.display(), i + 2))?;
        records.push(TraceRecord::from_values(&values).ok_or_else(|| anyhow::anyhow!("row {} too short", i + 2))?);
    }
    Ok((header, records, truncated))
}

/// Largest absolute difference over all fields; `None` when the traces
/// differ in length or in the number of contacts.
pub fn max_deviation(a: &[TraceRecord], b: &[TraceRecord]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.values(), y.values());
        if x.len() != y.len() {
            return None;
        }
        for (p, q) in x.iter().zip(&y) {
            let d = (p - q).abs();
            if d.is_nan() {
                return Some(f64::INFINITY);
            }
            worst = worst.max(d);
        }
    }
    Some(worst)
}
