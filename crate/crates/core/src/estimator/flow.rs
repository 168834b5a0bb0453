//! Block-matching optical flow and its curl.

use serde::{Deserialize, Serialize};

use super::image::Image;
use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowOptions {
    /// Grid spacing, px.
    pub stride: usize,
    /// Odd matching window size, px.
    pub window: usize,
    /// Search radius per pyramid level, px.
    pub search: usize,
    /// Pyramid levels; 1 matches at full resolution only.
    pub levels: usize,
    /// Windows whose intensity standard deviation falls below this are not matched.
    pub min_texture: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { stride: 8, window: 15, search: 6, levels: 2, min_texture: 0.02 }
    }
}

/// Displacement of `I_k` relative to `I_0` on a regular grid.
///
/// Cell `(i, j)` is centred on pixel `(s/2 + i·s, s/2 + j·s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub stride: usize,
    pub cols: usize,
    pub rows: usize,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn from_fn(stride: usize, cols: usize, rows: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut field = Self::empty(stride, cols, rows);
        for j in 0..rows {
            for i in 0..cols {
                let (x, y) = field.centre(i, j);
                let (vx, vy) = f(x, y);
                let k = j * cols + i;
                field.vx[k] = vx;
                field.vy[k] = vy;
                field.valid[k] = true;
            }
        }
        field
    }

    fn empty(stride: usize, cols: usize, rows: usize) -> Self {
        let n = cols * rows;
        Self { stride, cols, rows, vx: vec![0.0; n], vy: vec![0.0; n], valid: vec![false; n] }
    }

    pub fn centre(&self, i: usize, j: usize) -> (f64, f64) {
        ((self.stride / 2 + i * self.stride) as f64, (self.stride / 2 + j * self.stride) as f64)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let k = j * self.cols + i;
        self.valid[k].then(|| (self.vx[k], self.vy[k]))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// `∂V^y/∂x − ∂V^x/∂y` per pixel, from 3×3 Sobel gradients, at every
    /// interior cell whose neighbourhood is fully valid.
    pub fn curl(&self) -> Vec<f64> {
        const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];
        const DIFF: [f64; 3] = [-1.0, 0.0, 1.0];
        let mut out = Vec::new();
        if self.cols < 3 || self.rows < 3 {
            return out;
        }
        let scale = 8.0 * self.stride as f64;
        for j in 1..self.rows - 1 {
            'cells: for i in 1..self.cols - 1 {
                let (mut dvy_dx, mut dvx_dy) = (0.0, 0.0);
                for b in 0..3 {
                    for a in 0..3 {
                        let Some((vx, vy)) = self.get(i + a - 1, j + b - 1) else {
                            continue 'cells;
                        };
                        dvy_dx += DIFF[a] * SMOOTH[b] * vy;
                        dvx_dy += SMOOTH[a] * DIFF[b] * vx;
                    }
                }
                out.push((dvy_dx - dvx_dy) / scale);
            }
        }
        out
    }
}

fn window_stats(img: &Image, cx: isize, cy: isize, half: isize) -> Option<f64> {
    if cx < half || cy < half || cx + half >= img.width as isize || cy + half >= img.height as isize {
        return None;
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for v in cy - half..=cy + half {
        for u in cx - half..=cx + half {
            let x = img.get(u as usize, v as usize);
            s += x;
            s2 += x * x;
        }
    }
    let n = ((2 * half + 1) * (2 * half + 1)) as f64;
    Some((s2 / n - (s / n).powi(2)).max(0.0).sqrt())
}

fn ssd(a: &Image, b: &Image, cx: isize, cy: isize, dx: isize, dy: isize, half: isize) -> f64 {
    let (bx, by) = (cx + dx, cy + dy);
    if bx < half || by < half || bx + half >= b.width as isize || by + half >= b.height as isize {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    for v in -half..=half {
        for u in -half..=half {
            let d = a.get((cx + u) as usize, (cy + v) as usize) - b.get((bx + u) as usize, (by + v) as usize);
            acc += d * d;
        }
    }
    acc
}

fn parabola(minus: f64, centre: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * centre + plus;
    if !denom.is_finite() || denom <= 0.0 {
        return 0.0;
    }
    (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
}

/// Integer best match around `guess`, then parabolic refinement. `None`
/// when the optimum lies on the search boundary or no candidate fits.
fn match_block(
    a: &Image,
    b: &Image,
    cx: isize,
    cy: isize,
    half: isize,
    guess: (isize, isize),
    radius: isize,
    refine: bool,
) -> Option<(f64, f64)> {
    // Ties keep the guess, so flat or identical regions do not drift.
    let mut best = (ssd(a, b, cx, cy, guess.0, guess.1, half), guess.0, guess.1);
    for dy in guess.1 - radius..=guess.1 + radius {
        for dx in guess.0 - radius..=guess.0 + radius {
            let e = ssd(a, b, cx, cy, dx, dy, half);
            if e < best.0 {
                best = (e, dx, dy);
            }
        }
    }
    let (e, dx, dy) = best;
    if !e.is_finite() || (dx - guess.0).abs() == radius || (dy - guess.1).abs() == radius {
        return None;
    }
    if !refine || e == 0.0 {
        return Some((dx as f64, dy as f64));
    }
    let sx = parabola(ssd(a, b, cx, cy, dx - 1, dy, half), e, ssd(a, b, cx, cy, dx + 1, dy, half));
    let sy = parabola(ssd(a, b, cx, cy, dx, dy - 1, half), e, ssd(a, b, cx, cy, dx, dy + 1, half));
    Some((dx as f64 + sx, dy as f64 + sy))
}

/// Flow of `current` relative to `reference` by coarse-to-fine block matching.
pub fn estimate_flow(reference: &Image, current: &Image, options: &FlowOptions) -> Result<FlowField, EstimatorError> {
    if !reference.same_size(current) {
        return Err(EstimatorError::SizeMismatch(format!(
            "flow images {}x{} and {}x{}",
            reference.width, reference.height, current.width, current.height
        )));
    }
    if options.stride == 0 || options.window % 2 == 0 || options.search == 0 || options.levels == 0 {
        return Err(EstimatorError::Format(format!("invalid flow options {options:?}")));
    }
    let s = options.stride;
    let cols = reference.width.saturating_sub(s / 2).div_ceil(s);
    let rows = reference.height.saturating_sub(s / 2).div_ceil(s);
    let mut field = FlowField::empty(s, cols, rows);

    let mut pyramid = vec![(reference.clone(), current.clone())];
    for _ in 1..options.levels {
        let (a, b) = pyramid.last().expect("non-empty");
        let next = (a.half(), b.half());
        pyramid.push(next);
    }
    let half = (options.window / 2) as isize;
    let radius = options.search as isize;

    for j in 0..rows {
        for i in 0..cols {
            let (x, y) = field.centre(i, j);
            let (x, y) = (x as isize, y as isize);
            match window_stats(reference, x, y, half) {
                Some(std) if std >= options.min_texture => {}
                _ => continue,
            }
            let mut guess = (0isize, 0isize);
            for level in (1..pyramid.len()).rev() {
                let (a, b) = &pyramid[level];
                let scale = 1isize << level;
                let h = (half / scale).max(2);
                let g = (guess.0 / 2, guess.1 / 2);
                if let Some((dx, dy)) = match_block(a, b, x / scale, y / scale, h, g, radius, false) {
                    guess = (dx as isize * 2, dy as isize * 2);
                } else {
                    guess = (g.0 * 2, g.1 * 2);
                }
            }
            if let Some((dx, dy)) = match_block(reference, current, x, y, half, guess, radius, true) {
                let k = j * cols + i;
                field.vx[k] = dx;
                field.vy[k] = dy;
                field.valid[k] = true;
            }
        }
    }
    Ok(field)
}

/// `k_curl` times the mean curl over usable cells.
pub fn estimate_pitch(field: &FlowField, k_curl: f64) -> Result<f64, EstimatorError> {
    let total = field.valid.len();
    let valid = field.valid_count();
    let curl = field.curl();
    if total == 0 || 2 * valid < total || curl.is_empty() {
        return Err(EstimatorError::InsufficientFlow { valid, total });
    }
    Ok(k_curl * curl.iter().sum::<f64>() / curl.len() as f64)
}
