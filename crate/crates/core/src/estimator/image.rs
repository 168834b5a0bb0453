//! Dense single-channel images and PGM persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::EstimatorError;

/// Row-major `f64` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[v * self.width + u] = value;
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Bilinear interpolation with coordinates clamped to the image.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Separable Gaussian blur with edge clamping.
    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = Image::new(self.width, self.height, 0.0);
        for v in 0..h {
            for u in 0..w {
                let mut acc = 0.0;
                for (j, k) in kernel.iter().enumerate() {
                    let uu = (u + j as isize - radius).clamp(0, w - 1);
                    acc += k * self.get(uu as usize, v as usize);
                }
                tmp.set(u as usize, v as usize, acc);
            }
        }
        let mut out = Image::new(self.width, self.height, 0.0);
        for v in 0..h {
            for u in 0..w {
                let mut acc = 0.0;
                for (j, k) in kernel.iter().enumerate() {
                    let vv = (v + j as isize - radius).clamp(0, h - 1);
                    acc += k * tmp.get(u as usize, vv as usize);
                }
                out.set(u as usize, v as usize, acc);
            }
        }
        out
    }

    /// 2×2 box downsampling.
    pub fn half(&self) -> Image {
        let (w, h) = (self.width / 2, self.height / 2);
        Image::from_fn(w, h, |u, v| {
            0.25 * (self.get(2 * u, 2 * v)
                + self.get(2 * u + 1, 2 * v)
                + self.get(2 * u, 2 * v + 1)
                + self.get(2 * u + 1, 2 * v + 1))
        })
    }
}

/// Binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Elliptical structuring element of the given odd size, as offsets.
    fn ellipse(size: usize) -> Vec<(isize, isize)> {
        let r = (size / 2) as isize;
        let rr = size as f64 / 2.0;
        let mut offsets = Vec::new();
        for dv in -r..=r {
            for du in -r..=r {
                let (x, y) = (du as f64 / rr, dv as f64 / rr);
                if x * x + y * y <= 1.0 {
                    offsets.push((du, dv));
                }
            }
        }
        offsets
    }

    fn morph(&self, offsets: &[(isize, isize)], erode: bool) -> Mask {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut data = vec![false; self.data.len()];
        for v in 0..h {
            for u in 0..w {
                let hit = |&(du, dv): &(isize, isize)| {
                    let (uu, vv) = (u + du, v + dv);
                    // Outside the image counts as background.
                    uu >= 0 && vv >= 0 && uu < w && vv < h && self.get(uu as usize, vv as usize)
                };
                data[(v * w + u) as usize] = if erode { offsets.iter().all(hit) } else { offsets.iter().any(hit) };
            }
        }
        Mask { width: self.width, height: self.height, data }
    }

    /// Erosion followed by dilation with an elliptical kernel.
    pub fn open(&self, size: usize) -> Mask {
        let offsets = Self::ellipse(size.max(1));
        self.morph(&offsets, true).morph(&offsets, false)
    }
}

fn read_header(reader: &mut impl Read) -> Result<(usize, usize, usize), EstimatorError> {
    let mut fields = Vec::new();
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    while fields.len() < 4 {
        reader.read_exact(&mut byte).map_err(|e| EstimatorError::Io(e.to_string()))?;
        let c = byte[0];
        if in_comment {
            in_comment = c != b'\n';
            continue;
        }
        if c == b'#' {
            in_comment = true;
        } else if c.is_ascii_whitespace() {
            if !token.is_empty() {
                fields.push(String::from_utf8_lossy(&token).into_owned());
                token.clear();
            }
        } else {
            token.push(c);
        }
    }
    if fields[0] != "P5" {
        return Err(EstimatorError::Format(format!("expected P5, found {}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| EstimatorError::Format(format!("bad PGM header field {s:?}")));
    Ok((parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?))
}

fn write_pgm(path: &Path, width: usize, height: usize, maxval: u32, body: &[u8]) -> Result<(), EstimatorError> {
    let file = File::create(path).map_err(|e| EstimatorError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{width} {height}\n{maxval}\n").and_then(|_| w.write_all(body)).and_then(|_| w.flush())
        .map_err(|e| EstimatorError::Io(format!("{}: {e}", path.display())))
}

/// Depth in meters quantized to whole micrometers.
pub fn quantize_depth(d: f64) -> f64 {
    (d * 1e6).round().clamp(0.0, u16::MAX as f64) / 1e6
}

/// Intensity in `[0, 1]` quantized to 8 bits.
pub fn quantize_intensity(i: f64) -> f64 {
    (i.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// 16-bit depth PGM with little-endian samples in micrometers.
pub fn write_depth_pgm(path: &Path, image: &Image) -> Result<(), EstimatorError> {
    let mut body = Vec::with_capacity(image.data.len() * 2);
    for d in &image.data {
        let um = (d * 1e6).round().clamp(0.0, u16::MAX as f64) as u16;
        body.extend_from_slice(&um.to_le_bytes());
    }
    write_pgm(path, image.width, image.height, u16::MAX as u32, &body)
}

pub fn read_depth_pgm(path: &Path) -> Result<Image, EstimatorError> {
    let file = File::open(path).map_err(|e| EstimatorError::Io(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let (width, height, maxval) = read_header(&mut r)?;
    if maxval < 256 {
        return Err(EstimatorError::Format(format!("{}: depth PGM must be 16-bit", path.display())));
    }
    let mut body = vec![0u8; width * height * 2];
    r.read_exact(&mut body).map_err(|e| EstimatorError::Io(format!("{}: {e}", path.display())))?;
    let data = body.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as f64 / 1e6).collect();
    Ok(Image { width, height, data })
}

/// 8-bit intensity PGM.
pub fn write_ir_pgm(path: &Path, image: &Image) -> Result<(), EstimatorError> {
    let body: Vec<u8> = image.data.iter().map(|i| (i.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    write_pgm(path, image.width, image.height, 255, &body)
}

pub fn read_ir_pgm(path: &Path) -> Result<Image, EstimatorError> {
    let file = File::open(path).map_err(|e| EstimatorError::Io(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let (width, height, maxval) = read_header(&mut r)?;
    if maxval != 255 {
        return Err(EstimatorError::Format(format!("{}: IR PGM must be 8-bit", path.display())));
    }
    let mut body = vec![0u8; width * height];
    r.read_exact(&mut body).map_err(|e| EstimatorError::Io(format!("{}: {e}", path.display())))?;
    Ok(Image { width, height, data: body.iter().map(|b| *b as f64 / 255.0).collect() })
}
