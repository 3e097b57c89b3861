//! Synthetic eye rasters and binary PGM (P5) I/O.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BoundingBox;
use crate::scalar::Real;
use crate::seed::rng_from;

/// Smallest pupil radius the renderer accepts, in pixels.
pub const MIN_PUPIL_RADIUS_PX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("invalid raster spec: {0}")]
    InvalidSpec(String),
    #[error("malformed PGM: {0}")]
    Pgm(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeRasterSpec {
    pub width: usize,
    pub height: usize,
    pub iris_center: (f64, f64),
    pub iris_radius: f64,
    pub pir: f64,
    pub sclera_gray: u8,
    pub iris_gray: u8,
    pub pupil_gray: u8,
    pub noise_sd: f64,
    pub eyelid_occlusion_frac: f64,
}

impl EyeRasterSpec {
    /// Square image with the iris centered and a 4 px margin.
    pub fn centered(iris_radius: f64, pir: f64) -> Self {
        let side = (2.0 * iris_radius).ceil() as usize + 8;
        let c = side as f64 / 2.0;
        Self {
            width: side,
            height: side,
            iris_center: (c, c),
            iris_radius,
            pir,
            sclera_gray: 210,
            iris_gray: 110,
            pupil_gray: 25,
            noise_sd: 0.0,
            eyelid_occlusion_frac: 0.0,
        }
    }

    pub fn pupil_radius(&self) -> f64 {
        self.pir * self.iris_radius
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let bad = |m: String| Err(RasterError::InvalidSpec(m));
        if self.width == 0 || self.height == 0 {
            return bad("empty image".into());
        }
        if !(self.pir > 0.0 && self.pir < 1.0) {
            return bad(format!("pir {} outside (0,1)", self.pir));
        }
        if !(self.pupil_radius() >= MIN_PUPIL_RADIUS_PX) {
            return bad(format!("pupil radius {} below {MIN_PUPIL_RADIUS_PX} px", self.pupil_radius()));
        }
        let (cx, cy) = self.iris_center;
        let r = self.iris_radius;
        if cx - r < 0.0 || cy - r < 0.0 || cx + r > self.width as f64 || cy + r > self.height as f64 {
            return bad("iris circle exceeds image bounds".into());
        }
        if !(self.pupil_gray < self.iris_gray && self.iris_gray < self.sclera_gray) {
            return bad("gray levels must satisfy pupil < iris < sclera".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {}", self.noise_sd));
        }
        if !(0.0..1.0).contains(&self.eyelid_occlusion_frac) {
            return bad(format!("eyelid_occlusion_frac {} outside [0,1)", self.eyelid_occlusion_frac));
        }
        Ok(())
    }

    /// Geometric boxes of the iris and pupil disks.
    pub fn true_boxes<T: Real>(&self) -> (BoundingBox<T>, BoundingBox<T>) {
        let (cx, cy) = self.iris_center;
        let bx = |r: f64| BoundingBox::new(T::of(cx - r), T::of(cy - r), T::of(cx + r), T::of(cy + r));
        (bx(self.iris_radius), bx(self.pupil_radius()))
    }
}

/// 8-bit grayscale image in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, RasterError> {
        let mut pos = 0;
        let mut token = || -> Result<String, RasterError> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(RasterError::Pgm("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(RasterError::Pgm("expected P5 magic".into()));
        }
        let num = |s: String| s.parse::<usize>().map_err(|_| RasterError::Pgm(format!("bad number {s:?}")));
        let width = num(token()?)?;
        let height = num(token()?)?;
        let maxval = num(token()?)?;
        if maxval != 255 {
            return Err(RasterError::Pgm(format!("maxval {maxval} unsupported")));
        }
        // exactly one whitespace byte separates the header from the data
        let data = &bytes[pos + 1..];
        if data.len() != width * height {
            return Err(RasterError::Pgm(format!("expected {} data bytes, found {}", width * height, data.len())));
        }
        Ok(Self { width, height, pixels: data.to_vec() })
    }
}

/// Paints sclera, iris and pupil disks (a pixel belongs to a disk when its
/// center lies within the radius), then the eyelid band, then noise.
pub fn render_eye_raster(spec: &EyeRasterSpec, seed: u64) -> Result<Raster, RasterError> {
    spec.validate()?;
    let (cx, cy) = spec.iris_center;
    let (ri, rp) = (spec.iris_radius, spec.pupil_radius());
    let lid_bottom = cy - ri + spec.eyelid_occlusion_frac * 2.0 * ri;
    let mut img = Raster::filled(spec.width, spec.height, spec.sclera_gray);
    for y in 0..spec.height {
        let py = y as f64 + 0.5;
        for x in 0..spec.width {
            let px = x as f64 + 0.5;
            let d2 = (px - cx).powi(2) + (py - cy).powi(2);
            let v = if spec.eyelid_occlusion_frac > 0.0 && py < lid_bottom {
                spec.sclera_gray
            } else if d2 <= rp * rp {
                spec.pupil_gray
            } else if d2 <= ri * ri {
                spec.iris_gray
            } else {
                spec.sclera_gray
            };
            img.set(x, y, v);
        }
    }
    if spec.noise_sd > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sd).map_err(|e| RasterError::InvalidSpec(e.to_string()))?;
        let mut rng = rng_from(seed);
        for p in img.pixels.iter_mut() {
            *p = (*p as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(img)
}
