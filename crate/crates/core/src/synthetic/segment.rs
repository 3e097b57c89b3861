//! Classical two-threshold segmenter for synthetic eye rasters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::raster::Raster;
use crate::model::{BoundingBox, Detection, DetectionClass};
use crate::scalar::Real;

/// Components smaller than this many pixels are ignored.
pub const MIN_COMPONENT_PX: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("no component found for {0:?}")]
    NoComponent(Vec<DetectionClass>),
    #[error("threshold order: pupil threshold {pupil} must be below iris threshold {iris}")]
    ThresholdOrder { pupil: u8, iris: u8 },
}

/// Threshold overrides; `None` picks the value from the histogram.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub pupil_threshold: Option<u8>,
    pub iris_threshold: Option<u8>,
}

/// Three-class Otsu by exhaustive search. Returns `(t1, t2)` with classes
/// `v < t1`, `t1 ≤ v < t2`, `v ≥ t2`, maximising the between-class
/// variance. The first maximum in `(t1, t2)` order wins.
pub fn multi_otsu(raster: &Raster) -> (u8, u8) {
    let mut hist = [0u64; 256];
    for &p in &raster.pixels {
        hist[p as usize] += 1;
    }
    let total = raster.pixels.len().max(1) as f64;
    // prefix[k] covers values < k
    let mut w = [0.0f64; 257];
    let mut s = [0.0f64; 257];
    for v in 0..256 {
        let p = hist[v] as f64 / total;
        w[v + 1] = w[v] + p;
        s[v + 1] = s[v] + p * v as f64;
    }
    let term = |a: usize, b: usize| {
        let wc = w[b] - w[a];
        if wc > 0.0 {
            (s[b] - s[a]).powi(2) / wc
        } else {
            0.0
        }
    };
    let mut best = (1u8, 2u8);
    let mut best_val = f64::NEG_INFINITY;
    for t1 in 1..255usize {
        let lo = term(0, t1);
        for t2 in t1 + 1..256 {
            let val = lo + term(t1, t2) + term(t2, 256);
            if val > best_val {
                best_val = val;
                best = (t1 as u8, t2 as u8);
            }
        }
    }
    best
}

/// Pixel count, boundary edge count and bounding box of one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    pub perimeter: usize,
    /// `[min_x, min_y, max_x + 1, max_y + 1]`.
    pub bbox: [usize; 4],
}

impl Component {
    pub fn circularity(&self) -> f64 {
        if self.perimeter == 0 {
            return 0.0;
        }
        (4.0 * std::f64::consts::PI * self.area as f64 / (self.perimeter as f64).powi(2)).clamp(0.0, 1.0)
    }
}

/// Largest 4-connected component of `mask`; ties keep the first in scan order.
pub fn largest_component(mask: &[bool], width: usize, height: usize) -> Option<Component> {
    let mut label = vec![0u32; mask.len()];
    let mut best: Option<(usize, u32)> = None;
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if mask[j] && label[j] == 0 {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        if best.is_none_or(|(a, _)| area > a) {
            best = Some((area, next));
        }
    }
    let (area, id) = best?;
    let mut bbox = [usize::MAX, usize::MAX, 0, 0];
    let mut perimeter = 0;
    let inside = |x: isize, y: isize| {
        x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height && label[y as usize * width + x as usize] == id
    };
    for (i, _) in label.iter().enumerate().filter(|(_, &l)| l == id) {
        let (x, y) = (i % width, i / width);
        bbox[0] = bbox[0].min(x);
        bbox[1] = bbox[1].min(y);
        bbox[2] = bbox[2].max(x + 1);
        bbox[3] = bbox[3].max(y + 1);
        let (xi, yi) = (x as isize, y as isize);
        perimeter += [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)]
            .iter()
            .filter(|&&(nx, ny)| !inside(nx, ny))
            .count();
    }
    Some(Component { area, perimeter, bbox })
}

/// Returns `[iris, pupil]` detections. The pupil mask is `v < t1` and the
/// iris mask (iris ∪ pupil) is `v < t2`.
pub fn segment_raster<T: Real>(raster: &Raster, params: &SegmentParams) -> Result<Vec<Detection<T>>, SegmentError> {
    let (auto1, auto2) = match (params.pupil_threshold, params.iris_threshold) {
        (Some(a), Some(b)) => (a, b),
        _ => multi_otsu(raster),
    };
    let t1 = params.pupil_threshold.unwrap_or(auto1);
    let t2 = params.iris_threshold.unwrap_or(auto2);
    if t1 >= t2 {
        return Err(SegmentError::ThresholdOrder { pupil: t1, iris: t2 });
    }
    let find = |t: u8| {
        let mask: Vec<bool> = raster.pixels.iter().map(|&v| v < t).collect();
        largest_component(&mask, raster.width, raster.height).filter(|c| c.area >= MIN_COMPONENT_PX)
    };
    let iris = find(t2);
    let pupil = find(t1);
    let missing: Vec<DetectionClass> = [(DetectionClass::Iris, &iris), (DetectionClass::Pupil, &pupil)]
        .iter()
        .filter(|(_, c)| c.is_none())
        .map(|(k, _)| *k)
        .collect();
    if !missing.is_empty() {
        return Err(SegmentError::NoComponent(missing));
    }
    let det = |class, c: Component| {
        let [x1, y1, x2, y2] = c.bbox.map(T::of_usize);
        Detection::new(class, T::of(c.circularity()), BoundingBox::new(x1, y1, x2, y2))
    };
    Ok(vec![det(DetectionClass::Iris, iris.expect("checked")), det(DetectionClass::Pupil, pupil.expect("checked"))])
}
