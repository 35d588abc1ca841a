//! Proxy lesion detector: normalized cross-correlation of the magnitude image
//! with one template per class.

use serde::{Deserialize, Serialize};

use super::boxes::{nms, BoundingBox, Detection};
use crate::error::{invalid, Result};
use crate::mri::{lesion_patch, ComplexImage, LesionShape};

/// Overlap above which same-class detections are suppressed.
pub const DETECTOR_NMS_IOU: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorTemplate {
    pub class_id: u32,
    pub side: usize,
    /// Row-major `side × side` values.
    pub values: Vec<f64>,
}

impl DetectorTemplate {
    pub fn new(class_id: u32, side: usize, values: Vec<f64>) -> Result<Self> {
        if side == 0 || values.len() != side * side || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("template must be a finite side × side patch"));
        }
        let t = Self { class_id, side, values };
        if t.extent().is_none() {
            return Err(invalid("template has no nonzero pixels"));
        }
        Ok(t)
    }

    pub fn from_lesion(shape: LesionShape, radius: f64, class_id: u32) -> Self {
        let (side, values) = lesion_patch(shape, radius);
        Self::new(class_id, side, values).expect("lesion patches are non-empty")
    }

    /// Tight pixel box `[x0, y0, x1, y1)` of the nonzero template pixels.
    fn extent(&self) -> Option<[usize; 4]> {
        let mut e: Option<[usize; 4]> = None;
        for (i, v) in self.values.iter().enumerate() {
            if *v != 0.0 {
                let (x, y) = (i % self.side, i / self.side);
                e = Some(match e {
                    None => [x, y, x + 1, y + 1],
                    Some([a, b, c, d]) => [a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)],
                });
            }
        }
        e
    }
}

/// NCC of `t` against every placement (top-left corner) in `m`.
fn ncc_map(m: &[f64], w: usize, h: usize, t: &DetectorTemplate) -> Vec<f64> {
    let s = t.side;
    let n = (s * s) as f64;
    let t_mean = t.values.iter().sum::<f64>() / n;
    let tz: Vec<f64> = t.values.iter().map(|v| v - t_mean).collect();
    let t_norm = tz.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (pw, ph) = (w + 1 - s, h + 1 - s);
    let mut out = vec![0.0; pw * ph];
    if t_norm == 0.0 {
        return out;
    }
    for py in 0..ph {
        for px in 0..pw {
            let (mut s1, mut s2, mut cross) = (0.0, 0.0, 0.0);
            for ty in 0..s {
                let row = &m[(py + ty) * w + px..(py + ty) * w + px + s];
                for (v, tv) in row.iter().zip(&tz[ty * s..(ty + 1) * s]) {
                    s1 += v;
                    s2 += v * v;
                    cross += v * tv;
                }
            }
            let ss = s2 - s1 * s1 / n;
            if ss > 1e-10 * s2.max(1e-300) {
                out[py * pw + px] = cross / (ss.sqrt() * t_norm);
            }
        }
    }
    out
}

/// Detections at local maxima of the NCC map with score `clamp(ncc, 0, 1)`
/// at least `threshold`, followed by same-class NMS at IoU 0.25.
pub fn matched_filter_detect(x: &ComplexImage, templates: &[DetectorTemplate], threshold: f64) -> Result<Vec<Detection>> {
    if templates.is_empty() {
        return Err(invalid("no detector templates"));
    }
    let (w, h) = (x.width(), x.height());
    let m = x.magnitude();
    let mut dets = Vec::new();
    for t in templates {
        if t.side > w || t.side > h {
            return Err(invalid(format!("template of side {} exceeds image", t.side)));
        }
        let [ex0, ey0, ex1, ey1] = t.extent().ok_or_else(|| invalid("empty template"))?;
        let map = ncc_map(&m, w, h, t);
        let (pw, ph) = (w + 1 - t.side, h + 1 - t.side);
        for py in 0..ph {
            for px in 0..pw {
                let v = map[py * pw + px];
                let score = v.clamp(0.0, 1.0);
                if score <= 0.0 || score < threshold {
                    continue;
                }
                let is_max = (py.saturating_sub(1)..(py + 2).min(ph))
                    .all(|qy| (px.saturating_sub(1)..(px + 2).min(pw)).all(|qx| map[qy * pw + qx] <= v));
                if is_max {
                    let bbox = BoundingBox::new(
                        (px + ex0) as f64,
                        (py + ey0) as f64,
                        (px + ex1) as f64,
                        (py + ey1) as f64,
                    )?;
                    dets.push(Detection {
                        bbox,
                        class_id: t.class_id,
                        score,
                    });
                }
            }
        }
    }
    Ok(nms(&dets, DETECTOR_NMS_IOU))
}
