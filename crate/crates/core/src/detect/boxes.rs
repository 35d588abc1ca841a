use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SdrError};

/// Axis-aligned box in continuous pixel coordinates; pixel `i` spans `[i, i+1)`.
///
/// Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = SdrError;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(invalid(format!(
                "degenerate box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= width as f64
            && self.y_max <= height as f64
    }

    /// Clips to `[0, width] × [0, height]`; `None` if nothing is left.
    pub fn clipped(&self, width: usize, height: usize) -> Option<Self> {
        Self::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(width as f64),
            self.y_max.min(height as f64),
        )
        .ok()
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Integer pixel rectangle `[x0, x1) × [y0, y1)` covering the box grown by
    /// `margin` pixels, clamped to the image.
    pub(crate) fn pixel_rect(&self, margin: i64, width: usize, height: usize) -> PixelRect {
        let x0 = (self.x_min.floor() as i64 - margin).clamp(0, width as i64) as usize;
        let y0 = (self.y_min.floor() as i64 - margin).clamp(0, height as i64) as usize;
        let x1 = (self.x_max.ceil() as i64 + margin).clamp(0, width as i64) as usize;
        let y1 = (self.y_max.ceil() as i64 + margin).clamp(0, height as i64) as usize;
        PixelRect { x0, y0, x1, y1 }
    }
}

/// Half-open integer pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn union(&self, other: &Self) -> Self {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        Self {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn grow(&self, margin: usize, width: usize, height: usize) -> Self {
        Self {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width),
            y1: (self.y1 + margin).min(height),
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Intersection over union.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "class")]
    pub class_id: u32,
    pub score: f64,
}

/// Indices of `scores` sorted by descending score, ties by ascending index.
pub(crate) fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy non-maximum suppression: visit detections by descending score
/// (ties by lower index) and drop any same-class box whose IoU with an
/// already kept box exceeds `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets.iter().map(|d| d.score)) {
        let d = dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    fn det(b: BoundingBox, class_id: u32, score: f64) -> Detection {
        Detection {
            bbox: b,
            class_id,
            score,
        }
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        let v = iou(&a, &bx(5.0, 5.0, 15.0, 15.0));
        assert!((v - 25.0 / 175.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BoundingBox::new(1.0, 1.0, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
    }

    #[test]
    fn nms_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(nms(&[det(a, 0, 0.4)], 0.25).len(), 1);

        let kept = nms(&[det(a, 0, 0.8), det(a, 0, 0.9)], 0.25);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);

        // IoU = 9/191 ≈ 0.047 < 0.05.
        let b = bx(7.0, 7.0, 17.0, 17.0);
        assert!((iou(&a, &b) - 9.0 / 191.0).abs() < 1e-15);
        assert_eq!(nms(&[det(a, 0, 0.9), det(b, 0, 0.8)], 0.05).len(), 2);

        // Different classes never suppress each other.
        assert_eq!(nms(&[det(a, 0, 0.9), det(a, 1, 0.8)], 0.25).len(), 2);
    }

    #[test]
    fn nms_ties_keep_lower_index() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(1.0, 0.0, 11.0, 10.0);
        let kept = nms(&[det(a, 0, 0.5), det(b, 0, 0.5)], 0.25);
        assert_eq!(kept, vec![det(a, 0, 0.5)]);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.5..20.0f64, 0.5..20.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn nms_output_is_sparse_subset(
            boxes in prop::collection::vec((arb_box(), 0u32..2, 0.0..1.0f64), 0..12),
            thr in 0.05..0.9f64,
        ) {
            let dets: Vec<Detection> = boxes.into_iter().map(|(b, c, s)| det(b, c, s)).collect();
            let kept = nms(&dets, thr);
            for k in &kept {
                prop_assert!(dets.contains(k));
            }
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    prop_assert!(a.class_id != b.class_id || iou(&a.bbox, &b.bbox) <= thr);
                }
            }
        }
    }
}
