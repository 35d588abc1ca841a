//! Box proposals: jittered copies of known boxes (manual mode) and a dense
//! anchor scorer (automatic mode).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::boxes::{nms, score_order, BoundingBox, Detection};
use crate::mri::ComplexImage;

/// Jitters one box. Each entry of `u` lies in `[0, 1]`: `u[0]`, `u[1]` pick
/// the width/height scale in `[0.75, 1.25]`, `u[2]`, `u[3]` the center shift
/// in `[-0.25, 0.25]` of the original width/height. The result is clipped to
/// the image.
pub fn jitter_box(b: &BoundingBox, u: [f64; 4], width: usize, height: usize) -> Option<BoundingBox> {
    let (cx, cy) = b.center();
    let (bw, bh) = (b.width(), b.height());
    let sx = 0.75 + 0.5 * u[0];
    let sy = 0.75 + 0.5 * u[1];
    let dx = (-0.25 + 0.5 * u[2]) * bw;
    let dy = (-0.25 + 0.5 * u[3]) * bh;
    BoundingBox::from_center(cx + dx, cy + dy, bw * sx, bh * sy)
        .ok()?
        .clipped(width, height)
}

/// Jitters every box with an RNG seeded by `seed`. Boxes that vanish after
/// clipping are dropped.
pub fn jitter_boxes(boxes: &[BoundingBox], seed: u64, width: usize, height: usize) -> Vec<BoundingBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    boxes
        .iter()
        .filter_map(|b| {
            let u = [rng.random(), rng.random(), rng.random(), rng.random()];
            jitter_box(b, u, width, height)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    /// Square anchor sides in pixels.
    pub sizes: Vec<usize>,
    pub stride: usize,
    /// Fraction of anchors kept after ranking by score.
    pub keep_fraction: f64,
    pub nms_iou: f64,
    pub max_boxes: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            sizes: vec![8, 16, 32],
            stride: 8,
            keep_fraction: 0.75,
            nms_iou: 0.05,
            max_boxes: 20,
        }
    }
}

/// Summed-area tables of `m` and `m²`.
struct Integral {
    w: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Integral {
    fn new(m: &[f64], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut s1 = vec![0.0; stride * (h + 1)];
        let mut s2 = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let (mut r1, mut r2) = (0.0, 0.0);
            for x in 0..w {
                let v = m[y * w + x];
                r1 += v;
                r2 += v * v;
                s1[(y + 1) * stride + x + 1] = s1[y * stride + x + 1] + r1;
                s2[(y + 1) * stride + x + 1] = s2[y * stride + x + 1] + r2;
            }
        }
        Self { w, s1, s2 }
    }

    /// `(Σm, Σm², count)` over `[x0, x1) × [y0, y1)`.
    fn sums(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64, f64) {
        let s = self.w + 1;
        let rect = |t: &[f64]| t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0];
        (rect(&self.s1), rect(&self.s2), ((x1 - x0) * (y1 - y0)) as f64)
    }
}

/// Every anchor with its contrast score
/// `max(0, mean_in((m − μ_ring)²) − var_ring)`, where the ring is the box
/// grown by a quarter of its side (at least 2 px) minus the box itself.
pub fn score_anchors(x: &ComplexImage, cfg: &ProposalConfig) -> Vec<(BoundingBox, f64)> {
    let (w, h) = (x.width(), x.height());
    let integral = Integral::new(&x.magnitude(), w, h);
    let stride = cfg.stride.max(1);
    let mut out = Vec::new();
    for &side in &cfg.sizes {
        if side == 0 || side > w || side > h {
            continue;
        }
        let margin = (side / 4).max(2);
        for y0 in (0..=h - side).step_by(stride) {
            for x0 in (0..=w - side).step_by(stride) {
                let (x1, y1) = (x0 + side, y0 + side);
                let (i1, i2, n_in) = integral.sums(x0, y0, x1, y1);
                let (ox0, oy0) = (x0.saturating_sub(margin), y0.saturating_sub(margin));
                let (ox1, oy1) = ((x1 + margin).min(w), (y1 + margin).min(h));
                let (o1, o2, n_out) = integral.sums(ox0, oy0, ox1, oy1);
                let (r1, r2, n_ring) = (o1 - i1, o2 - i2, n_out - n_in);
                let score = if n_ring > 0.0 {
                    let mu = r1 / n_ring;
                    let var_ring = (r2 / n_ring - mu * mu).max(0.0);
                    let energy = (i2 - 2.0 * mu * i1) / n_in + mu * mu;
                    (energy - var_ring).max(0.0)
                } else {
                    0.0
                };
                let b = BoundingBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64).expect("positive side");
                out.push((b, score));
            }
        }
    }
    out
}

/// Keeps the top `⌈keep_fraction · N⌉` anchors by score (ties by anchor order).
pub fn filter_top_fraction(scored: &[(BoundingBox, f64)], keep_fraction: f64) -> Vec<(BoundingBox, f64)> {
    let keep = (keep_fraction * scored.len() as f64).ceil() as usize;
    score_order(scored.iter().map(|s| s.1))
        .into_iter()
        .take(keep)
        .map(|i| scored[i])
        .collect()
}

/// Automatic proposals: score anchors, keep the top fraction, drop
/// zero-score anchors, suppress overlaps and cap the count.
pub fn propose_boxes_auto(x: &ComplexImage, cfg: &ProposalConfig) -> Vec<BoundingBox> {
    let kept = filter_top_fraction(&score_anchors(x, cfg), cfg.keep_fraction);
    let dets: Vec<Detection> = kept
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(bbox, score)| Detection {
            bbox,
            class_id: 0,
            score,
        })
        .collect();
    nms(&dets, cfg.nms_iou)
        .into_iter()
        .take(cfg.max_boxes)
        .map(|d| d.bbox)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::iou;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn lower_extremes_shrink_and_shift() {
        let b = bx(40.0, 40.0, 60.0, 60.0);
        let j = jitter_box(&b, [0.0; 4], 128, 128).unwrap();
        // width 15 centered at 50 - 5 = 45.
        assert_eq!(j, bx(37.5, 37.5, 52.5, 52.5));
        let j = jitter_box(&b, [1.0; 4], 128, 128).unwrap();
        assert_eq!(j, bx(42.5, 42.5, 67.5, 67.5));
    }

    #[test]
    fn jitter_is_clipped_and_deterministic() {
        let b = vec![bx(0.0, 0.0, 10.0, 10.0)];
        let a = jitter_boxes(&b, 3, 32, 32);
        assert_eq!(a, jitter_boxes(&b, 3, 32, 32));
        assert!(a[0].within(32, 32));
    }

    #[test]
    fn thousand_jitters_stay_in_bounds() {
        let b = vec![bx(50.0, 50.0, 70.0, 70.0)];
        for seed in 0..1000 {
            let j = jitter_boxes(&b, seed, 128, 128)[0];
            assert!((15.0..=25.0).contains(&j.width()) && (15.0..=25.0).contains(&j.height()));
            let (cx, cy) = j.center();
            assert!((55.0..=65.0).contains(&cx) && (55.0..=65.0).contains(&cy));
        }
    }

    #[test]
    fn constant_image_scores_zero() {
        let x = ComplexImage::from_vec(64, 64, vec![Complex64::new(0.5, 0.0); 64 * 64]).unwrap();
        let cfg = ProposalConfig::default();
        assert!(score_anchors(&x, &cfg).iter().all(|&(_, s)| s.abs() < 1e-9));
        assert!(propose_boxes_auto(&x, &cfg).len() <= cfg.max_boxes);
    }

    #[test]
    fn anchor_count_and_top_fraction() {
        let x = ComplexImage::zeros(64, 64);
        let scored = score_anchors(&x, &ProposalConfig::default());
        // 8 px: 8×8 positions, 16 px: 7×7, 32 px: 5×5.
        assert_eq!(scored.len(), 64 + 49 + 25);
        assert_eq!(filter_top_fraction(&scored, 0.75).len(), 104);
        assert_eq!(filter_top_fraction(&scored[..5], 0.75).len(), 4);
    }

    #[test]
    fn bright_blob_is_proposed() {
        let mut x = ComplexImage::zeros(64, 64);
        for y in 36..42 {
            for xx in 20..26 {
                x.set(xx, y, Complex64::new(1.0, 0.0));
            }
        }
        let p = propose_boxes_auto(&x, &ProposalConfig::default());
        let blob = bx(20.0, 36.0, 26.0, 42.0);
        assert!(p.iter().any(|b| b.intersection_area(&blob) >= 36.0 * 0.5), "{p:?}");
    }

    proptest! {
        #[test]
        fn proposals_do_not_overlap(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..48 * 48).map(|_| Complex64::new(rng.random_range(0.0..1.0), 0.0)).collect();
            let x = ComplexImage::from_vec(48, 48, data).unwrap();
            let p = propose_boxes_auto(&x, &ProposalConfig::default());
            prop_assert!(p.len() <= 20);
            for (i, a) in p.iter().enumerate() {
                for b in &p[i + 1..] {
                    prop_assert!(iou(a, b) <= 0.05);
                }
            }
        }
    }
}
