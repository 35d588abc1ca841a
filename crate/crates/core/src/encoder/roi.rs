//! Differentiable box pooling: bilinear samples on a `P × P` grid of bin
//! centers inside a box.
//!
//! Sample coordinates are clamped to the centers of pixels that lie inside the
//! box, so pixels outside the box never contribute. For an integer-aligned
//! `P × P` box the samples land exactly on pixel centers.

use crate::detect::BoundingBox;
use crate::error::{invalid, Result};

/// One bilinear tap: `(pixel index, weight)`.
pub(crate) type Tap = (usize, f64);

/// Range of pixel-center indices covered by `[lo, hi)` along an axis of length `n`.
fn covered_centers(lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    if first <= last {
        (first, last)
    } else {
        let mid = ((lo + hi) / 2.0 - 0.5).round().clamp(0.0, n as f64 - 1.0);
        (mid, mid)
    }
}

fn axis_taps(lo: f64, hi: f64, n: usize, pool: usize) -> Vec<[(usize, f64); 2]> {
    let (first, last) = covered_centers(lo, hi, n);
    let bin = (hi - lo) / pool as f64;
    (0..pool)
        .map(|k| {
            let u = (lo + (k as f64 + 0.5) * bin - 0.5).clamp(first, last);
            let i0 = u.floor();
            let f = u - i0;
            let i0 = i0 as usize;
            let i1 = (i0 + 1).min(last as usize);
            [(i0, 1.0 - f), (i1, f)]
        })
        .collect()
}

/// Bilinear taps for every grid sample, row-major over the `P × P` grid.
pub(crate) fn roi_taps(bbox: &BoundingBox, pool: usize, width: usize, height: usize) -> Result<Vec<[Tap; 4]>> {
    if !(bbox.area() > 0.0) {
        return Err(invalid(format!("degenerate box {bbox:?}")));
    }
    if !bbox.within(width, height) {
        return Err(invalid(format!("box {bbox:?} lies outside the {width}x{height} image")));
    }
    if pool == 0 {
        return Err(invalid("pool size must be positive"));
    }
    let xs = axis_taps(bbox.x_min, bbox.x_max, width, pool);
    let ys = axis_taps(bbox.y_min, bbox.y_max, height, pool);
    let mut taps = Vec::with_capacity(pool * pool);
    for [(y0, wy0), (y1, wy1)] in &ys {
        for [(x0, wx0), (x1, wx1)] in &xs {
            taps.push([
                (y0 * width + x0, wy0 * wx0),
                (y0 * width + x1, wy0 * wx1),
                (y1 * width + x0, wy1 * wx0),
                (y1 * width + x1, wy1 * wx1),
            ]);
        }
    }
    Ok(taps)
}

/// Samples `plane` (row-major, `width × height`) on a `pool × pool` grid in `bbox`.
pub fn roi_align(plane: &[f64], width: usize, height: usize, bbox: &BoundingBox, pool: usize) -> Result<Vec<f64>> {
    if plane.len() != width * height {
        return Err(invalid("plane size does not match dimensions"));
    }
    let taps = roi_taps(bbox, pool, width, height)?;
    Ok(taps
        .iter()
        .map(|t| t.iter().map(|&(i, w)| plane[i] * w).sum())
        .collect())
}

/// Transpose of [`roi_align`]: scatters grid gradients back onto the plane.
pub fn roi_align_backward(
    grad_grid: &[f64],
    width: usize,
    height: usize,
    bbox: &BoundingBox,
    pool: usize,
) -> Result<Vec<f64>> {
    let taps = roi_taps(bbox, pool, width, height)?;
    let mut out = vec![0.0; width * height];
    for (t, g) in taps.iter().zip(grad_grid) {
        for &(i, w) in t {
            out[i] += w * g;
        }
    }
    Ok(out)
}
