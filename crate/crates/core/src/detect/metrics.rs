//! Recall and mean average precision at a fixed IoU threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::boxes::{iou, score_order, Detection};
use crate::error::{invalid, Result};
use crate::mri::GroundTruth;

/// IoU at which a detection counts as finding a lesion.
pub const MATCH_IOU: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMethod {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPoints,
    /// Mean envelope precision at recall 0, 0.1, …, 1.
    ElevenPoint,
}

/// Greedy one-to-one matching: detections in descending score order (ties
/// by index) take the unmatched same-class ground truth with the highest IoU
/// at or above `threshold` (ties by lower ground-truth index). Returns the
/// matched ground-truth index per detection.
pub fn greedy_match(dets: &[Detection], gts: &[GroundTruth], threshold: f64) -> Vec<Option<usize>> {
    let mut used = vec![false; gts.len()];
    let mut out = vec![None; dets.len()];
    for i in score_order(dets.iter().map(|d| d.score)) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.class_id != dets[i].class_id {
                continue;
            }
            let v = iou(&dets[i].bbox, &gt.bbox);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            out[i] = Some(g);
        }
    }
    out
}

/// `(matched ground truths, total ground truths)`.
pub fn match_counts(dets: &[Detection], gts: &[GroundTruth], threshold: f64) -> (usize, usize) {
    let matched = greedy_match(dets, gts, threshold).iter().flatten().count();
    (matched, gts.len())
}

/// Fraction of ground truths matched; `None` when there are none.
pub fn recall_at_iou(dets: &[Detection], gts: &[GroundTruth], threshold: f64) -> Option<f64> {
    let (m, n) = match_counts(dets, gts, threshold);
    (n > 0).then(|| m as f64 / n as f64)
}

fn average_precision(tp: &[bool], n_gt: usize, method: ApMethod) -> f64 {
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (k + 1) as f64);
        recall.push(hits as f64 / n_gt as f64);
    }
    // Monotone envelope from the right.
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    match method {
        ApMethod::AllPoints => {
            let mut ap = 0.0;
            let mut prev = 0.0;
            for (r, p) in recall.iter().zip(&precision) {
                ap += (r - prev) * p;
                prev = *r;
            }
            ap
        }
        ApMethod::ElevenPoint => {
            (0..=10)
                .map(|t| {
                    let level = t as f64 / 10.0;
                    recall
                        .iter()
                        .position(|&r| r >= level - 1e-12)
                        .map_or(0.0, |k| precision[k])
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

/// Average precision per class that has at least one ground truth.
pub fn average_precision_per_class(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruth>],
    threshold: f64,
    method: ApMethod,
) -> Result<BTreeMap<u32, f64>> {
    if dets.len() != gts.len() {
        return Err(invalid("detections and ground truths cover different image counts"));
    }
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for g in gts.iter().flatten() {
        *n_gt.entry(g.class_id).or_default() += 1;
    }
    // (score, is true positive) per class, in pooled order.
    let mut ranked: BTreeMap<u32, Vec<(f64, bool)>> = BTreeMap::new();
    for (ds, gs) in dets.iter().zip(gts) {
        for (d, m) in ds.iter().zip(greedy_match(ds, gs, threshold)) {
            ranked.entry(d.class_id).or_default().push((d.score, m.is_some()));
        }
    }
    Ok(n_gt
        .iter()
        .map(|(&class, &n)| {
            let list = ranked.remove(&class).unwrap_or_default();
            let tp: Vec<bool> = score_order(list.iter().map(|e| e.0)).into_iter().map(|i| list[i].1).collect();
            (class, average_precision(&tp, n, method))
        })
        .collect())
}

/// Mean AP over classes with ground truth; `None` when no class has any.
pub fn map_at_iou(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>], threshold: f64) -> Result<Option<f64>> {
    map_at_iou_with(dets, gts, threshold, ApMethod::AllPoints)
}

pub fn map_at_iou_with(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruth>],
    threshold: f64,
    method: ApMethod,
) -> Result<Option<f64>> {
    let per = average_precision_per_class(dets, gts, threshold, method)?;
    Ok((!per.is_empty()).then(|| per.values().sum::<f64>() / per.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::BoundingBox;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64) -> BoundingBox {
        BoundingBox::new(x, y, x + 10.0, y + 10.0).unwrap()
    }

    fn det(x: f64, class_id: u32, score: f64) -> Detection {
        Detection {
            bbox: bx(x, 0.0),
            class_id,
            score,
        }
    }

    fn gt(x: f64, class_id: u32) -> GroundTruth {
        GroundTruth {
            bbox: bx(x, 0.0),
            class_id,
        }
    }

    #[test]
    fn recall_examples() {
        let gts = [gt(0.0, 0), gt(50.0, 0)];
        assert_eq!(recall_at_iou(&[det(1.0, 0, 0.9)], &gts, MATCH_IOU), Some(0.5));
        assert_eq!(recall_at_iou(&[det(0.0, 0, 0.9), det(50.0, 0, 0.1)], &gts, MATCH_IOU), Some(1.0));
        assert_eq!(recall_at_iou(&[det(0.0, 1, 0.9)], &gts, MATCH_IOU), Some(0.0));
        assert_eq!(recall_at_iou(&[det(0.0, 0, 0.9)], &[], MATCH_IOU), None);
    }

    #[test]
    fn one_detection_matches_one_ground_truth() {
        let gts = [gt(0.0, 0), gt(1.0, 0)];
        assert_eq!(recall_at_iou(&[det(0.5, 0, 0.9)], &gts, MATCH_IOU), Some(0.5));
    }

    #[test]
    fn map_examples() {
        let g = vec![vec![gt(0.0, 0)]];
        assert_eq!(map_at_iou(&[vec![det(0.0, 0, 0.9)]], &g, MATCH_IOU).unwrap(), Some(1.0));
        // False positive ranked first: precision 1/2 at recall 1.
        let d = vec![vec![det(60.0, 0, 0.9), det(0.0, 0, 0.8)]];
        assert_eq!(map_at_iou(&d, &g, MATCH_IOU).unwrap(), Some(0.5));
        // Class 0 AP 1, class 1 AP 0.5.
        let d = vec![vec![det(0.0, 0, 0.9), det(60.0, 1, 0.9), det(30.0, 1, 0.8)]];
        let g = vec![vec![gt(0.0, 0), gt(30.0, 1)]];
        assert_eq!(map_at_iou(&d, &g, MATCH_IOU).unwrap(), Some(0.75));
        assert_eq!(map_at_iou(&[vec![det(0.0, 0, 0.9)]], &[vec![]], MATCH_IOU).unwrap(), None);
    }

    #[test]
    fn eleven_point_variant() {
        let g = vec![vec![gt(0.0, 0)]];
        let d = vec![vec![det(60.0, 0, 0.9), det(0.0, 0, 0.8)]];
        assert_eq!(map_at_iou_with(&d, &g, MATCH_IOU, ApMethod::ElevenPoint).unwrap(), Some(0.5));
        let g = vec![vec![gt(0.0, 0), gt(30.0, 0)]];
        let d = vec![vec![det(0.0, 0, 0.9)]];
        // Recall reaches only 0.5: six of eleven levels at precision 1.
        let v = map_at_iou_with(&d, &g, MATCH_IOU, ApMethod::ElevenPoint).unwrap().unwrap();
        assert!((v - 6.0 / 11.0).abs() < 1e-12);
        assert_eq!(map_at_iou(&d, &g, MATCH_IOU).unwrap(), Some(0.5));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruth>, Vec<Detection>)> {
        let d = (0.0..30.0f64, 0u32..2, 0.0..1.0f64).prop_map(|(x, c, s)| det(x, c, s));
        let g = (0.0..30.0f64, 0u32..2).prop_map(|(x, c)| gt(x, c));
        (
            prop::collection::vec(d.clone(), 0..4),
            prop::collection::vec(g, 0..3),
            prop::collection::vec(d, 0..4),
        )
    }

    proptest! {
        #[test]
        fn recall_never_drops_under_union((a, gts, b) in arb_case()) {
            let mut union = a.clone();
            union.extend(b.iter().copied());
            if let (Some(ra), Some(ru)) = (recall_at_iou(&a, &gts, MATCH_IOU), recall_at_iou(&union, &gts, MATCH_IOU)) {
                prop_assert!(ru >= ra, "{ru} < {ra}");
            }
        }

        #[test]
        fn map_in_unit_interval((a, gts, _) in arb_case()) {
            if let Some(v) = map_at_iou(&[a], &[gts], MATCH_IOU).unwrap() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
