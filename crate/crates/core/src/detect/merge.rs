use serde::{Deserialize, Serialize};

use super::boxes::{iou, score_order, BoundingBox, Detection};
use crate::error::{invalid, Result};

/// IoU at or above which detections from different reconstructions are
/// treated as the same finding.
pub const MERGE_IOU: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergedDetection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "class")]
    pub class_id: u32,
    /// Best score of the group in each reconstruction; 0 where absent.
    pub scores: Vec<f64>,
    pub mean_score: f64,
}

impl MergedDetection {
    pub fn to_detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            class_id: self.class_id,
            score: self.mean_score,
        }
    }
}

/// Pools detections from `n_rec` reconstructions. Groups are formed greedily:
/// the highest-scoring unassigned detection anchors a group that absorbs
/// every unassigned same-class detection with IoU ≥ 0.25 to it. The merged
/// box is the anchor's box and the merged score averages over all `n_rec`
/// slots, counting absent reconstructions as 0.
pub fn merge_detections(per_recon: &[Vec<Detection>], n_rec: usize) -> Result<Vec<MergedDetection>> {
    if per_recon.len() != n_rec || n_rec == 0 {
        return Err(invalid(format!(
            "expected {n_rec} detection lists, got {}",
            per_recon.len()
        )));
    }
    let pooled: Vec<(usize, Detection)> = per_recon
        .iter()
        .enumerate()
        .flat_map(|(r, ds)| ds.iter().map(move |d| (r, *d)))
        .collect();
    let mut assigned = vec![false; pooled.len()];
    let order = score_order(pooled.iter().map(|(_, d)| d.score));
    let mut out = Vec::new();
    for &a in &order {
        if assigned[a] {
            continue;
        }
        let anchor = pooled[a].1;
        let mut scores = vec![0.0; n_rec];
        for &m in &order {
            let (r, d) = pooled[m];
            if !assigned[m] && d.class_id == anchor.class_id && iou(&anchor.bbox, &d.bbox) >= MERGE_IOU {
                assigned[m] = true;
                scores[r] = f64::max(scores[r], d.score);
            }
        }
        let mean_score = scores.iter().sum::<f64>() / n_rec as f64;
        out.push(MergedDetection {
            bbox: anchor.bbox,
            class_id: anchor.class_id,
            scores,
            mean_score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(x: f64, class_id: u32, score: f64) -> Detection {
        Detection {
            bbox: BoundingBox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
            class_id,
            score,
        }
    }

    #[test]
    fn absent_reconstructions_count_as_zero() {
        let m = merge_detections(&[vec![det(0.0, 0, 0.9)], vec![det(1.0, 0, 0.6)], vec![]], 3).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m[0].mean_score - 0.5).abs() < 1e-15);
        assert_eq!(m[0].scores, vec![0.9, 0.6, 0.0]);
        assert_eq!(m[0].bbox, det(0.0, 0, 0.9).bbox);
    }

    #[test]
    fn single_reconstruction_is_identity() {
        let ds = vec![det(0.0, 0, 0.7), det(50.0, 0, 0.4), det(0.0, 1, 0.2)];
        let m = merge_detections(std::slice::from_ref(&ds), 1).unwrap();
        let back: Vec<Detection> = m.iter().map(|d| d.to_detection()).collect();
        assert_eq!(back, ds);
    }

    #[test]
    fn equal_scores_everywhere_are_kept() {
        let per = vec![vec![det(5.0, 1, 0.3)]; 3];
        let m = merge_detections(&per, 3).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m[0].mean_score - 0.3).abs() < 1e-15);
    }

    #[test]
    fn list_count_must_match() {
        assert!(merge_detections(&[vec![]], 2).is_err());
    }

    proptest! {
        #[test]
        fn merged_score_bounded_by_max(
            raw in prop::collection::vec(prop::collection::vec((0.0..40.0f64, 0u32..2, 0.0..1.0f64), 0..5), 1..4)
        ) {
            let per: Vec<Vec<Detection>> = raw.iter().map(|v| v.iter().map(|&(x, c, s)| det(x, c, s)).collect()).collect();
            let m = merge_detections(&per, per.len()).unwrap();
            let total: usize = per.iter().map(|v| v.len()).sum();
            prop_assert!(m.len() <= total);
            let max = per.iter().flatten().map(|d| d.score).fold(0.0, f64::max);
            for d in &m {
                prop_assert!(d.mean_score <= max + 1e-15);
                prop_assert!(d.scores.iter().cloned().fold(0.0, f64::max) <= max);
            }
        }
    }
}
