//! Box proposals, the proxy lesion detector, cross-reconstruction merging
//! and detection metrics.

pub mod boxes;
pub mod matched;
pub mod merge;
pub mod metrics;
pub mod proposals;
pub mod records;

pub use boxes::{iou, nms, BoundingBox, Detection, PixelRect};
pub use matched::{matched_filter_detect, DetectorTemplate, DETECTOR_NMS_IOU};
pub use merge::{merge_detections, MergedDetection, MERGE_IOU};
pub use metrics::{
    average_precision_per_class, greedy_match, map_at_iou, map_at_iou_with, match_counts, recall_at_iou, ApMethod,
    MATCH_IOU,
};
pub use proposals::{filter_top_fraction, jitter_box, jitter_boxes, propose_boxes_auto, score_anchors, ProposalConfig};
pub use records::{read_jsonl, write_jsonl, DetectionRecord};
