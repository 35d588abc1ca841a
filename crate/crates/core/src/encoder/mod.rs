//! Box-level feature encoder, its reverse-mode gradient, and robust
//! fine-tuning of the backbone.

pub mod backbone;
pub mod model;
pub mod persist;
pub mod robust;
pub mod roi;

pub use model::{
    distance_gradient, encode_boxes, feature_vjp, feature_distance, feature_distance_with, Aggregation, BoxFeatures,
    DistanceGradient, EncoderModel, EncoderVariant, MAGNITUDE_EPS, REFERENCE_INPUT_SCALE,
};
pub use persist::{load_model, read_model, save_model, write_model};
pub use robust::{inner_max_objective, robust_finetune, robustness_metric, RobustTrainConfig, TrainingLog};
pub use roi::{roi_align, roi_align_backward};
