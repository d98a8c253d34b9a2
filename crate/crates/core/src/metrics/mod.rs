//! Confusion-matrix metrics, average surface distance, infected-area ratio,
//! per-image reports and the paired t-test.

mod confusion;
mod distance;
mod mask;
mod report;
mod stats;

pub use confusion::{asd, background_iou, confusion, f1, foreground_iou, infection_ratio, miou, precision, sensitivity, ConfusionMatrix};
pub use mask::Mask;
pub use report::{batch_evaluate, evaluate_masks, predict_masks, Aggregate, ImageMetrics, MetricsReport, EVAL_BATCH};
pub use stats::{paired_t_test, Stars, TTestResult};
