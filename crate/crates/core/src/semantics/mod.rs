//! Open-set click protocol, semantic inference, the 1-NN baseline and mIoU.

mod clicks;
mod eval;
mod knn;
mod registry;
mod segment;

pub use clicks::{load_click_script, save_click_script, script_order, ClickSpec};
pub use eval::{
    click_gt_classes, evaluate_baseline, evaluate_emergence, evaluate_field, miou, ClassIou, EmergenceReport, EvalReport,
    InstanceOutcome, IouAccumulator,
};
pub use knn::{knn_baseline, pixel_to_zeta, upsample_labels, AnchorSet};
pub use registry::{Click, ClickRegistry};
pub use segment::{classify_logits, segment_view, SegmentationResult};

use crate::mapper::{AblationMode, MapperConfig};

/// The configuration for `mode`; both modes keep the same seeds so runs pair up.
pub fn ablation_mode(cfg: &MapperConfig, mode: AblationMode) -> MapperConfig {
    mode.apply(cfg.clone())
}

#[cfg(test)]
mod tests;
