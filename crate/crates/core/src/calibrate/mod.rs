//! Boosted-tree calibration on network embeddings, plus threshold analysis.

mod boost;
mod roc;

pub use boost::{fit_gbt, log_loss, predict_proba, sigmoid, BoostConfig, BoostModel, TreeNode};
pub use roc::{
    auc_line, confusion_at, equal_error_threshold, roc_curve, roc_svg, write_confusion_csv, write_roc_csv,
    ConfusionMatrix, RocCurve, RocPoint, DEFAULT_SWEEP,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CalibrateError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("empty input")]
    Empty,
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("invalid boost config: {0}")]
    Config(String),
    #[error("boost model json: {0}")]
    Json(String),
    #[error("i/o: {0}")]
    Io(String),
}
