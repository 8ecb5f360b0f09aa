//! Fused Conv3D/Conv1D alert classifier: forward and reverse passes, training,
//! embeddings and Grad-CAM.

mod conv;
mod gradcam;
mod io;
mod model;
mod tensor;
mod train;

pub use conv::{conv1d, conv3d, conv_backward, conv_forward, max_pool_backward, max_pool_forward, ConvGeometry, PoolGeometry};
pub use gradcam::{grad_cam, CamMap};
pub use io::{read_model, read_model_file, write_model, write_model_file, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use model::{
    backward, batch_gradient, embed, forward, is_alert, loss, predict, sample_gradient, Conv1dSpec, Conv3dSpec,
    ForwardCache, InitRecord, ModelInput, ModelParams, ModelSpec, ParamSlot, Prediction, INIT_SCHEME, PROB_EPSILON,
};
pub use tensor::Tensor;
pub use train::{
    balanced_class_weights, embed_all, evaluate, predict_all, read_history_csv, train, write_history_csv, Adam, EarlyStopping,
    EpochRecord, Examples, StopDecision, TrainConfig, TrainOutcome, WindowSet,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("target class {0} is not 0 or 1")]
    Target(usize),
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(String),
}
