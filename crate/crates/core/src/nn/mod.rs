//! Dense regressor, its optimizer and training loop, and the model file format.

mod adam;
mod dataset;
mod io;
mod loss;
mod network;
mod train;

pub use adam::{learning_rate, Adam};
pub use dataset::Dataset;
pub use io::{load, save, from_text, to_text, MODEL_VERSION};
pub use loss::mape_loss;
pub use network::{
    normalize_fit, Activation, BatchNorm, ForwardCache, Gradients, Layer, LayerGradients, LayerSpec, Mode,
    NetworkModel, Normalization, BN_EPS, DEFAULT_BN_MOMENTUM,
};
pub use train::{evaluate_mape, train, EpochRecord, History, TrainConfig};
