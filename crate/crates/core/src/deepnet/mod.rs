//! Dual-window ResNet + MLP sleep stager, used as a deep feature extractor.
//!
//! Inputs are 1 Hz heart and breathing rate, z-scored with corpus statistics
//! and zeroed where the quality flag is 0. For each epoch a 5-minute window at
//! 1 Hz and a 50-minute window block-averaged to 0.1 Hz are centred on the
//! epoch. The network is trained on 5-class labels with Adam and early
//! stopping; afterwards the 32-d MLP output serves as features for the forest.
//!
//! Gradients are computed by a hand-written reverse pass (see [`layers`]).

pub mod layers;
mod model;
mod train;
mod weights;
mod windows;

pub use model::{softmax_rows, Batch, ForwardCache, Mode, ModelParams, NetConfig, TensorSpec, INPUT_CHANNELS};
pub use train::{
    batch_from, extract_deep_features, fit, infer, train, Adam, EarlyStopping, EpochLog, StopDecision, TrainConfig,
    TrainOutput,
};
pub use weights::{SavedModel, TensorEntry, WeightsManifest, BLOB_FILE, MANIFEST_FILE};
pub use windows::{
    make_windows, make_windows_sized, prepare_channels, sqi_zero_fill, NormStats, WindowPair, LONG_DECIMATION,
    LONG_SPAN, SHORT_LEN,
};

pub const DEEP_FEATURE_DIM: usize = 32;

/// Column names of the deep feature block.
pub fn deep_feature_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("deep_{i}")).collect()
}
