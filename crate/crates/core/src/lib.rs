//! A from-scratch 1D convolutional network for tabular heart-disease
//! classification, plus the full pipeline around it: data ingestion,
//! training, evaluation, baseline comparison, and a command-line interface.
//!
//! The engine is framework-free: dense `f64` tensors, hand-derived backward
//! passes for a fixed layer set, and a seeded Adam training loop that is
//! bit-reproducible per platform and build.

pub mod baselines;
pub mod cli;
pub mod ingest;
pub mod metrics;
pub mod model_file;
pub mod nn;
pub mod tensor;
pub mod trainer;

pub use ingest::{EncodedDataset, EncodingMap, PreparedData, SplitIndices};
pub use metrics::{ConfusionMatrix, MetricsReport, RocCurve};
pub use nn::{Layer, Mode, NetInput, Network};
pub use tensor::{IndexMatrix, Tensor};
pub use trainer::{AdamState, EpochLog, Features, TrainConfig};
