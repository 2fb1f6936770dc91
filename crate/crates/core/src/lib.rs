//! Class-specific object saliency from small convolutional classifiers.
//!
//! A classifier is trained on a synthetic corpus (optionally on masked
//! images, or on both with a doubled label space). Saliency maps come from
//! running floored gradient descent on the input image against a per-model
//! objectness cost; the maps are then pruned, normalized, smoothed, refined
//! into a segmentation, and scored with precision-recall curves and F-beta.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod layers;
pub mod mask;
pub mod models;
pub mod morphology;
pub mod network;
pub mod report;
pub mod rng;
pub mod saliency;
pub mod segment;
pub mod tensor;

pub use dataset::{generate, make_masked, Dataset, DatasetManifest, GenerationConfig, LabeledSample, Split};
pub use error::{Error, Result};
pub use layers::{softmax, Layer};
pub use mask::BinaryMask;
pub use models::{classify, train, TrainConfig, Variant};
pub use network::{Architecture, InferenceContext, LabelSpace, Network};
pub use saliency::{Objective, SaliencyConfig, SaliencyMap};
pub use tensor::Tensor;
