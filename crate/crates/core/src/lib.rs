//! Hierarchical multimodal convolutional sparse coding.

pub mod analysis;
pub mod container;
pub mod conv;
pub mod data;
pub mod error;
pub mod hierarchy;
pub mod lca;
pub mod learning;
pub mod tensor;

pub use conv::KernelStack;
pub use data::{Corpus, Sample};
pub use error::{DscError, DscResult};
pub use hierarchy::{Branch, DictionaryLayer, LayerGraph, NetworkInput, NetworkState};
pub use lca::{LayerState, LcaParams};
pub use learning::TrainSchedule;
pub use tensor::Tensor;
