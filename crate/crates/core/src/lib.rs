//! Span-selection semantic role labeling.
//!
//! Given a sentence and a predicate position, every span `(i, j)` is scored
//! for every role label. Training maximizes, for each label, the
//! probability of its gold span (or the predicate's own span when the label
//! is absent) under a softmax over all spans. Decoding picks spans greedily
//! under non-overlap and one-per-core-label constraints.

pub mod analyze;
pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod decode;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod init;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod spanscore;
pub mod tensor;
pub mod train;

pub use corpus::{InstanceKey, LabeledSpan, PredicateInstance};
pub use decode::CoreLabelSet;
pub use error::{Error, Result};
pub use model::{DecodeMode, ModelDims, SrlModel};
pub use spanscore::ScoreMatrix;
pub use tensor::Tensor;
