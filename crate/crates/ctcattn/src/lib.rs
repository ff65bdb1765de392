//! Joint CTC/attention sequence transduction at desk scale.
//!
//! The crate trains small hierarchical CTC encoder-decoder models on
//! synthetic translation tasks and decodes them with mirrored
//! input-synchronous and output-synchronous joint beam searches. All
//! arithmetic is 64-bit and deterministic per seed, and every dynamic
//! program is backed by a brute-force enumeration oracle in [`oracle`].

pub mod autodiff;
pub mod cli;
pub mod ctc;
pub mod decode;
pub mod logmath;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod prefix;
pub mod train;

pub use autodiff::{Tape, Tensor};
pub use ctc::{PosteriorGrid, SeqKind, TokenSeq};
pub use decode::{DecodeConfig, DecodeMode, DecodeResult, Hypothesis};
pub use model::{EncodeResult, ModelConfig, ModelParams, TaskKind};
pub use train::{SyntheticTaskSpec, TaskName, TrainConfig};
