//! The FTU segmentation pipeline: pixel-size and color domain adaptation,
//! augmentation and dataset composition, sliding-window ensemble inference
//! with flip TTA behind a pluggable predictor contract, mask
//! post-processing, and Dice-based evaluation.

pub mod augment;
pub mod color;
pub mod error;
pub mod eval;
pub mod infer;
pub mod post;
pub mod scale;

pub use error::{PipelineError, Result};
