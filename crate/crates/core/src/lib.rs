//! Polyp counting by re-associating per-polyp tracklets of colonoscopy
//! videos: tracklet construction, tracklet embeddings, similarity matrices,
//! four clustering algorithms, FR/FPR evaluation with a validation sweep, and
//! positive-pair samplers for embedding training.

pub mod annotations;
pub mod clustering;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod sampling;
pub mod similarity;

pub use error::{Error, Result};
