//! Mining reliable oscillatory components from multichannel recordings.
//!
//! The pipeline has three stages: harvest spatial filters across a large
//! hyperparameter grid (supervised source-power comodulation with shrinkage
//! regularization), denoise the component set with decoding-performance and
//! artifact gates, then condense event-locked envelope dynamics into
//! homogeneous clusters with density-based clustering.

pub mod error;
pub mod signal;
pub mod spoc;
pub mod sweep;
pub mod artifact;
pub mod synth;
pub mod envelope;
pub mod cluster;
pub mod validate;
pub mod io;
pub mod pipeline;

pub use error::{Error, Result};
