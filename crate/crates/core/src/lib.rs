//! Semi-supervised scene-flow pseudo-label generation on point clouds.
//!
//! Sparse ground-truth flow labels are propagated to every point of a frame
//! pair: coarse inverse-distance upsampling, a two-frame graph feature
//! encoder with a spatial-memory warp, and a learned correlation matrix that
//! blends labeled flows per unlabeled point. Training is self-supervised
//! through a chamfer plus weighted-smoothness objective, with a metrics and
//! ablation harness and a synthetic rigid-motion scene generator.

pub mod config;
pub mod correlation;
pub mod diffcore;
pub mod encoder;
pub mod error;
pub mod flowinit;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod objectives;
pub mod pipeline;
pub mod rngstream;
pub mod sceneio;
pub mod synth;

pub use error::{Error, Result};

// The tape allocates and frees large tensors every training step; the system
// allocator spends more time in page faults than we do in matmuls.
#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;
