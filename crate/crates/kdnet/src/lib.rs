//! Deep feed-forward networks whose computation graph, parameter sharing,
//! and hierarchical representations are induced by balanced kd-trees over
//! point clouds.
//!
//! The crate covers the full pipeline at desk scale: dataset ingestion
//! (IDX rasters, OFF meshes) into normalized point clouds, balanced
//! kd-tree construction (deterministic or randomized split directions),
//! the bottom-up classifier with direction-conditioned shared affine
//! layers, an encoder-decoder variant with skip connections for per-point
//! part segmentation, descriptor extraction with triplet fine-tuning for
//! retrieval, and a training/evaluation harness with test-time
//! augmentation averaging.
//!
//! Data-parallel sections (per-sample gradients, evaluation, conversion)
//! run on rayon under the default `parallel` feature and fall back to
//! sequential execution without it; results are bit-identical either way
//! because reductions happen in index order.

pub mod bytes;
pub mod error;
pub mod kdtree;
pub mod pointcloud;
pub mod numerics;
pub(crate) mod par;

pub use error::{Error, Result};
pub use numerics::{Matrix, Param};
pub use par::configure_threads;
