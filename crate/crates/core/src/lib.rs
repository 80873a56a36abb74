//! Coarse-to-fine multi weld seam extraction from RGB-D point clouds.

pub mod crop;
pub mod edges;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod path;
pub mod pipeline;
pub mod preprocess;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
