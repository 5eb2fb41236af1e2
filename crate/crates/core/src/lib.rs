//! Dense approximate nearest-neighbor fields between image patches.
//!
//! The crate is organized around the randomized correspondence search
//! (random initialization, propagation of good matches to neighbors, and
//! random search at exponentially shrinking radii) and the tools built on
//! top of it:
//!
//! - [`annf`]: translation fields, the exhaustive oracle, convergence model
//!   and field statistics.
//! - [`gpm`]: rotation/scale fields, arbitrary descriptors and k-NN fields.
//! - [`search_ops`]: enrichment and PCA binning for k-NN fields.
//! - [`patchweb`]: collection-scale matching with packed on-disk fields.
//! - [`synthesis`]: bidirectional-similarity retargeting, completion and
//!   reshuffling with user constraints.
//! - [`vision`]: denoising, copy-move detection, lattice detection and
//!   template detection.
//! - [`bench`]: timing, oracle comparison and allocator-based memory
//!   accounting for the benchmark report.

pub mod annf;
pub mod bench;
pub mod error;
pub mod fixtures;
pub mod gpm;
pub mod image;
pub mod patch;
pub mod patchweb;
pub mod rng;
pub mod search_ops;
mod strips;
pub mod synthesis;
pub mod vision;

pub use error::{Error, Result};
pub use image::{ColorSpace, ImageBuffer};
pub use patch::{patch_distance, PatchGeometry, Pos, Rect};
