//! Image analysis on top of k-NN and generalized fields: non-local means
//! denoising, copy-move detection, lattice detection, template detection
//! and a dense gradient descriptor.

mod denoise;
mod descriptor;
mod detect;
mod forgery;
mod lattice;

pub use denoise::{nlm_denoise, DenoiseParams};
pub use descriptor::{dense_descriptor, BINS, CELLS};
pub use detect::{detect_object, DetectParams, Detection};
pub use forgery::{detect_copy_move, forgery_field, knn_sets_agree, ForgeryParams};
pub use lattice::{
    detect_lattice, normalize_patch_with, normalized_patches, reduce_basis, Center, LatticeParams, LatticeResult,
};

#[cfg(test)]
mod tests;
