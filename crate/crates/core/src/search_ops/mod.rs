//! Extra search operators for k-NN fields: enrichment through the field's
//! own composition and inverse, and random proposals from PCA bins.

mod binning;
mod enrichment;

pub use binning::{bin_candidate, binning_pass, build_bin_index, BinIndex, BinParams};
pub use enrichment::{forward_enrichment, inverse_enrichment, inverse_lists};
