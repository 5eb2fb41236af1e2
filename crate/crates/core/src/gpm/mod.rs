//! Generalized matching: rotation/scale fields, arbitrary descriptors and
//! k-nearest-neighbor fields.

mod descriptor;
mod generalized;
mod knn;

pub use descriptor::{match_descriptors, ssd_descriptor, DescriptorField, DescriptorSpace};
pub use generalized::{
    compute_gnnf, footprint_radius, init_gnnf, iterate_gnnf, jacobian_propagate, sample_transformed_patch, Filter,
    GeneralizedNnf, GnnfEntry, GnnfParams, GnnfSpace, PatchMetric, Similarity,
};
pub(crate) use knn::contains_target;
pub use knn::{
    compute_knn, compute_knn_in, heap_offer, init_knn_in, iterate_knn, read_knn, sorted_heap, write_knn, KnnDump,
    KnnField, KNN_MAGIC,
};

#[cfg(test)]
mod tests;
