//! Collection-scale matching. Every image of a collection keeps one packed
//! 64-bit link per patch to its best match anywhere else in the collection.
//! Links live on disk and are improved by relaxing working sets of images
//! that fit in memory.

mod entry;
mod model;
mod relax;
mod store;
mod web;

pub use entry::{
    is_sentinel, pack_web_entry, rank, unpack_web_entry, Quantizer, WebEntry, MAX_COORD, MAX_DIST, MAX_IMAGE, SENTINEL,
};
pub use model::{coincidence_probability, expected_sets_before_cooccurrence, simulate_sets_before_cooccurrence};
pub use relax::{
    relax, select_working_set, BinCache, LoadedImage, LoadedSet, Policy, RelaxOps, RelaxStats, WorkingSet,
};
pub use store::{
    field_path, load_collection_image, merge_save, read_field, write_field, Manifest, ManifestEntry, WebNnf,
    MANIFEST_FILE, MAX_SIDE, WEB_MAGIC,
};
pub use web::{build_web, field_mean, query_web, BuildReport, QueryParams, RoundTrace, Web, WebParams};
