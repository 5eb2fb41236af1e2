//! Translation nearest-neighbor fields: random initialization, propagation,
//! random search, the sweep loop and its exhaustive oracle.

mod convergence;
mod diagnostics;
mod exact;
mod field;
mod io;
mod search;

pub use convergence::{expected_convergence_iters, expected_iters_finite, hit_probability};
pub use diagnostics::{coherence_histogram, improvement_histogram, Histogram, Histogram2d, ImprovementParams};
pub use exact::{brute_force_field, brute_force_nnf, exact_match};
pub use field::{inset_dims, Filtered, MatchSpace, Nnf, NnfEntry, SearchParams, SsdSpace};
pub(crate) use io::{read_header, read_triple, write_header, write_triple};
pub use io::{read_nnf, write_nnf, NnfDump, NNF_MAGIC};
pub(crate) use search::INIT_STREAM;
pub use search::{
    compute_field, compute_nnf, init_random, init_random_in, init_upsample, init_upsample_in, iterate,
    propagation_candidates, random_search, search_point, search_radii, upsample_target, ScanOrder, SweepStats,
};
