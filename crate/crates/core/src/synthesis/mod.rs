//! Bidirectional-similarity synthesis: EM retargeting, hole completion,
//! reshuffling and local structural scaling under user constraints.

mod bds;
mod constraints;
mod em;
mod grid;
mod model;
mod progress;
mod tools;
mod vote;

pub use bds::{bds_distance, score_fields, BdsMode, BdsScore};
pub use constraints::{
    rasterize_segment, segment_distance, Annotations, ConstraintSet, HardRegion, LineKind, ModelConstraint,
    MODEL_WEIGHT_BOOST,
};
pub use em::{em_optimize, em_optimize_with, EmMode, EmOutput, EmSchedule, LevelTrace};
pub use grid::{Grid, LabelMap, Mask};
pub use model::{
    fit_and_project_model, least_squares_line, Correspondence, FittedModel, Line, ModelFit, ModelSpec, Point,
    RansacParams,
};
pub use progress::{with_progress, Progress};
pub use tools::{
    check_completion, complete, complete_with, idw_fill, local_scale, reshuffle, retarget, retarget_with,
    scale_about_center, InitMode,
};
pub use vote::vote_and_average;

#[cfg(test)]
mod tests;
