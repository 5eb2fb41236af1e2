use super::field::{MatchSpace, Nnf, NnfEntry, SsdSpace};
use crate::error::Result;
use crate::image::ImageBuffer;
use crate::patch::{PatchGeometry, Pos};

/// Exhaustive best match for one source coordinate; ties go to the first
/// target in raster order.
pub fn exact_match(space: &(impl MatchSpace + ?Sized), z: Pos) -> Option<NnfEntry> {
    let mut best: Option<NnfEntry> = None;
    for t in space.target_rect().iter() {
        if !space.allowed(z, t) {
            continue;
        }
        let bound = best.map_or(f64::INFINITY, |b| b.dist);
        let d = space.distance(z, t, bound);
        if d < bound {
            best = Some(NnfEntry { target: t, dist: d });
        }
    }
    best
}

/// Exact nearest-neighbor field by full scan, O(m·M) distance evaluations.
pub fn brute_force_field(space: &(impl MatchSpace + ?Sized)) -> Result<Nnf> {
    let src = space.source_rect();
    let entries = src
        .iter()
        .map(|z| exact_match(space, z).ok_or_else(|| crate::Error::param(format!("no allowed target for {z}"))))
        .collect::<Result<Vec<_>>>()?;
    Nnf::from_entries(src, space.target_rect(), entries, 0)
}

pub fn brute_force_nnf(a: &ImageBuffer, b: &ImageBuffer, geom: &PatchGeometry) -> Result<Nnf> {
    brute_force_field(&SsdSpace::new(a, b, *geom)?)
}
