use serde::{Deserialize, Serialize};

use crate::annf::{brute_force_field, compute_field, Nnf, SearchParams, SsdSpace};
use crate::error::Result;
use crate::image::{to_lab, ImageBuffer};
use crate::patch::PatchGeometry;

use super::grid::Grid;

/// Bidirectional similarity split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BdsScore {
    /// Mean over source patches of the distance to their best match in the target.
    pub complete: f64,
    /// Mean over target patches of the distance to their best match in the source.
    pub cohere: f64,
}

impl BdsScore {
    pub fn total(&self) -> f64 {
        self.complete + self.cohere
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BdsMode {
    /// Exhaustive argmin in both directions.
    Exact,
    /// Randomized fields with the given search parameters.
    Approx { params: SearchParams, seed: u64 },
}

/// Bidirectional patch distance between `s` and `t` using Lab SSD.
///
/// `weights` is a per-pixel importance map over `s`; each source patch is
/// weighted by the value at its center, in both terms.
pub fn bds_distance(
    s: &ImageBuffer,
    t: &ImageBuffer,
    geom: &PatchGeometry,
    weights: Option<&Grid<f32>>,
    mode: BdsMode,
) -> Result<BdsScore> {
    let sl = to_lab(&s.to_rgb())?;
    let tl = to_lab(&t.to_rgb())?;
    if let Some(w) = weights {
        w.require_dims(s.width(), s.height(), "weight map")?;
    }
    let st = SsdSpace::new(&sl, &tl, *geom)?;
    let ts = SsdSpace::new(&tl, &sl, *geom)?;
    let (f_st, f_ts) = match mode {
        BdsMode::Exact => (brute_force_field(&st)?, brute_force_field(&ts)?),
        BdsMode::Approx { params, seed } => (
            compute_field(&st, &params, seed)?,
            compute_field(&ts, &params, seed ^ 1)?,
        ),
    };
    Ok(score_fields(&f_st, &f_ts, weights))
}

/// Score from already computed S→T and T→S fields.
pub fn score_fields(s_to_t: &Nnf, t_to_s: &Nnf, weights: Option<&Grid<f32>>) -> BdsScore {
    let w = |p: crate::patch::Pos| weights.map_or(1.0, |g| g.get(p.x as usize, p.y as usize) as f64);
    let mean = |it: &mut dyn Iterator<Item = (f64, f64)>| {
        let (mut num, mut den) = (0.0, 0.0);
        for (wt, d) in it {
            num += wt * d;
            den += wt;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    BdsScore {
        complete: mean(&mut s_to_t.iter().map(|(p, e)| (w(p), e.dist))),
        cohere: mean(&mut t_to_s.iter().map(|(_, e)| (w(e.target), e.dist))),
    }
}
