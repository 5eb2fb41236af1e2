//! Field statistics: offset coherence between neighbors and the spatial
//! distribution of strictly better matches.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::field::{MatchSpace, Nnf};
use crate::error::{Error, Result};
use crate::patch::Pos;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts[i]` holds neighbor pairs whose offset difference `d`
    /// satisfies `i - 1 < d <= i` (bin 0 is exact coherence); the last bin
    /// absorbs everything larger.
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Histogram of `‖offset(x,y) − offset(x+1,y)‖` and `‖offset(x,y) − offset(x,y+1)‖`.
pub fn coherence_histogram(f: &Nnf, bins: usize) -> Histogram {
    let bins = bins.max(2);
    let mut counts = vec![0u64; bins];
    let src = f.source_rect();
    let mut add = |a: Pos, b: Pos| {
        let d = f.offset(a).sub(f.offset(b)).norm();
        let bin = (d.ceil() as usize).min(bins - 1);
        counts[bin] += 1;
    };
    for z in src.iter() {
        if z.x + 1 < src.x1 {
            add(z, z.offset(1, 0));
        }
        if z.y + 1 < src.y1 {
            add(z, z.offset(0, 1));
        }
    }
    Histogram { counts }
}

/// Centered 2-D histogram of where strictly better targets lie relative to
/// the current target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    /// Odd side length of the grid.
    pub bins: usize,
    /// Offsets in `[-extent, extent]` (pixels) map onto the grid.
    pub extent: f64,
    pub counts: Vec<u64>,
    /// Coordinates whose distance fell in the band.
    pub sampled: usize,
}

impl Histogram2d {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn at(&self, bx: usize, by: usize) -> u64 {
        self.counts[by * self.bins + bx]
    }

    /// Mass in the centered `size x size` window.
    pub fn center_mass(&self, size: usize) -> u64 {
        let c = self.bins / 2;
        let r = size / 2;
        let mut s = 0;
        for by in c.saturating_sub(r)..=(c + r).min(self.bins - 1) {
            for bx in c.saturating_sub(r)..=(c + r).min(self.bins - 1) {
                s += self.at(bx, by);
            }
        }
        s
    }

    pub fn median_bin(&self) -> u64 {
        let mut v = self.counts.clone();
        v.sort_unstable();
        v[v.len() / 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementParams {
    pub band: (f64, f64),
    pub bins: usize,
    /// Half-width of the offset window; `None` uses a quarter of the larger
    /// target dimension.
    pub extent: Option<f64>,
    /// Maximum number of in-band coordinates scanned exhaustively.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for ImprovementParams {
    fn default() -> Self {
        ImprovementParams {
            band: (0.0, f64::INFINITY),
            bins: 15,
            extent: None,
            max_samples: 200,
            seed: 0,
        }
    }
}

/// For sampled coordinates whose distance lies in `params.band`, scans the
/// whole target and accumulates the position of every strictly better target
/// relative to the current one.
pub fn improvement_histogram(
    space: &(impl MatchSpace + ?Sized),
    f: &Nnf,
    params: &ImprovementParams,
) -> Result<Histogram2d> {
    let (lo, hi) = params.band;
    if !(lo <= hi) {
        return Err(Error::param("empty distance band"));
    }
    let bins = params.bins | 1;
    let extent = params.extent.unwrap_or_else(|| {
        let (w, h) = space.target_dims();
        w.max(h) as f64 / 4.0
    });
    let mut in_band: Vec<Pos> = f
        .iter()
        .filter(|(_, e)| e.dist >= lo && e.dist <= hi)
        .map(|(z, _)| z)
        .collect();
    if in_band.is_empty() {
        return Err(Error::param(format!("no coordinate has a distance in [{lo}, {hi}]")));
    }
    let mut rng = rand::rngs::SmallRng::seed_from_u64(params.seed);
    if in_band.len() > params.max_samples {
        // partial Fisher-Yates
        for i in 0..params.max_samples {
            let j = rng.gen_range(i..in_band.len());
            in_band.swap(i, j);
        }
        in_band.truncate(params.max_samples);
    }
    let mut counts = vec![0u64; bins * bins];
    let cell = 2.0 * extent / bins as f64;
    let half = (bins / 2) as i64;
    for &z in &in_band {
        let cur = *f.get(z);
        for t in space.target_rect().iter() {
            if !space.allowed(z, t) {
                continue;
            }
            let d = space.distance(z, t, cur.dist);
            if d < cur.dist {
                let rel = t.sub(cur.target);
                let bx = (rel.x as f64 / cell).round() as i64 + half;
                let by = (rel.y as f64 / cell).round() as i64 + half;
                if (0..bins as i64).contains(&bx) && (0..bins as i64).contains(&by) {
                    counts[by as usize * bins + bx as usize] += 1;
                }
            }
        }
    }
    Ok(Histogram2d {
        bins,
        extent,
        counts,
        sampled: in_band.len(),
    })
}
