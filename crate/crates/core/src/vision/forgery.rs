use serde::{Deserialize, Serialize};

use crate::annf::{Filtered, NnfEntry, SearchParams, SsdSpace};
use crate::error::{Error, Result};
use crate::gpm::{compute_knn_in, KnnField};
use crate::image::ImageBuffer;
use crate::patch::{PatchGeometry, Pos};
use crate::synthesis::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgeryParams {
    pub k: usize,
    /// Offset agreement `T` in pixels (Chebyshev).
    pub offset_agreement: i32,
    /// Largest patch distance, per sample, for a neighbor to count.
    pub max_patch_dist: f64,
    /// Smallest reported component `C`, in patch centers.
    pub min_region: usize,
    /// Neighbors closer than this (Chebyshev) are ignored; `None` uses the
    /// patch size.
    pub self_exclusion: Option<i32>,
    pub search: SearchParams,
    pub seed: u64,
}

impl Default for ForgeryParams {
    fn default() -> Self {
        ForgeryParams {
            k: 16,
            offset_agreement: 1,
            max_patch_dist: 1e-3,
            min_region: 200,
            self_exclusion: None,
            search: SearchParams {
                iterations: 6,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

impl ForgeryParams {
    pub fn validate(&self) -> Result<()> {
        if self.offset_agreement <= 0 {
            return Err(Error::param("offset agreement must be positive"));
        }
        if self.min_region == 0 {
            return Err(Error::param("minimum region must be at least 1"));
        }
        if !(self.max_patch_dist > 0.0) {
            return Err(Error::param("maximum patch distance must be positive"));
        }
        Ok(())
    }
}

/// Whether the close neighbors of `a` and of `b = a + delta` agree: each
/// one has a partner in the other set within `t` after shifting by `delta`.
/// Both sets must be non-empty.
pub fn knn_sets_agree(a: &[NnfEntry], b: &[NnfEntry], delta: Pos, t: i32, max_dist: f64) -> bool {
    let close = |h: &[NnfEntry]| -> Vec<Pos> { h.iter().filter(|e| e.dist <= max_dist).map(|e| e.target).collect() };
    let (ca, cb) = (close(a), close(b));
    if ca.is_empty() || cb.is_empty() {
        return false;
    }
    let covered =
        |from: &[Pos], to: &[Pos], d: Pos| from.iter().all(|&p| to.iter().any(|&q| q.chebyshev(p.add(d)) <= t));
    covered(&ca, &cb, delta) && covered(&cb, &ca, Pos::new(-delta.x, -delta.y))
}

/// Self k-NN field used by the detector, with near-self matches excluded.
pub fn forgery_field(img: &ImageBuffer, geom: &PatchGeometry, params: &ForgeryParams) -> Result<KnnField> {
    params.validate()?;
    let r = params.self_exclusion.unwrap_or(geom.size() as i32);
    let space = Filtered {
        inner: SsdSpace::new(img, img, *geom)?,
        filter: move |a: Pos, b: Pos| a.chebyshev(b) >= r,
    };
    compute_knn_in(&space, params.k, &params.search, params.seed)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Copy-move detection: connected components of the graph whose edges join
/// 4-adjacent patch centers with agreeing neighbor sets. Components of at
/// least `min_region` centers are returned as pixel masks covering their
/// patches; source and destination of a copy come out as separate masks.
pub fn detect_copy_move(img: &ImageBuffer, geom: &PatchGeometry, params: &ForgeryParams) -> Result<Vec<Mask>> {
    let field = forgery_field(img, geom, params)?;
    let rect = field.source_rect();
    let n = rect.area();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut has_edge = vec![false; n];
    let max_dist = params.max_patch_dist * geom.samples(img.channels()) as f64;
    for z in rect.iter() {
        for d in [Pos::new(1, 0), Pos::new(0, 1)] {
            let w = z.add(d);
            if !rect.contains(w) {
                continue;
            }
            if knn_sets_agree(field.heap(z), field.heap(w), d, params.offset_agreement, max_dist) {
                let (i, j) = (rect.index(z), rect.index(w));
                has_edge[i] = true;
                has_edge[j] = true;
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut comps: std::collections::BTreeMap<usize, Vec<Pos>> = Default::default();
    for i in 0..n {
        if has_edge[i] {
            let r = find(&mut parent, i);
            comps.entry(r).or_default().push(rect.pos(i));
        }
    }
    let h = geom.half();
    let mut out = Vec::new();
    for members in comps.into_values() {
        if members.len() < params.min_region {
            continue;
        }
        let mut m = Mask::filled(img.width(), img.height(), false);
        for z in members {
            for dy in -h..=h {
                for dx in -h..=h {
                    m.set((z.x + dx) as usize, (z.y + dy) as usize, true);
                }
            }
        }
        out.push(m);
    }
    Ok(out)
}
