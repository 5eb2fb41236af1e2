use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::entry::{is_sentinel, pack_web_entry, rank, unpack_web_entry, Quantizer};
use super::store::WebNnf;
use crate::annf::{search_point, ScanOrder};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::{extract_patch, ssd, PatchGeometry, Pos, Rect};
use crate::rng;
use crate::search_ops::{bin_candidate, build_bin_index, BinIndex, BinParams};

/// Fractions of a new working set that are kept from the previous set,
/// drawn fresh, and chosen by the kept images' links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub keep: f64,
    pub fresh: f64,
    pub enrich: f64,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            keep: 1.0 / 3.0,
            fresh: 1.0 / 3.0,
            enrich: 1.0 / 3.0,
        }
    }
}

impl Policy {
    pub const UNIFORM: Policy = Policy {
        keep: 0.0,
        fresh: 1.0,
        enrich: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingSet {
    /// Collection indices, pinned images first.
    pub members: Vec<usize>,
    pub capacity: usize,
}

/// Chooses the next working set. `pinned` images are always members.
/// `links(i)` returns the stored field of a previously loaded image, used
/// to rank the enrichment slots by how often kept images point into them.
pub fn select_working_set<'a>(
    n_images: usize,
    capacity: usize,
    previous: Option<&WorkingSet>,
    pinned: &[usize],
    links: &dyn Fn(usize) -> Option<&'a WebNnf>,
    policy: &Policy,
    rng: &mut impl Rng,
) -> Result<WorkingSet> {
    if capacity < 2 {
        return Err(Error::param("working-set capacity must be at least 2"));
    }
    let total = n_images.max(pinned.iter().map(|&p| p + 1).max().unwrap_or(0));
    let cap = capacity.min(total);
    let mut members: Vec<usize> = Vec::with_capacity(cap);
    for &p in pinned {
        if !members.contains(&p) {
            members.push(p);
        }
    }
    if cap >= n_images + members.iter().filter(|&&m| m >= n_images).count() {
        for i in 0..n_images {
            if !members.contains(&i) {
                members.push(i);
            }
        }
        return Ok(WorkingSet { members, capacity });
    }
    let n_keep = (policy.keep * cap as f64).round() as usize;
    let n_fresh = (policy.fresh * cap as f64).round() as usize;

    let mut kept = Vec::new();
    if let Some(prev) = previous {
        let mut pool: Vec<usize> = prev
            .members
            .iter()
            .copied()
            .filter(|m| !members.contains(m) && *m < n_images)
            .collect();
        pool.shuffle(rng);
        for m in pool.into_iter().take(n_keep.min(cap - members.len())) {
            members.push(m);
            kept.push(m);
        }
    }

    let mut rest: Vec<usize> = (0..n_images).filter(|i| !members.contains(i)).collect();
    rest.shuffle(rng);
    let take = n_fresh.min(cap - members.len()).min(rest.len());
    members.extend(rest.drain(..take));

    if members.len() < cap {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &k in kept.iter().chain(pinned) {
            if let Some(f) = links(k) {
                for &w in &f.entries {
                    if !is_sentinel(w) {
                        *counts.entry(unpack_web_entry(w).image as usize).or_default() += 1;
                    }
                }
            }
        }
        let mut ranked: Vec<(usize, usize)> = counts
            .into_iter()
            .filter(|(i, _)| *i < n_images && !members.contains(i))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (i, _) in ranked.into_iter().take(cap - members.len()) {
            members.push(i);
        }
    }
    if members.len() < cap {
        rest.retain(|i| !members.contains(i));
        let take = (cap - members.len()).min(rest.len());
        members.extend(rest.drain(..take));
    }
    Ok(WorkingSet { members, capacity })
}

/// Which proposal operators a relaxation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxOps {
    pub propagation: bool,
    pub random_search: bool,
    pub binning: bool,
    pub enrichment: bool,
    pub uniform: bool,
}

impl Default for RelaxOps {
    fn default() -> Self {
        RelaxOps {
            propagation: true,
            random_search: true,
            binning: true,
            enrichment: true,
            uniform: true,
        }
    }
}

impl RelaxOps {
    pub const UNIFORM_ONLY: RelaxOps = RelaxOps {
        propagation: false,
        random_search: false,
        binning: false,
        enrichment: false,
        uniform: true,
    };
}

/// Bin indexes by collection index, shared across rounds and workers. An
/// index depends only on its image, so it is built once per build.
#[derive(Default)]
pub struct BinCache {
    map: Mutex<HashMap<usize, Option<Arc<BinIndex>>>>,
}

impl BinCache {
    fn get_or_build(&self, id: usize, build: impl FnOnce() -> Option<Arc<BinIndex>>) -> Option<Arc<BinIndex>> {
        if let Some(b) = self.map.lock().expect("bin cache poisoned").get(&id) {
            return b.clone();
        }
        let b = build();
        self.map.lock().expect("bin cache poisoned").insert(id, b.clone());
        b
    }
}

/// Images and fields resident in memory for one relaxation.
pub struct LoadedSet {
    geom: PatchGeometry,
    quant: Quantizer,
    ids: Vec<usize>,
    images: Vec<ImageBuffer>,
    rects: Vec<Rect>,
    fields: Vec<WebNnf>,
    writable: Vec<bool>,
    bins: Vec<Option<Arc<BinIndex>>>,
    slot: HashMap<usize, usize>,
}

pub struct LoadedImage {
    pub id: usize,
    pub image: ImageBuffer,
    pub field: WebNnf,
    pub writable: bool,
}

impl LoadedSet {
    /// Bin indexes are built when `bins` is given; images with too few
    /// patches for the projection go without one.
    pub fn new(geom: PatchGeometry, members: Vec<LoadedImage>, bins: Option<&BinParams>) -> Result<Self> {
        Self::new_cached(geom, members, bins, None)
    }

    /// Like [`LoadedSet::new`], reusing and filling `cache` for bin indexes.
    pub fn new_cached(
        geom: PatchGeometry,
        members: Vec<LoadedImage>,
        bins: Option<&BinParams>,
        cache: Option<&BinCache>,
    ) -> Result<Self> {
        let channels = members.first().map(|m| m.image.channels()).unwrap_or(3);
        let mut set = LoadedSet {
            geom,
            quant: Quantizer::for_patch(geom.size(), channels),
            ids: Vec::new(),
            images: Vec::new(),
            rects: Vec::new(),
            fields: Vec::new(),
            writable: Vec::new(),
            bins: Vec::new(),
            slot: HashMap::new(),
        };
        for m in members {
            if m.image.channels() != channels {
                return Err(Error::ChannelCount {
                    expected: channels,
                    found: m.image.channels(),
                });
            }
            let rect = geom.require_fits(&m.image)?;
            if m.field.rect() != rect || m.field.patch_size as usize != geom.size() {
                return Err(Error::DimensionMismatch(format!(
                    "field of image {} does not fit it",
                    m.id
                )));
            }
            if set.slot.insert(m.id, set.ids.len()).is_some() {
                return Err(Error::param(format!("image {} loaded twice", m.id)));
            }
            let index = match (bins, cache) {
                (None, _) => None,
                (Some(p), None) => build_bin_index(&m.image, &geom, p).ok().map(Arc::new),
                (Some(p), Some(c)) => c.get_or_build(m.id, || build_bin_index(&m.image, &geom, p).ok().map(Arc::new)),
            };
            set.bins.push(index);
            set.ids.push(m.id);
            set.rects.push(rect);
            set.images.push(m.image);
            set.fields.push(m.field);
            set.writable.push(m.writable);
        }
        Ok(set)
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }
    pub fn field(&self, id: usize) -> Option<&WebNnf> {
        self.slot.get(&id).map(|&s| &self.fields[s])
    }
    pub fn quantizer(&self) -> Quantizer {
        self.quant
    }
    /// Fields with their collection indices, consuming the set.
    pub fn into_fields(self) -> Vec<(usize, WebNnf, bool)> {
        self.ids
            .into_iter()
            .zip(self.fields)
            .zip(self.writable)
            .map(|((i, f), w)| (i, f, w))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxStats {
    pub evaluated: usize,
    pub improved: usize,
    pub mirrored: usize,
}

/// `sweeps` alternating scan/reverse-scan passes over every coordinate of
/// every writable image. Each coordinate evaluates the deduplicated
/// proposals of the enabled operators and keeps a proposal iff its
/// quantized distance is strictly smaller; every improvement is mirrored
/// into the target image's field when that is writable and improves too.
pub fn relax(set: &mut LoadedSet, sweeps: usize, ops: &RelaxOps, alpha: f64, seed: u64) -> RelaxStats {
    let mut stats = RelaxStats::default();
    let n = set.ids.len();
    let half = set.geom.half();
    let step = set.quant.d_max / super::entry::MAX_DIST as f64;
    let mut cands: Vec<(usize, Pos)> = Vec::new();
    for sweep in 0..sweeps {
        let order = ScanOrder::for_sweep(sweep as u64);
        for i in 0..n {
            if !set.writable[i] {
                continue;
            }
            let rect = set.rects[i];
            let coords: Box<dyn Iterator<Item = Pos>> = match order {
                ScanOrder::Forward => Box::new(rect.iter()),
                ScanOrder::Backward => Box::new((0..rect.area()).rev().map(move |k| rect.pos(k))),
            };
            for z in coords {
                let idx = rect.index(z);
                let mut rng = rng::stream(seed, z.x, z.y, ((sweep as u64) << 17) | set.ids[i] as u64);
                let cur = set.fields[i].entries[idx];
                let current = (!is_sentinel(cur)).then(|| unpack_web_entry(cur)).and_then(|e| {
                    set.slot
                        .get(&(e.image as usize))
                        .map(|&s| (s, Pos::new(e.x as i32, e.y as i32)))
                });
                cands.clear();
                let push = |c: (usize, Pos), cands: &mut Vec<(usize, Pos)>| {
                    if c.0 != i && Some(c) != current && !cands.contains(&c) {
                        cands.push(c);
                    }
                };
                if ops.propagation {
                    for d in order.deltas() {
                        let nb = z.sub(d);
                        if !rect.contains(nb) {
                            continue;
                        }
                        let w = set.fields[i].entries[rect.index(nb)];
                        if is_sentinel(w) {
                            continue;
                        }
                        let e = unpack_web_entry(w);
                        if let Some(&j) = set.slot.get(&(e.image as usize)) {
                            let t = set.rects[j].clamp(Pos::new(e.x as i32, e.y as i32).add(d));
                            push((j, t), &mut cands);
                        }
                    }
                }
                if let Some((j, t0)) = current {
                    if ops.random_search {
                        let img = &set.images[j];
                        let mut r = img.width().max(img.height()) as f64;
                        while r >= 1.0 {
                            let rr = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                            push((j, set.rects[j].clamp(search_point(t0, r, rr))), &mut cands);
                            r *= alpha;
                        }
                    }
                    if ops.enrichment {
                        let w = set.fields[j].entries[set.rects[j].index(t0)];
                        if !is_sentinel(w) {
                            let e = unpack_web_entry(w);
                            if let Some(&k) = set.slot.get(&(e.image as usize)) {
                                push((k, Pos::new(e.x as i32, e.y as i32)), &mut cands);
                            }
                        }
                    }
                }
                if n > 1 && ops.binning {
                    let j = other_slot(&mut rng, n, i);
                    if let Some(b) = &set.bins[j] {
                        let q = extract_patch(&set.images[i], z, &set.geom);
                        if let Ok(t) = bin_candidate(b, &q, &mut rng) {
                            push((j, t), &mut cands);
                        }
                    }
                }
                if n > 1 && ops.uniform {
                    let j = other_slot(&mut rng, n, i);
                    let r = set.rects[j];
                    push(
                        (j, Pos::new(rng.gen_range(r.x0..r.x1), rng.gen_range(r.y0..r.y1))),
                        &mut cands,
                    );
                }

                let mut best = cur;
                for &(j, t) in &cands {
                    let bound = if is_sentinel(best) {
                        f64::INFINITY
                    } else {
                        set.quant.dequantize(rank(best) as u32) + step
                    };
                    let d = ssd(&set.images[i], z, &set.images[j], t, half, bound);
                    stats.evaluated += 1;
                    let q = set.quant.quantize(d);
                    if (q as u64) < rank(best) {
                        best = pack_web_entry(t.x as u32, t.y as u32, set.ids[j] as u32, q as u64).expect("in range");
                        stats.improved += 1;
                        if set.writable[j] {
                            let tidx = set.rects[j].index(t);
                            if (q as u64) < rank(set.fields[j].entries[tidx]) {
                                set.fields[j].entries[tidx] =
                                    pack_web_entry(z.x as u32, z.y as u32, set.ids[i] as u32, q as u64)
                                        .expect("in range");
                                stats.mirrored += 1;
                            }
                        }
                    }
                }
                set.fields[i].entries[idx] = best;
            }
        }
    }
    stats
}

fn other_slot(rng: &mut impl Rng, n: usize, i: usize) -> usize {
    let j = rng.gen_range(0..n - 1);
    if j >= i {
        j + 1
    } else {
        j
    }
}
