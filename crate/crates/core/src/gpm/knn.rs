//! k-nearest-neighbor fields. Each source coordinate keeps a bounded
//! max-heap of its `k` best distinct targets.

use std::io::{Read, Write};

use rand::Rng;

use crate::annf::{
    read_header, read_triple, write_header, write_triple, MatchSpace, Nnf, NnfEntry, ScanOrder, SearchParams, SsdSpace,
    SweepStats, INIT_STREAM,
};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::{PatchGeometry, Pos, Rect};
use crate::rng;
use crate::strips::run_strips;

pub const KNN_MAGIC: &[u8; 4] = b"KNNF";

#[derive(Debug, Clone, PartialEq)]
pub struct KnnField {
    k: usize,
    source: Rect,
    target: Rect,
    /// `k` heap-ordered entries per source coordinate, raster order.
    entries: Vec<NnfEntry>,
    seed: u64,
    sweeps: u64,
    self_matching: bool,
}

impl KnnField {
    /// Builds a field from per-coordinate lists of exactly `k` distinct
    /// targets, in any order.
    pub fn from_lists(
        source: Rect,
        target: Rect,
        k: usize,
        lists: Vec<Vec<NnfEntry>>,
        self_matching: bool,
    ) -> Result<Self> {
        if lists.len() != source.area() {
            return Err(Error::DimensionMismatch(format!(
                "{} lists for {} coordinates",
                lists.len(),
                source.area()
            )));
        }
        let mut entries = Vec::with_capacity(k * lists.len());
        for (i, mut l) in lists.into_iter().enumerate() {
            if l.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "list {i} has {} entries, expected {k}",
                    l.len()
                )));
            }
            if l.iter().any(|e| !target.contains(e.target)) {
                return Err(Error::OutsideValidRect(source.pos(i)));
            }
            make_heap(&mut l);
            entries.extend(l);
        }
        let f = KnnField {
            k,
            source,
            target,
            entries,
            seed: 0,
            sweeps: 0,
            self_matching,
        };
        if (0..f.len()).any(|i| has_duplicates(f.heap_at(i))) {
            return Err(Error::param("duplicate targets in a neighbor list"));
        }
        Ok(f)
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn source_rect(&self) -> Rect {
        self.source
    }
    pub fn target_rect(&self) -> Rect {
        self.target
    }
    pub fn sweeps_done(&self) -> u64 {
        self.sweeps
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    /// True when the field matches an image to itself.
    pub fn is_self_matching(&self) -> bool {
        self.self_matching
    }
    /// Number of source coordinates.
    pub fn len(&self) -> usize {
        self.entries.len() / self.k
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Heap of coordinate `p` in heap order; element 0 is the worst.
    pub fn heap(&self, p: Pos) -> &[NnfEntry] {
        self.heap_at(self.source.index(p))
    }
    pub(crate) fn heap_at(&self, i: usize) -> &[NnfEntry] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }
    pub(crate) fn heap_at_mut(&mut self, i: usize) -> &mut [NnfEntry] {
        &mut self.entries[i * self.k..(i + 1) * self.k]
    }

    /// Neighbors of `p`, best first.
    pub fn sorted(&self, p: Pos) -> Vec<NnfEntry> {
        sorted_heap(self.heap(p))
    }

    /// Largest stored distance of `p`.
    pub fn root(&self, p: Pos) -> &NnfEntry {
        &self.heap(p)[0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pos, &[NnfEntry])> + '_ {
        self.entries
            .chunks(self.k)
            .enumerate()
            .map(|(i, h)| (self.source.pos(i), h))
    }

    /// Mean over coordinates of the mean heap distance.
    pub fn mean_distance(&self) -> f64 {
        self.entries.iter().map(|e| e.dist).sum::<f64>() / self.entries.len().max(1) as f64
    }

    /// Best-neighbor translation field.
    pub fn best(&self) -> Nnf {
        let entries = self
            .entries
            .chunks(self.k)
            .map(|h| *h.iter().min_by(|a, b| a.dist.total_cmp(&b.dist)).expect("k >= 1"))
            .collect();
        Nnf::from_entries(self.source, self.target, entries, self.seed).expect("consistent rects")
    }

    /// Offers a candidate to `p`'s heap; see [`heap_offer`].
    pub fn offer(&mut self, p: Pos, cand: NnfEntry) -> bool {
        let i = self.source.index(p);
        heap_offer(self.heap_at_mut(i), cand)
    }

    pub fn heap_bytes(&self) -> usize {
        self.entries.capacity() * std::mem::size_of::<NnfEntry>()
    }
}

/// Entries sorted by ascending distance, ties by target.
pub fn sorted_heap(h: &[NnfEntry]) -> Vec<NnfEntry> {
    let mut v = h.to_vec();
    v.sort_by(|a, b| {
        a.dist
            .total_cmp(&b.dist)
            .then((a.target.y, a.target.x).cmp(&(b.target.y, b.target.x)))
    });
    v
}

fn has_duplicates(h: &[NnfEntry]) -> bool {
    h.iter()
        .enumerate()
        .any(|(i, e)| h[i + 1..].iter().any(|o| o.target == e.target))
}

pub(crate) fn make_heap(h: &mut [NnfEntry]) {
    for i in (0..h.len() / 2).rev() {
        sift_down(h, i);
    }
}

fn sift_down(h: &mut [NnfEntry], mut i: usize) {
    let n = h.len();
    loop {
        let l = 2 * i + 1;
        if l >= n {
            return;
        }
        let mut m = l;
        if l + 1 < n && h[l + 1].dist > h[l].dist {
            m = l + 1;
        }
        if h[m].dist > h[i].dist {
            h.swap(i, m);
            i = m;
        } else {
            return;
        }
    }
}

#[inline]
pub(crate) fn contains_target(h: &[NnfEntry], t: Pos) -> bool {
    h.iter().any(|e| e.target == t)
}

/// Replaces the root with `cand` iff `cand` is strictly closer than the
/// root and its target is not already stored.
pub fn heap_offer(h: &mut [NnfEntry], cand: NnfEntry) -> bool {
    if cand.dist < h[0].dist && !contains_target(h, cand.target) {
        h[0] = cand;
        sift_down(h, 0);
        true
    } else {
        false
    }
}

struct KnnCtx<'s, S: ?Sized> {
    space: &'s S,
    k: usize,
    radius: f64,
    alpha: f64,
    early_stop: bool,
    seed: u64,
    sweep: u64,
    src: Rect,
    tgt: Rect,
}

impl<S: MatchSpace + ?Sized> KnnCtx<'_, S> {
    #[inline]
    fn try_candidate(&self, z: Pos, cand: Pos, h: &mut [NnfEntry]) -> bool {
        if contains_target(h, cand) || !self.space.allowed(z, cand) {
            return false;
        }
        let bound = if self.early_stop { h[0].dist } else { f64::INFINITY };
        let d = self.space.distance(z, cand, bound);
        heap_offer(h, NnfEntry { target: cand, dist: d })
    }

    fn visit(
        &self,
        z: Pos,
        h: &mut [NnfEntry],
        neighbors: [Option<&[NnfEntry]>; 2],
        order: ScanOrder,
        centers: &mut Vec<Pos>,
    ) -> bool {
        let mut changed = false;
        for (n, d) in neighbors.into_iter().zip(order.deltas()) {
            if let Some(nh) = n {
                for e in nh {
                    changed |= self.try_candidate(z, self.tgt.clamp(e.target.add(d)), h);
                }
            }
        }
        let mut rng = rng::stream(self.seed, z.x, z.y, self.sweep);
        centers.clear();
        centers.extend(h.iter().map(|e| e.target));
        for &v0 in centers.iter() {
            let mut r = self.radius;
            while r >= 1.0 {
                let rr: (f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                let u = self.tgt.clamp(crate::annf::search_point(v0, r, rr));
                changed |= self.try_candidate(z, u, h);
                r *= self.alpha;
            }
        }
        changed
    }

    fn sweep_strip(
        &self,
        strip: &mut [NnfEntry],
        row0: i32,
        above: Option<&[NnfEntry]>,
        below: Option<&[NnfEntry]>,
    ) -> usize {
        let w = self.src.width() as usize;
        let k = self.k;
        let rows = strip.len() / (w * k);
        let order = ScanOrder::for_sweep(self.sweep);
        let mut changed = 0;
        let blank = NnfEntry {
            target: Pos::new(0, 0),
            dist: 0.0,
        };
        let mut heap = vec![blank; k];
        let mut n0 = vec![blank; k];
        let mut n1 = vec![blank; k];
        let mut centers = Vec::with_capacity(k);
        let mut visit_at = |strip: &mut [NnfEntry], r: usize, c: usize| {
            let idx = r * w + c;
            let z = Pos::new(self.src.x0 + c as i32, row0 + r as i32);
            heap.copy_from_slice(&strip[idx * k..(idx + 1) * k]);
            let (a, b) = match order {
                ScanOrder::Forward => (
                    (c > 0).then(|| heap_slice(strip, idx - 1, k)),
                    if r > 0 {
                        Some(heap_slice(strip, idx - w, k))
                    } else {
                        above.map(|a| heap_slice(a, c, k))
                    },
                ),
                ScanOrder::Backward => (
                    (c + 1 < w).then(|| heap_slice(strip, idx + 1, k)),
                    if r + 1 < rows {
                        Some(heap_slice(strip, idx + w, k))
                    } else {
                        below.map(|b| heap_slice(b, c, k))
                    },
                ),
            };
            let has = [a.is_some(), b.is_some()];
            if let Some(a) = a {
                n0.copy_from_slice(a);
            }
            if let Some(b) = b {
                n1.copy_from_slice(b);
            }
            let neighbors = [has[0].then_some(&n0[..]), has[1].then_some(&n1[..])];
            if self.visit(z, &mut heap, neighbors, order, &mut centers) {
                changed += 1;
            }
            strip[idx * k..(idx + 1) * k].copy_from_slice(&heap);
        };
        match order {
            ScanOrder::Forward => {
                for r in 0..rows {
                    for c in 0..w {
                        visit_at(strip, r, c);
                    }
                }
            }
            ScanOrder::Backward => {
                for r in (0..rows).rev() {
                    for c in (0..w).rev() {
                        visit_at(strip, r, c);
                    }
                }
            }
        }
        changed
    }
}

/// `k` distinct uniformly drawn targets per coordinate.
pub fn init_knn_in(space: &(impl MatchSpace + ?Sized), k: usize, seed: u64) -> Result<KnnField> {
    let src = space.source_rect();
    let tgt = space.target_rect();
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if k > tgt.area() {
        return Err(Error::param(format!(
            "k = {k} exceeds the {} available targets",
            tgt.area()
        )));
    }
    if src.is_empty() {
        return Err(Error::param("empty source rectangle"));
    }
    let mut entries = Vec::with_capacity(src.area() * k);
    for z in src.iter() {
        let mut rng = rng::stream(seed, z.x, z.y, INIT_STREAM);
        let start = entries.len();
        let mut tries = 0;
        while entries.len() - start < k && tries < 64 * k {
            tries += 1;
            let Some(t) = space.sample_target(z, &mut rng) else {
                break;
            };
            if !contains_target(&entries[start..], t) {
                entries.push(NnfEntry {
                    target: t,
                    dist: space.distance(z, t, f64::INFINITY),
                });
            }
        }
        if entries.len() - start < k {
            for t in tgt.iter() {
                if entries.len() - start == k {
                    break;
                }
                if space.allowed(z, t) && !contains_target(&entries[start..], t) {
                    entries.push(NnfEntry {
                        target: t,
                        dist: space.distance(z, t, f64::INFINITY),
                    });
                }
            }
        }
        if entries.len() - start < k {
            return Err(Error::param(format!("fewer than k = {k} allowed targets for {z}")));
        }
        make_heap(&mut entries[start..]);
    }
    Ok(KnnField {
        k,
        source: src,
        target: tgt,
        entries,
        seed,
        sweeps: 0,
        self_matching: space.symmetric(),
    })
}

/// One propagation + random-search sweep over every heap.
pub fn iterate_knn(f: &mut KnnField, space: &(impl MatchSpace + ?Sized), params: &SearchParams) -> Result<SweepStats> {
    params.validate()?;
    if f.source != space.source_rect() || f.target != space.target_rect() {
        return Err(Error::DimensionMismatch(
            "field rectangles do not match the matching space".into(),
        ));
    }
    let ctx = KnnCtx {
        space,
        k: f.k,
        radius: params.radius.unwrap_or_else(|| {
            let (w, h) = space.target_dims();
            w.max(h) as f64
        }),
        alpha: params.alpha,
        early_stop: params.early_stop,
        seed: f.seed,
        sweep: f.sweeps,
        src: f.source,
        tgt: f.target,
    };
    let row_len = f.source.width() as usize * f.k;
    let y0 = f.source.y0;
    let changed = run_strips(&mut f.entries, row_len, params.threads, |strip, row, above, below| {
        ctx.sweep_strip(strip, y0 + row as i32, above, below)
    });
    f.sweeps += 1;
    Ok(SweepStats {
        changed,
        visited: f.len(),
    })
}

pub fn compute_knn_in(
    space: &(impl MatchSpace + ?Sized),
    k: usize,
    params: &SearchParams,
    seed: u64,
) -> Result<KnnField> {
    params.validate()?;
    let mut f = init_knn_in(space, k, seed)?;
    for _ in 0..params.iterations {
        iterate_knn(&mut f, space, params)?;
    }
    Ok(f)
}

/// k-NN field of patch SSD from `a` to `b`. Passing the same image twice
/// gives a self-matching field.
pub fn compute_knn(
    a: &ImageBuffer,
    b: &ImageBuffer,
    geom: &PatchGeometry,
    k: usize,
    params: &SearchParams,
    seed: u64,
) -> Result<KnnField> {
    compute_knn_in(&SsdSpace::new(a, b, *geom)?, k, params, seed)
}

/// Little-endian dump: `"KNNF" u32 width, u32 height, u16 patch_size, u16 k`,
/// then per valid source coordinate `k` triples `i16 dx, i16 dy, f32 dist`
/// sorted by ascending distance.
pub fn write_knn(f: &KnnField, patch_size: usize, w: &mut impl Write) -> Result<()> {
    let (width, height) = crate::annf::inset_dims(f.source);
    write_header(w, KNN_MAGIC, width as u32, height as u32, patch_size as u16)?;
    let k = u16::try_from(f.k).map_err(|_| Error::Format(format!("k = {} exceeds u16", f.k)))?;
    w.write_all(&k.to_le_bytes())?;
    for (z, h) in f.iter() {
        for e in sorted_heap(h) {
            write_triple(w, e.target.sub(z), e.dist)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnDump {
    pub width: u32,
    pub height: u32,
    pub patch_size: u16,
    pub k: u16,
    /// `k` `(offset, dist)` pairs per valid source coordinate.
    pub entries: Vec<(Pos, f32)>,
}

pub fn read_knn(r: &mut impl Read) -> Result<KnnDump> {
    let (width, height, patch_size) = read_header(r, KNN_MAGIC)?;
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let k = u16::from_le_bytes(b2);
    let geom = PatchGeometry::new(patch_size as usize)?;
    let n = geom.valid_rect(width as usize, height as usize).area() * k as usize;
    let entries = (0..n).map(|_| read_triple(r)).collect::<Result<Vec<_>>>()?;
    Ok(KnnDump {
        width,
        height,
        patch_size,
        k,
        entries,
    })
}

#[inline]
fn heap_slice(s: &[NnfEntry], i: usize, k: usize) -> &[NnfEntry] {
    &s[i * k..(i + 1) * k]
}
