use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annf::{MatchSpace, NnfEntry};
use crate::error::{Error, Result};
use crate::gpm::{contains_target, heap_offer, KnnField};
use crate::image::ImageBuffer;
use crate::patch::{extract_patch, PatchGeometry, Pos, Rect};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinParams {
    /// Number of principal components kept.
    pub k_dims: usize,
    /// Partitions per component.
    pub parts: usize,
    /// PCA is fitted on every `sample_stride`-th patch in raster order.
    pub sample_stride: usize,
    /// Only every `index_stride`-th patch is stored in the buckets.
    pub index_stride: usize,
}

impl Default for BinParams {
    fn default() -> Self {
        BinParams {
            k_dims: 4,
            parts: 9,
            sample_stride: 8,
            index_stride: 1,
        }
    }
}

/// Buckets of patch coordinates keyed by their quantized projection onto
/// the leading principal components of the image's patches.
#[derive(Debug, Clone)]
pub struct BinIndex {
    geom: PatchGeometry,
    rect: Rect,
    params: BinParams,
    mean: Vec<f32>,
    /// `k_dims` rows of length patch-dim.
    basis: Vec<Vec<f32>>,
    /// `parts - 1` ascending boundaries per component.
    boundaries: Vec<Vec<f32>>,
    buckets: HashMap<u32, Vec<Pos>>,
    /// Nonempty bucket ids with their cells, ascending by id.
    cells: Vec<(u32, Vec<usize>)>,
    /// Nearest nonempty bucket id for every bin id, when the grid is small.
    nearest: Option<Vec<u32>>,
    indexed: usize,
}

impl BinIndex {
    pub fn params(&self) -> &BinParams {
        &self.params
    }
    pub fn rect(&self) -> Rect {
        self.rect
    }
    /// `parts^k_dims`.
    pub fn total_bins(&self) -> usize {
        self.params.parts.pow(self.params.k_dims as u32)
    }
    pub fn indexed(&self) -> usize {
        self.indexed
    }
    pub fn buckets(&self) -> &HashMap<u32, Vec<Pos>> {
        &self.buckets
    }
    /// True when the covariance was degenerate and everything shares one bucket.
    pub fn is_degenerate(&self) -> bool {
        self.basis.is_empty()
    }

    /// Cell coordinates of a patch vector.
    pub fn cell(&self, patch: &[f32]) -> Vec<usize> {
        self.basis
            .iter()
            .zip(&self.boundaries)
            .map(|(row, bounds)| {
                let v: f32 = row
                    .iter()
                    .zip(patch)
                    .zip(&self.mean)
                    .map(|((b, x), m)| b * (x - m))
                    .sum();
                bounds.partition_point(|&q| q <= v)
            })
            .collect()
    }

    pub fn bin_id(&self, cell: &[usize]) -> u32 {
        cell.iter()
            .fold(0u32, |acc, &c| acc * self.params.parts as u32 + c as u32)
    }

    fn cell_of_id(&self, mut id: u32) -> Vec<usize> {
        let p = self.params.parts as u32;
        let mut cell = vec![0; self.basis.len()];
        for c in cell.iter_mut().rev() {
            *c = (id % p) as usize;
            id /= p;
        }
        cell
    }

    pub fn bin_of(&self, patch: &[f32]) -> u32 {
        self.bin_id(&self.cell(patch))
    }

    /// Bucket holding the query, or the nearest nonempty bucket by L1
    /// cell distance (ties to the smaller id).
    pub fn bucket_for(&self, patch: &[f32]) -> Option<&[Pos]> {
        let cell = self.cell(patch);
        let id = self.bin_id(&cell);
        if let Some(b) = self.buckets.get(&id) {
            return Some(b);
        }
        let nearest = match &self.nearest {
            Some(table) => table[id as usize],
            None => self.scan_nearest(&cell)?,
        };
        self.buckets.get(&nearest).map(|b| b.as_slice())
    }

    fn scan_nearest(&self, cell: &[usize]) -> Option<u32> {
        self.cells
            .iter()
            .min_by_key(|(id, c)| {
                let d: usize = c.iter().zip(cell).map(|(a, b)| a.abs_diff(*b)).sum();
                (d, *id)
            })
            .map(|(id, _)| *id)
    }
}

/// Fits the projection on sampled patches of `b` and buckets its patches.
pub fn build_bin_index(b: &ImageBuffer, geom: &PatchGeometry, params: &BinParams) -> Result<BinIndex> {
    if params.k_dims == 0 || params.parts < 2 || params.sample_stride == 0 || params.index_stride == 0 {
        return Err(Error::param(
            "bin index needs k_dims >= 1, parts >= 2 and nonzero strides",
        ));
    }
    if (params.parts as f64).powi(params.k_dims as i32) > u32::MAX as f64 {
        return Err(Error::param("too many bins for 32-bit bin ids"));
    }
    let rect = geom.require_fits(b)?;
    let dim = geom.samples(b.channels());
    let samples: Vec<Vec<f32>> = rect
        .iter()
        .step_by(params.sample_stride)
        .map(|p| extract_patch(b, p, geom))
        .collect();
    if samples.len() < 10 * params.k_dims {
        return Err(Error::param(format!(
            "{} sampled patches, need at least {}",
            samples.len(),
            10 * params.k_dims
        )));
    }
    let n = samples.len() as f64;
    let mut mean = vec![0f64; dim];
    for s in &samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0f64; dim];
    for s in &samples {
        for (c, (&v, m)) in centered.iter_mut().zip(s.iter().zip(&mean)) {
            *c = v as f64 - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let mean32: Vec<f32> = mean.iter().map(|&m| m as f32).collect();
    let basis: Vec<Vec<f32>> = if top <= 1e-12 {
        Vec::new()
    } else {
        order
            .iter()
            .take(params.k_dims.min(dim))
            .filter(|&&i| eig.eigenvalues[i] > top * 1e-9)
            .map(|&i| eig.eigenvectors.column(i).iter().map(|&v| v as f32).collect())
            .collect()
    };
    let mut index = BinIndex {
        geom: *geom,
        rect,
        params: *params,
        mean: mean32,
        basis,
        boundaries: Vec::new(),
        buckets: HashMap::new(),
        cells: Vec::new(),
        nearest: None,
        indexed: 0,
    };
    index.boundaries = index
        .basis
        .iter()
        .map(|row| {
            let mut proj: Vec<f32> = samples
                .iter()
                .map(|s| row.iter().zip(s).zip(&index.mean).map(|((b, x), m)| b * (x - m)).sum())
                .collect();
            proj.sort_by(f32::total_cmp);
            (1..params.parts)
                .map(|j| proj[(j * proj.len() / params.parts).min(proj.len() - 1)])
                .collect()
        })
        .collect();
    for p in rect.iter().step_by(params.index_stride) {
        let id = index.bin_of(&extract_patch(b, p, geom));
        index.buckets.entry(id).or_default().push(p);
        index.indexed += 1;
    }
    let mut ids: Vec<u32> = index.buckets.keys().copied().collect();
    ids.sort_unstable();
    index.nearest = nearest_table(&ids, params.parts, index.basis.len());
    index.cells = ids.into_iter().map(|id| (id, index.cell_of_id(id))).collect();
    Ok(index)
}

/// Multi-source BFS over the bin grid. The set of nearest sources of a bin
/// is the union of those of its neighbors one step closer, so carrying the
/// minimum id along reproduces the (L1 distance, id) order of the scan.
fn nearest_table(ids: &[u32], parts: usize, dims: usize) -> Option<Vec<u32>> {
    let total = parts.checked_pow(dims as u32).filter(|&t| t <= 1 << 20)?;
    let mut best = vec![u32::MAX; total];
    let mut dist = vec![u32::MAX; total];
    let mut frontier: Vec<usize> = ids.iter().map(|&id| id as usize).collect();
    for &id in &frontier {
        best[id] = id as u32;
        dist[id] = 0;
    }
    let mut level = 0;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for &c in &frontier {
            let mut stride = 1;
            for _ in 0..dims {
                let digit = (c / stride) % parts;
                let mut visit = |n: usize| {
                    if dist[n] == u32::MAX {
                        dist[n] = level;
                        next.push(n);
                    }
                    if dist[n] == level {
                        best[n] = best[n].min(best[c]);
                    }
                };
                if digit > 0 {
                    visit(c - stride);
                }
                if digit + 1 < parts {
                    visit(c + stride);
                }
                stride *= parts;
            }
        }
        frontier = next;
    }
    Some(best)
}

/// Uniform random member of the query's bucket (or the nearest nonempty one).
pub fn bin_candidate(index: &BinIndex, query: &[f32], rng: &mut impl Rng) -> Result<Pos> {
    let bucket = index.bucket_for(query).ok_or_else(|| Error::param("empty bin index"))?;
    Ok(bucket[rng.gen_range(0..bucket.len())])
}

/// One binning proposal per coordinate of a k-NN field from `a` into the
/// indexed image. Returns the number of heaps that changed.
pub fn binning_pass(
    f: &mut KnnField,
    space: &(impl MatchSpace + ?Sized),
    a: &ImageBuffer,
    index: &BinIndex,
    seed: u64,
    sweep: u64,
) -> Result<usize> {
    if f.target_rect() != index.rect {
        return Err(Error::DimensionMismatch(
            "bin index does not cover the field's target".into(),
        ));
    }
    let src = f.source_rect();
    let mut changed = 0;
    for i in 0..f.len() {
        let z = src.pos(i);
        let mut rng = rng::stream(seed ^ 0xb1, z.x, z.y, sweep);
        let t = bin_candidate(index, &extract_patch(a, z, &index.geom), &mut rng)?;
        let h = f.heap_at_mut(i);
        if contains_target(h, t) || !space.allowed(z, t) {
            continue;
        }
        let d = space.distance(z, t, h[0].dist);
        changed += heap_offer(h, NnfEntry { target: t, dist: d }) as usize;
    }
    Ok(changed)
}
