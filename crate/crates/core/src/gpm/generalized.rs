//! Rotation- and scale-aware matching. Each source patch maps to a
//! similarity transform `(x, y, θ, s)` of the target image.

use std::f32::consts::FRAC_PI_2;
use std::f32::consts::FRAC_PI_4;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annf::{search_point, ScanOrder, SearchParams, INIT_STREAM};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::{extract_patch, normalize_patch, PatchGeometry, Pos, Rect};
use crate::rng;
use crate::strips::run_strips;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Filter {
    #[default]
    Bilinear,
    Nearest,
}

/// How a source patch is compared to a resampled target patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PatchMetric {
    #[default]
    Ssd,
    /// SSD after mean/std standardization of both patches.
    Normalized,
}

/// Target patch center, rotation (radians) and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub x: f32,
    pub y: f32,
    pub theta: f32,
    pub scale: f32,
}

impl Similarity {
    /// Maps a patch-local offset into target image coordinates.
    #[inline]
    pub fn apply(&self, dx: f32, dy: f32) -> (f32, f32) {
        let (s, c) = self.theta.sin_cos();
        (
            self.x + self.scale * (c * dx - s * dy),
            self.y + self.scale * (s * dx + c * dy),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnfEntry {
    pub xf: Similarity,
    pub dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnfParams {
    pub search: SearchParams,
    pub theta_range: (f32, f32),
    pub scale_range: (f32, f32),
    pub filter: Filter,
    pub metric: PatchMetric,
}

impl Default for GnnfParams {
    fn default() -> Self {
        GnnfParams {
            search: SearchParams::default(),
            theta_range: (0.0, 0.0),
            scale_range: (1.0, 1.0),
            filter: Filter::Bilinear,
            metric: PatchMetric::Ssd,
        }
    }
}

impl GnnfParams {
    fn validate(&self) -> Result<()> {
        self.search.validate()?;
        let (t1, t2) = self.theta_range;
        let (s1, s2) = self.scale_range;
        if !(t1 <= t2) {
            return Err(Error::param(format!("theta range [{t1}, {t2}] is empty")));
        }
        if !(s1 > 0.0 && s1 <= s2) {
            return Err(Error::param(format!(
                "scale range [{s1}, {s2}] must satisfy 0 < s1 <= s2"
            )));
        }
        Ok(())
    }

    /// Degenerate ranges reduce the search to integer translations.
    fn translation_only(&self) -> bool {
        self.theta_range == (0.0, 0.0) && self.scale_range == (1.0, 1.0)
    }
}

/// Half-extent of the axis-aligned box covering a rotated, scaled patch.
pub fn footprint_radius(half: i32, theta: f32, scale: f32) -> f32 {
    scale * half as f32 * (theta.cos().abs() + theta.sin().abs())
}

fn max_footprint(half: i32, theta: (f32, f32), scale: f32) -> f32 {
    let mut best = footprint_radius(half, theta.0, scale).max(footprint_radius(half, theta.1, scale));
    // |cos| + |sin| peaks at π/4 + kπ/2
    let k0 = ((theta.0 - FRAC_PI_4) / FRAC_PI_2).ceil() as i32;
    let peak = FRAC_PI_4 + k0 as f32 * FRAC_PI_2;
    if peak <= theta.1 {
        best = best.max(scale * half as f32 * std::f32::consts::SQRT_2);
    }
    best
}

fn footprint_fits(b: &ImageBuffer, x: f32, y: f32, r: f32) -> bool {
    x - r >= 0.0 && y - r >= 0.0 && x + r <= (b.width() - 1) as f32 && y + r <= (b.height() - 1) as f32
}

#[inline]
fn sample_into(b: &ImageBuffer, x: f32, y: f32, filter: Filter, out: &mut [f32]) {
    match filter {
        Filter::Bilinear => b.sample_bilinear(x, y, out),
        Filter::Nearest => {
            let xi = (x.round() as usize).min(b.width() - 1);
            let yi = (y.round() as usize).min(b.height() - 1);
            out.copy_from_slice(b.pixel(xi, yi));
        }
    }
}

/// `p x p` samples of `b` under the similarity transform about `center`.
pub fn sample_transformed_patch(
    b: &ImageBuffer,
    center: (f32, f32),
    theta: f32,
    scale: f32,
    geom: &PatchGeometry,
    filter: Filter,
) -> Result<Vec<f32>> {
    let h = geom.half();
    if !footprint_fits(b, center.0, center.1, footprint_radius(h, theta, scale) - 1e-4) {
        return Err(Error::param(format!(
            "transformed patch at ({}, {}) escapes the {}x{} image",
            center.0,
            center.1,
            b.width(),
            b.height()
        )));
    }
    let xf = Similarity {
        x: center.0,
        y: center.1,
        theta,
        scale,
    };
    let c = b.channels();
    let mut out = vec![0.0f32; geom.samples(c)];
    let mut i = 0;
    for dy in -h..=h {
        for dx in -h..=h {
            let (sx, sy) = xf.apply(dx as f32, dy as f32);
            sample_into(b, sx, sy, filter, &mut out[i..i + c]);
            i += c;
        }
    }
    Ok(out)
}

/// Candidate from a scan neighbor: the neighbor's target advanced along its
/// own transform by `Δp`; rotation and scale are inherited.
pub fn jacobian_propagate(neighbor: &Similarity, delta: Pos) -> Similarity {
    let (x, y) = neighbor.apply(delta.x as f32, delta.y as f32);
    Similarity { x, y, ..*neighbor }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedNnf {
    source: Rect,
    target_dims: (usize, usize),
    entries: Vec<GnnfEntry>,
    seed: u64,
    sweeps: u64,
}

impl GeneralizedNnf {
    pub fn source_rect(&self) -> Rect {
        self.source
    }
    pub fn target_dims(&self) -> (usize, usize) {
        self.target_dims
    }
    pub fn entries(&self) -> &[GnnfEntry] {
        &self.entries
    }
    pub fn get(&self, p: Pos) -> &GnnfEntry {
        &self.entries[self.source.index(p)]
    }
    pub fn iter(&self) -> impl Iterator<Item = (Pos, &GnnfEntry)> + '_ {
        self.entries.iter().enumerate().map(|(i, e)| (self.source.pos(i), e))
    }
    pub fn mean_distance(&self) -> f64 {
        self.entries.iter().map(|e| e.dist).sum::<f64>() / self.entries.len().max(1) as f64
    }
    pub fn sweeps_done(&self) -> u64 {
        self.sweeps
    }
}

/// Distance evaluation and candidate construction for one (A, B) pair.
pub struct GnnfSpace<'a> {
    a: &'a ImageBuffer,
    b: &'a ImageBuffer,
    geom: PatchGeometry,
    params: GnnfParams,
    source: Rect,
    /// Standardized source patches, present for [`PatchMetric::Normalized`].
    normalized_a: Option<Vec<f32>>,
}

impl<'a> GnnfSpace<'a> {
    pub fn new(a: &'a ImageBuffer, b: &'a ImageBuffer, geom: PatchGeometry, params: GnnfParams) -> Result<Self> {
        params.validate()?;
        if a.channels() != b.channels() {
            return Err(Error::ChannelCount {
                expected: a.channels(),
                found: b.channels(),
            });
        }
        let source = geom.require_fits(a)?;
        let r = max_footprint(geom.half(), params.theta_range, params.scale_range.1);
        if 2.0 * r > (b.width().min(b.height()) - 1) as f32 {
            return Err(Error::param(format!(
                "scale range up to {} makes patches exceed the {}x{} target",
                params.scale_range.1,
                b.width(),
                b.height()
            )));
        }
        let normalized_a = (params.metric == PatchMetric::Normalized).then(|| {
            let mut all = Vec::with_capacity(source.area() * geom.samples(a.channels()));
            for p in source.iter() {
                let mut v = extract_patch(a, p, &geom);
                normalize_patch(&mut v);
                all.extend_from_slice(&v);
            }
            all
        });
        Ok(GnnfSpace {
            a,
            b,
            geom,
            params,
            source,
            normalized_a,
        })
    }

    pub fn params(&self) -> &GnnfParams {
        &self.params
    }

    /// Clamps the transform into the configured ranges and moves the center
    /// so the footprint lies inside the target.
    pub fn clamp(&self, mut t: Similarity) -> Similarity {
        let (t1, t2) = self.params.theta_range;
        let (s1, s2) = self.params.scale_range;
        t.theta = t.theta.clamp(t1, t2);
        t.scale = t.scale.clamp(s1, s2);
        let r = footprint_radius(self.geom.half(), t.theta, t.scale);
        let (lo_x, hi_x) = (r, (self.b.width() - 1) as f32 - r);
        let (lo_y, hi_y) = (r, (self.b.height() - 1) as f32 - r);
        if self.params.translation_only() {
            t.x = t.x.round().clamp(lo_x.ceil(), hi_x.floor());
            t.y = t.y.round().clamp(lo_y.ceil(), hi_y.floor());
        } else {
            t.x = t.x.clamp(lo_x, hi_x.max(lo_x));
            t.y = t.y.clamp(lo_y, hi_y.max(lo_y));
        }
        t
    }

    pub fn distance(&self, z: Pos, t: &Similarity, bound: f64, scratch: &mut Vec<f32>) -> f64 {
        let h = self.geom.half();
        let c = self.a.channels();
        let filter = self.params.filter;
        let (sin, cos) = t.theta.sin_cos();
        let (m00, m01, m10, m11) = (t.scale * cos, -t.scale * sin, t.scale * sin, t.scale * cos);
        match &self.normalized_a {
            None if self.params.translation_only() => {
                crate::patch::ssd(self.a, z, self.b, Pos::new(t.x as i32, t.y as i32), h, bound)
            }
            None => {
                scratch.resize(c, 0.0);
                let mut sum = 0.0f64;
                for dy in -h..=h {
                    let row = (z.y + dy) as usize;
                    for dx in -h..=h {
                        let (fx, fy) = (dx as f32, dy as f32);
                        let (sx, sy) = (t.x + m00 * fx + m01 * fy, t.y + m10 * fx + m11 * fy);
                        sample_into(self.b, sx, sy, filter, scratch);
                        let pa = self.a.pixel((z.x + dx) as usize, row);
                        for (va, vb) in pa.iter().zip(scratch.iter()) {
                            let d = (va - vb) as f64;
                            sum += d * d;
                        }
                    }
                    if sum > bound {
                        return sum;
                    }
                }
                sum
            }
            Some(norm) => {
                let n = self.geom.samples(c);
                scratch.resize(n, 0.0);
                let mut i = 0;
                for dy in -h..=h {
                    for dx in -h..=h {
                        let (fx, fy) = (dx as f32, dy as f32);
                        let (sx, sy) = (t.x + m00 * fx + m01 * fy, t.y + m10 * fx + m11 * fy);
                        sample_into(self.b, sx, sy, filter, &mut scratch[i..i + c]);
                        i += c;
                    }
                }
                normalize_patch(scratch);
                let k = self.source.index(z);
                crate::patch::row_ssd_acc(&norm[k * n..(k + 1) * n], scratch, 0.0)
            }
        }
    }

    fn random_transform(&self, rng: &mut impl Rng) -> Similarity {
        if self.params.translation_only() {
            let r = self.geom.valid_rect_of(self.b);
            return Similarity {
                x: rng.gen_range(r.x0..r.x1) as f32,
                y: rng.gen_range(r.y0..r.y1) as f32,
                theta: 0.0,
                scale: 1.0,
            };
        }
        let (t1, t2) = self.params.theta_range;
        let (s1, s2) = self.params.scale_range;
        let theta = if t1 < t2 { rng.gen_range(t1..=t2) } else { t1 };
        let scale = if s1 < s2 { rng.gen_range(s1..=s2) } else { s1 };
        let r = footprint_radius(self.geom.half(), theta, scale);
        let hi_x = ((self.b.width() - 1) as f32 - r).max(r);
        let hi_y = ((self.b.height() - 1) as f32 - r).max(r);
        let x = if r < hi_x { rng.gen_range(r..=hi_x) } else { r };
        let y = if r < hi_y { rng.gen_range(r..=hi_y) } else { r };
        self.clamp(Similarity { x, y, theta, scale })
    }

    #[inline]
    fn try_candidate(&self, z: Pos, cand: Similarity, e: &mut GnnfEntry, scratch: &mut Vec<f32>) {
        if cand == e.xf {
            return;
        }
        let bound = if self.params.search.early_stop {
            e.dist
        } else {
            f64::INFINITY
        };
        let d = self.distance(z, &cand, bound, scratch);
        if d < e.dist {
            *e = GnnfEntry { xf: cand, dist: d };
        }
    }

    fn random_search(&self, z: Pos, e: &mut GnnfEntry, rng: &mut impl Rng, scratch: &mut Vec<f32>) {
        let sp = &self.params.search;
        let w = sp.radius.unwrap_or(self.b.width().max(self.b.height()) as f64) as f32;
        let alpha = sp.alpha as f32;
        let (t1, t2) = self.params.theta_range;
        let (s1, s2) = self.params.scale_range;
        let theta_r = (t2 - t1) / 2.0;
        let log_scale_r = (s2.ln() - s1.ln()) / 2.0;
        let v0 = e.xf;
        if self.params.translation_only() {
            let p0 = Pos::new(v0.x as i32, v0.y as i32);
            let mut r = w as f64;
            while r >= 1.0 {
                let rr: (f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                let u = search_point(p0, r, rr);
                let cand = Similarity {
                    x: u.x as f32,
                    y: u.y as f32,
                    ..v0
                };
                self.try_candidate(z, self.clamp(cand), e, scratch);
                r *= sp.alpha;
            }
            return;
        }
        let mut k = 1.0f32;
        while w * k >= 1.0 {
            let cand = Similarity {
                x: v0.x + w * k * rng.gen_range(-1.0..=1.0f32),
                y: v0.y + w * k * rng.gen_range(-1.0..=1.0f32),
                theta: v0.theta + theta_r * k * rng.gen_range(-1.0..=1.0f32),
                scale: (v0.scale.ln() + log_scale_r * k * rng.gen_range(-1.0..=1.0f32)).exp(),
            };
            self.try_candidate(z, self.clamp(cand), e, scratch);
            k *= alpha;
        }
    }
}

pub fn init_gnnf(space: &GnnfSpace<'_>, seed: u64) -> GeneralizedNnf {
    let mut scratch = Vec::new();
    let entries = space
        .source
        .iter()
        .map(|z| {
            let mut rng = rng::stream(seed, z.x, z.y, INIT_STREAM);
            let xf = space.random_transform(&mut rng);
            GnnfEntry {
                xf,
                dist: space.distance(z, &xf, f64::INFINITY, &mut scratch),
            }
        })
        .collect();
    GeneralizedNnf {
        source: space.source,
        target_dims: (space.b.width(), space.b.height()),
        entries,
        seed,
        sweeps: 0,
    }
}

/// One propagation + random-search sweep over all four dimensions.
pub fn iterate_gnnf(f: &mut GeneralizedNnf, space: &GnnfSpace<'_>) -> Result<usize> {
    if f.source != space.source {
        return Err(Error::DimensionMismatch(
            "field does not match the matching space".into(),
        ));
    }
    let order = ScanOrder::for_sweep(f.sweeps);
    let (seed, sweep, src) = (f.seed, f.sweeps, f.source);
    let w = src.width() as usize;
    let changed = run_strips(
        &mut f.entries,
        w,
        space.params.search.threads,
        |strip, row0, above, below| {
            let rows = strip.len() / w;
            let mut scratch = Vec::new();
            let mut changed = 0;
            let mut visit = |strip: &mut [GnnfEntry], r: usize, c: usize| {
                let idx = r * w + c;
                let z = Pos::new(src.x0 + c as i32, src.y0 + (row0 + r) as i32);
                let mut e = strip[idx];
                let before = e.xf;
                let neighbors = match order {
                    ScanOrder::Forward => [
                        (c > 0).then(|| strip[idx - 1].xf),
                        if r > 0 {
                            Some(strip[idx - w].xf)
                        } else {
                            above.map(|a| a[c].xf)
                        },
                    ],
                    ScanOrder::Backward => [
                        (c + 1 < w).then(|| strip[idx + 1].xf),
                        if r + 1 < rows {
                            Some(strip[idx + w].xf)
                        } else {
                            below.map(|b| b[c].xf)
                        },
                    ],
                };
                for (n, d) in neighbors.into_iter().zip(order.deltas()) {
                    if let Some(n) = n {
                        let cand = space.clamp(jacobian_propagate(&n, d));
                        space.try_candidate(z, cand, &mut e, &mut scratch);
                    }
                }
                let mut rng = rng::stream(seed, z.x, z.y, sweep);
                space.random_search(z, &mut e, &mut rng, &mut scratch);
                if e.xf != before {
                    changed += 1;
                }
                strip[idx] = e;
            };
            match order {
                ScanOrder::Forward => {
                    for r in 0..rows {
                        for c in 0..w {
                            visit(strip, r, c);
                        }
                    }
                }
                ScanOrder::Backward => {
                    for r in (0..rows).rev() {
                        for c in (0..w).rev() {
                            visit(strip, r, c);
                        }
                    }
                }
            }
            changed
        },
    );
    f.sweeps += 1;
    Ok(changed)
}

/// Generalized field from `a` to `b` over the configured rotation and scale
/// ranges.
pub fn compute_gnnf(
    a: &ImageBuffer,
    b: &ImageBuffer,
    geom: &PatchGeometry,
    params: &GnnfParams,
    seed: u64,
) -> Result<GeneralizedNnf> {
    let space = GnnfSpace::new(a, b, *geom, *params)?;
    let mut f = init_gnnf(&space, seed);
    for _ in 0..params.search.iterations {
        iterate_gnnf(&mut f, &space)?;
    }
    Ok(f)
}
