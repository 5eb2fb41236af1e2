use rand::Rng;

use super::field::{MatchSpace, Nnf, NnfEntry, SearchParams, SsdSpace};
use crate::error::{Error, Result};
use crate::image::{build_pyramid, pyramid_dims, ImageBuffer};
use crate::patch::{PatchGeometry, Pos, Rect};
use crate::rng;

/// Sweep id reserved for the random initialization stream.
pub(crate) const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanOrder {
    /// Raster order; neighbors left of and above the current coordinate.
    Forward,
    /// Reverse raster order; neighbors right of and below.
    Backward,
}

impl ScanOrder {
    pub fn for_sweep(sweep: u64) -> Self {
        if sweep % 2 == 0 {
            ScanOrder::Forward
        } else {
            ScanOrder::Backward
        }
    }

    /// Neighbor displacements `Δp`; the candidate for coordinate `z` is
    /// `f(z - Δp) + Δp`.
    pub fn deltas(self) -> [Pos; 2] {
        match self {
            ScanOrder::Forward => [Pos::new(1, 0), Pos::new(0, 1)],
            ScanOrder::Backward => [Pos::new(-1, 0), Pos::new(0, -1)],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    /// Entries whose target changed during the sweep.
    pub changed: usize,
    pub visited: usize,
}

impl SweepStats {
    pub fn unchanged_fraction(&self) -> f64 {
        if self.visited == 0 {
            1.0
        } else {
            1.0 - self.changed as f64 / self.visited as f64
        }
    }
}

/// Candidates proposed to `z` by its already-visited scan neighbors,
/// clamped to the target rectangle.
pub fn propagation_candidates(f: &Nnf, z: Pos, order: ScanOrder) -> Vec<Pos> {
    order
        .deltas()
        .iter()
        .filter_map(|&d| {
            let n = z.sub(d);
            f.source.contains(n).then(|| f.target.clamp(f.get(n).target.add(d)))
        })
        .collect()
}

/// Radii `w·α^i` visited by one random search, largest first.
pub fn search_radii(w: f64, alpha: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = w;
    while r >= 1.0 {
        out.push(r);
        r *= alpha;
    }
    out
}

/// `v0 + radius·R` rounded to the pixel grid, before clamping.
pub fn search_point(v0: Pos, radius: f64, r: (f64, f64)) -> Pos {
    Pos::new(
        (v0.x as f64 + radius * r.0).round() as i32,
        (v0.y as f64 + radius * r.1).round() as i32,
    )
}

#[derive(Clone, Copy)]
pub(crate) struct SweepCtx<'s, S: ?Sized> {
    pub space: &'s S,
    pub radius: f64,
    pub alpha: f64,
    pub early_stop: bool,
    pub seed: u64,
    pub sweep: u64,
    pub src: Rect,
    pub tgt: Rect,
}

impl<S: MatchSpace + ?Sized> SweepCtx<'_, S> {
    #[inline]
    fn bound(&self, e: &NnfEntry) -> f64 {
        if self.early_stop {
            e.dist
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    pub(crate) fn try_candidate(&self, z: Pos, cand: Pos, e: &mut NnfEntry) -> bool {
        if cand == e.target || !self.space.allowed(z, cand) {
            return false;
        }
        let d = self.space.distance(z, cand, self.bound(e));
        if d < e.dist {
            *e = NnfEntry { target: cand, dist: d };
            true
        } else {
            false
        }
    }

    /// Exponentially shrinking random search around the entry's target.
    pub(crate) fn random_search(&self, z: Pos, e: &mut NnfEntry, rng: &mut impl Rng) -> usize {
        let v0 = e.target;
        let mut r = self.radius;
        let mut scales = 0;
        while r >= 1.0 {
            let rr = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            let u = self.tgt.clamp(search_point(v0, r, rr));
            self.try_candidate(z, u, e);
            scales += 1;
            r *= self.alpha;
        }
        scales
    }

    /// Propagation then random search for one coordinate.
    #[inline]
    fn visit(&self, z: Pos, e: &mut NnfEntry, neighbors: [Option<Pos>; 2], order: ScanOrder) -> bool {
        let before = e.target;
        for (n, d) in neighbors.into_iter().zip(order.deltas()) {
            if let Some(t) = n {
                let cand = self.tgt.clamp(t.add(d));
                self.try_candidate(z, cand, e);
            }
        }
        let mut rng = rng::stream(self.seed, z.x, z.y, self.sweep);
        self.random_search(z, e, &mut rng);
        e.target != before
    }

    /// One sweep over a horizontal strip of rows starting at absolute row
    /// `row0`. `above`/`below` are the boundary rows of adjacent strips as
    /// snapshotted at the last barrier.
    pub(crate) fn sweep_strip(
        &self,
        strip: &mut [NnfEntry],
        locked: Option<&[bool]>,
        row0: i32,
        above: Option<&[NnfEntry]>,
        below: Option<&[NnfEntry]>,
    ) -> usize {
        let w = self.src.width() as usize;
        let rows = strip.len() / w;
        let order = ScanOrder::for_sweep(self.sweep);
        let mut changed = 0;
        let mut visit_at = |strip: &mut [NnfEntry], r: usize, c: usize| {
            let idx = r * w + c;
            if locked.is_some_and(|l| l[idx]) {
                return;
            }
            let z = Pos::new(self.src.x0 + c as i32, row0 + r as i32);
            let neighbors = match order {
                ScanOrder::Forward => [
                    (c > 0).then(|| strip[idx - 1].target),
                    if r > 0 {
                        Some(strip[idx - w].target)
                    } else {
                        above.map(|a| a[c].target)
                    },
                ],
                ScanOrder::Backward => [
                    (c + 1 < w).then(|| strip[idx + 1].target),
                    if r + 1 < rows {
                        Some(strip[idx + w].target)
                    } else {
                        below.map(|b| b[c].target)
                    },
                ],
            };
            let mut e = strip[idx];
            if self.visit(z, &mut e, neighbors, order) {
                changed += 1;
            }
            strip[idx] = e;
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

fn check_space(f: &Nnf, space: &(impl MatchSpace + ?Sized)) -> Result<()> {
    if f.source != space.source_rect() || f.target != space.target_rect() {
        return Err(Error::DimensionMismatch(
            "field rectangles do not match the matching space".into(),
        ));
    }
    Ok(())
}

/// Uniform random field: every target drawn from the allowed targets.
pub fn init_random_in(space: &(impl MatchSpace + ?Sized), seed: u64) -> Result<Nnf> {
    let src = space.source_rect();
    let tgt = space.target_rect();
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::param("empty source or target rectangle"));
    }
    let mut entries = Vec::with_capacity(src.area());
    for z in src.iter() {
        let mut rng = rng::stream(seed, z.x, z.y, INIT_STREAM);
        let t = space
            .sample_target(z, &mut rng)
            .ok_or_else(|| Error::param(format!("no allowed target for {z}")))?;
        entries.push(NnfEntry {
            target: t,
            dist: space.distance(z, t, f64::INFINITY),
        });
    }
    Nnf::from_entries(src, tgt, entries, seed)
}

pub fn init_random(a: &ImageBuffer, b: &ImageBuffer, geom: &PatchGeometry, seed: u64) -> Result<Nnf> {
    init_random_in(&SsdSpace::new(a, b, *geom)?, seed)
}

/// Random search for a single entry; returns the updated entry.
pub fn random_search<R: Rng>(
    f: &mut Nnf,
    space: &impl MatchSpace,
    z: Pos,
    params: &SearchParams,
    rng: &mut R,
) -> NnfEntry {
    let ctx = SweepCtx {
        space,
        radius: params.radius_for(space),
        alpha: params.alpha,
        early_stop: params.early_stop,
        seed: f.seed,
        sweep: f.sweeps,
        src: f.source,
        tgt: f.target,
    };
    let mut e = *f.get(z);
    ctx.random_search(z, &mut e, rng);
    *f.get_mut(z) = e;
    e
}

/// One full propagation + random-search sweep. Even sweeps scan in raster
/// order, odd sweeps in reverse. With `params.threads > 1` the field is cut
/// into horizontal strips processed concurrently; cross-strip propagation
/// reads the neighbor strip's boundary row as of the start of the sweep.
pub fn iterate(f: &mut Nnf, space: &(impl MatchSpace + ?Sized), params: &SearchParams) -> Result<SweepStats> {
    params.validate()?;
    check_space(f, space)?;
    let ctx = SweepCtx {
        space,
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
    let w = f.source.width() as usize;
    let y0 = f.source.y0;
    let locked = f.locked.as_deref();
    let changed = crate::strips::run_strips(&mut f.entries, w, params.threads, |strip, row, above, below| {
        let lk = locked.map(|l| &l[row * w..row * w + strip.len()]);
        ctx.sweep_strip(strip, lk, y0 + row as i32, above, below)
    });
    f.sweeps += 1;
    Ok(SweepStats {
        changed,
        visited: f.entries.len(),
    })
}

/// Random init followed by `params.iterations` sweeps.
pub fn compute_field(space: &(impl MatchSpace + ?Sized), params: &SearchParams, seed: u64) -> Result<Nnf> {
    params.validate()?;
    let mut f = init_random_in(space, seed)?;
    for _ in 0..params.iterations {
        iterate(&mut f, space, params)?;
    }
    Ok(f)
}

/// Fine-level initialization from a coarse field: a random field is run for
/// `merge_iterations` sweeps, then each entry takes the scaled coarse
/// candidate wherever that candidate is strictly better.
pub fn init_upsample_in(
    coarse: &Nnf,
    fine: &(impl MatchSpace + ?Sized),
    merge_iterations: usize,
    params: &SearchParams,
    seed: u64,
) -> Result<Nnf> {
    let (csw, csh) = coarse.source_dims();
    let (ctw, cth) = coarse.target_dims();
    let (fsw, fsh) = super::field::inset_dims(fine.source_rect());
    let (ftw, fth) = fine.target_dims();
    if fsw < csw || fsh < csh || ftw < ctw || fth < cth {
        return Err(Error::DimensionMismatch(format!(
            "coarse field {csw}x{csh}->{ctw}x{cth} is not coarser than {fsw}x{fsh}->{ftw}x{fth}"
        )));
    }
    let down = (csw as f64 / fsw as f64, csh as f64 / fsh as f64);
    let up = (ftw as f64 / ctw as f64, fth as f64 / cth as f64);
    let mut f = init_random_in(fine, seed)?;
    let merge_params = SearchParams {
        iterations: merge_iterations.max(1),
        ..*params
    };
    for _ in 0..merge_iterations {
        iterate(&mut f, fine, &merge_params)?;
    }
    let src = f.source;
    let tgt = f.target;
    for (i, e) in f.entries.iter_mut().enumerate() {
        let z = src.pos(i);
        let zc = coarse.source.clamp(Pos::new(
            (z.x as f64 * down.0).round() as i32,
            (z.y as f64 * down.1).round() as i32,
        ));
        let cand = tgt.clamp(upsample_target(coarse.get(zc).target, up));
        if cand != e.target && fine.allowed(z, cand) {
            let d = fine.distance(z, cand, e.dist);
            if d < e.dist {
                *e = NnfEntry { target: cand, dist: d };
            }
        }
    }
    Ok(f)
}

/// Coarse target scaled to the fine level: `target × scale`.
pub fn upsample_target(t: Pos, scale: (f64, f64)) -> Pos {
    Pos::new(
        (t.x as f64 * scale.0).round() as i32,
        (t.y as f64 * scale.1).round() as i32,
    )
}

pub fn init_upsample(
    coarse: &Nnf,
    fine_a: &ImageBuffer,
    fine_b: &ImageBuffer,
    geom: &PatchGeometry,
    merge_iterations: usize,
    params: &SearchParams,
    seed: u64,
) -> Result<Nnf> {
    init_upsample_in(
        coarse,
        &SsdSpace::new(fine_a, fine_b, *geom)?,
        merge_iterations,
        params,
        seed,
    )
}

/// Approximate nearest-neighbor field from `a` to `b`.
///
/// With `multiscale`, matching starts at the coarsest level of paired area
/// pyramids and each finer level is seeded through [`init_upsample`].
pub fn compute_nnf(
    a: &ImageBuffer,
    b: &ImageBuffer,
    geom: &PatchGeometry,
    params: &SearchParams,
    multiscale: bool,
    seed: u64,
) -> Result<Nnf> {
    params.validate()?;
    let space = SsdSpace::new(a, b, *geom)?;
    if !multiscale {
        return compute_field(&space, params, seed);
    }
    let min_dim = (2 * geom.size()).max(24);
    let levels = |img: &ImageBuffer| {
        pyramid_dims(img.width(), img.height(), 0.5, min_dim)
            .map(|d| d.len())
            .unwrap_or(1)
    };
    let n = levels(a).min(levels(b));
    if n <= 1 {
        return compute_field(&space, params, seed);
    }
    let pa = build_pyramid(a, 0.5, min_dim)?;
    let pb = build_pyramid(b, 0.5, min_dim)?;
    let pa = &pa[pa.len() - n..];
    let pb = &pb[pb.len() - n..];
    let mut field: Option<Nnf> = None;
    for (level, (la, lb)) in pa.iter().zip(pb).enumerate() {
        let level_seed = rng::key(seed, level as u64, 0, 0);
        let f = if level + 1 == n {
            match field {
                Some(c) => init_upsample_in(&c, &space, 1, params, seed)?,
                None => init_random_in(&space, seed)?,
            }
        } else {
            let s = SsdSpace::new(la, lb, *geom)?;
            let mut f = match field {
                Some(c) => init_upsample_in(&c, &s, 1, params, level_seed)?,
                None => init_random_in(&s, level_seed)?,
            };
            for _ in 0..params.iterations {
                iterate(&mut f, &s, params)?;
            }
            f
        };
        field = Some(f);
    }
    let mut f = field.expect("at least one level");
    f.seed = seed;
    for _ in 0..params.iterations {
        iterate(&mut f, &space, params)?;
    }
    Ok(f)
}
