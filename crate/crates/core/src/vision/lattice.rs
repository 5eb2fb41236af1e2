use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::annf::{Filtered, SearchParams};
use crate::error::{Error, Result};
use crate::gpm::{compute_knn_in, DescriptorField, DescriptorSpace};
use crate::image::ImageBuffer;
use crate::patch::{extract_patch, normalize_patch, PatchGeometry, Pos};
use crate::synthesis::Mask;

/// Statistic subtracted from each patch before dividing by its deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Center {
    #[default]
    Mean,
    Median,
}

/// Standardizes a patch about its mean or median, dividing by the standard
/// deviation around that center (floored at `1e-4`).
pub fn normalize_patch_with(v: &mut [f32], center: Center) {
    match center {
        Center::Mean => normalize_patch(v),
        Center::Median => {
            if v.is_empty() {
                return;
            }
            let mut s = v.to_vec();
            s.sort_by(|a, b| a.total_cmp(b));
            let m = s.len();
            let med = if m % 2 == 1 {
                s[m / 2] as f64
            } else {
                0.5 * (s[m / 2 - 1] as f64 + s[m / 2] as f64)
            };
            let var = v.iter().map(|&x| (x as f64 - med).powi(2)).sum::<f64>() / m as f64;
            let std = var.sqrt().max(1e-4);
            for x in v.iter_mut() {
                *x = ((*x as f64 - med) / std) as f32;
            }
        }
    }
}

/// Field of standardized patches.
pub fn normalized_patches(img: &ImageBuffer, geom: &PatchGeometry, center: Center) -> Result<DescriptorField> {
    let rect = geom.valid_rect_of(img);
    if rect.is_empty() {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            required: geom.size(),
        });
    }
    let dim = geom.samples(img.channels());
    Ok(DescriptorField::from_fn(rect, dim, |p, out| {
        out.copy_from_slice(&extract_patch(img, p, geom));
        normalize_patch_with(out, center);
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub k: usize,
    /// Largest per-sample distance between standardized patches for an
    /// offset to enter the pool.
    pub max_patch_dist: f64,
    /// Largest integer coefficient in `a·v1 + b·v2`.
    pub max_coeff: i32,
    /// Inlier tolerance in pixels.
    pub residual: f64,
    /// Fewest inlier offsets for a lattice to be reported.
    pub min_inliers: usize,
    pub iterations: usize,
    pub center: Center,
    pub search: SearchParams,
    pub seed: u64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        LatticeParams {
            k: 16,
            max_patch_dist: 0.1,
            max_coeff: 4,
            residual: 1.5,
            min_inliers: 50,
            iterations: 500,
            center: Center::Mean,
            search: SearchParams {
                iterations: 6,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeResult {
    pub v1: (f64, f64),
    pub v2: (f64, f64),
    pub inlier_mask: Mask,
    pub inliers: usize,
}

type V = (f64, f64);

const SCORING_SAMPLES: usize = 4000;

fn det(a: V, b: V) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn dot(a: V, b: V) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

/// Integer coefficients of `o` in the basis, if it lies within `tol` of a
/// lattice point other than the origin.
fn lattice_coeffs(o: V, v1: V, v2: V, max_coeff: i32, tol: f64) -> Option<(i32, i32)> {
    let d = det(v1, v2);
    if d.abs() < 1e-9 {
        return None;
    }
    let a = det(o, v2) / d;
    let b = det(v1, o) / d;
    let (ai, bi) = (a.round() as i32, b.round() as i32);
    if (ai == 0 && bi == 0) || ai.abs() > max_coeff || bi.abs() > max_coeff {
        return None;
    }
    let rx = o.0 - (ai as f64 * v1.0 + bi as f64 * v2.0);
    let ry = o.1 - (ai as f64 * v1.1 + bi as f64 * v2.1);
    (rx.hypot(ry) <= tol).then_some((ai, bi))
}

/// Lagrange-Gauss reduction followed by a canonical sign: the shorter
/// vector first, each with a positive leading component.
pub fn reduce_basis(mut v1: V, mut v2: V) -> (V, V) {
    for _ in 0..64 {
        if dot(v1, v1) > dot(v2, v2) {
            std::mem::swap(&mut v1, &mut v2);
        }
        let m = (dot(v1, v2) / dot(v1, v1)).round();
        if m == 0.0 {
            break;
        }
        v2 = (v2.0 - m * v1.0, v2.1 - m * v1.1);
    }
    if dot(v1, v1) > dot(v2, v2) {
        std::mem::swap(&mut v1, &mut v2);
    }
    let canon = |v: V| {
        if v.0 < -1e-9 || (v.0.abs() <= 1e-9 && v.1 < 0.0) {
            (-v.0, -v.1)
        } else {
            v
        }
    };
    (canon(v1), canon(v2))
}

fn count_inliers(pool: &[(Pos, V)], v1: V, v2: V, p: &LatticeParams) -> usize {
    pool.iter()
        .filter(|(_, o)| lattice_coeffs(*o, v1, v2, p.max_coeff, p.residual).is_some())
        .count()
}

/// Least-squares basis given integer coefficients for every inlier.
fn refine(pool: &[(Pos, V)], v1: V, v2: V, p: &LatticeParams) -> Option<(V, V)> {
    let (mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0);
    let (mut sax, mut say, mut sbx, mut sby) = (0.0, 0.0, 0.0, 0.0);
    for (_, o) in pool {
        if let Some((a, b)) = lattice_coeffs(*o, v1, v2, p.max_coeff, p.residual) {
            let (a, b) = (a as f64, b as f64);
            saa += a * a;
            sab += a * b;
            sbb += b * b;
            sax += a * o.0;
            say += a * o.1;
            sbx += b * o.0;
            sby += b * o.1;
        }
    }
    let d = saa * sbb - sab * sab;
    if d.abs() < 1e-9 {
        return None;
    }
    let r1 = ((sbb * sax - sab * sbx) / d, (sbb * say - sab * sby) / d);
    let r2 = ((saa * sbx - sab * sax) / d, (saa * sby - sab * say) / d);
    (det(r1, r2).abs() > 1e-6).then_some((r1, r2))
}

/// Finds the translation lattice of a repeated pattern from the offsets of
/// each patch's nearest standardized neighbors.
pub fn detect_lattice(img: &ImageBuffer, geom: &PatchGeometry, params: &LatticeParams) -> Result<LatticeResult> {
    if params.max_coeff < 1 || !(params.residual > 0.0) {
        return Err(Error::param("max_coeff must be >= 1 and residual positive"));
    }
    let field = normalized_patches(img, geom, params.center)?;
    let excl = geom.size() as i32;
    let space = Filtered {
        inner: DescriptorSpace {
            a: &field,
            b: &field,
            distance: crate::gpm::ssd_descriptor,
        },
        filter: move |a: Pos, b: Pos| a.chebyshev(b) >= excl,
    };
    let knn = compute_knn_in(&space, params.k, &params.search, params.seed)?;
    let max_dist = params.max_patch_dist * field.dim() as f64;
    let mut pool: Vec<(Pos, V)> = Vec::new();
    for (z, heap) in knn.iter() {
        for e in heap {
            if e.dist <= max_dist {
                let d = e.target.sub(z);
                pool.push((z, (d.x as f64, d.y as f64)));
            }
        }
    }
    let none = || Error::NotFound("no lattice: too few agreeing repetitions".into());
    if pool.len() < params.min_inliers.max(2) {
        return Err(none());
    }

    let mut rng = SmallRng::seed_from_u64(params.seed ^ 0x1a77_1ce5);
    // hypotheses are scored on a fixed random subset of the pool
    let scoring: Vec<(Pos, V)> = if pool.len() > SCORING_SAMPLES {
        (0..SCORING_SAMPLES)
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .collect()
    } else {
        pool.clone()
    };
    let mut best: Option<(usize, f64, V, V)> = None;
    for _ in 0..params.iterations {
        let a = pool[rng.gen_range(0..pool.len())].1;
        let b = pool[rng.gen_range(0..pool.len())].1;
        if det(a, b).abs() < 1.0 {
            continue;
        }
        let (v1, v2) = reduce_basis(a, b);
        let n = count_inliers(&scoring, v1, v2, params);
        let area = det(v1, v2).abs();
        let better = match best {
            None => true,
            Some((bn, barea, _, _)) => n > bn || (n == bn && area < barea),
        };
        if better {
            best = Some((n, area, v1, v2));
        }
    }
    let (_, _, mut v1, mut v2) = best.ok_or_else(none)?;
    for _ in 0..3 {
        match refine(&pool, v1, v2, params) {
            Some((r1, r2)) => (v1, v2) = reduce_basis(r1, r2),
            None => break,
        }
    }
    let inliers = count_inliers(&pool, v1, v2, params);
    if inliers < params.min_inliers {
        return Err(none());
    }

    let mut mask = Mask::filled(img.width(), img.height(), false);
    for (z, o) in &pool {
        if lattice_coeffs(*o, v1, v2, params.max_coeff, params.residual).is_some() {
            mask.set(z.x as usize, z.y as usize, true);
        }
    }
    Ok(LatticeResult {
        v1,
        v2,
        inlier_mask: mask,
        inliers,
    })
}
