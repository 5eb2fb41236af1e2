use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::annf::SearchParams;
use crate::error::{Error, Result};
use crate::gpm::{compute_gnnf, Filter, GnnfEntry, GnnfParams, PatchMetric};
use crate::image::ImageBuffer;
use crate::patch::{extract_patch, PatchGeometry, Pos};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub theta_range: (f32, f32),
    pub scale_range: (f32, f32),
    pub search: SearchParams,
    /// Independent field searches, merged per patch by distance. Later ones
    /// only run while no transform reaches `min_confidence`.
    pub restarts: usize,
    pub ransac_iterations: usize,
    /// Inlier tolerance in scene pixels.
    pub inlier_threshold: f64,
    /// Smallest inlier fraction reported as a detection.
    pub min_confidence: f64,
    /// Template patches with a smaller standard deviation are ignored.
    pub min_texture: f32,
    pub seed: u64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            theta_range: (-std::f32::consts::PI, std::f32::consts::PI),
            scale_range: (0.5, 2.0),
            search: SearchParams {
                iterations: 8,
                ..Default::default()
            },
            restarts: 4,
            ransac_iterations: 1000,
            inlier_threshold: 3.0,
            min_confidence: 0.3,
            min_texture: 1e-3,
            seed: 0,
        }
    }
}

/// Template-to-scene similarity `q = s·R(θ)·p + t` and the fraction of
/// template patches that agree with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub theta: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (
            self.tx + self.scale * (c * x - s * y),
            self.ty + self.scale * (s * x + c * y),
        )
    }
}

/// Complex-number form `q = a·p + b`.
#[derive(Clone, Copy)]
struct Sim {
    a: (f64, f64),
    b: (f64, f64),
}

impl Sim {
    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.a.0 * p.0 - self.a.1 * p.1 + self.b.0,
            self.a.1 * p.0 + self.a.0 * p.1 + self.b.1,
        )
    }

    fn from_pair(p1: (f64, f64), q1: (f64, f64), p2: (f64, f64), q2: (f64, f64)) -> Option<Sim> {
        let dp = (p2.0 - p1.0, p2.1 - p1.1);
        let dq = (q2.0 - q1.0, q2.1 - q1.1);
        let n = dp.0 * dp.0 + dp.1 * dp.1;
        if n < 1.0 {
            return None;
        }
        let a = ((dq.0 * dp.0 + dq.1 * dp.1) / n, (dq.1 * dp.0 - dq.0 * dp.1) / n);
        let b = (q1.0 - (a.0 * p1.0 - a.1 * p1.1), q1.1 - (a.1 * p1.0 + a.0 * p1.1));
        Some(Sim { a, b })
    }

    /// Least-squares fit over all pairs.
    fn fit(pairs: &[((f64, f64), (f64, f64))]) -> Option<Sim> {
        let n = pairs.len() as f64;
        if pairs.len() < 2 {
            return None;
        }
        let (mut mp, mut mq) = ((0.0, 0.0), (0.0, 0.0));
        for (p, q) in pairs {
            mp = (mp.0 + p.0 / n, mp.1 + p.1 / n);
            mq = (mq.0 + q.0 / n, mq.1 + q.1 / n);
        }
        let (mut num_re, mut num_im, mut den) = (0.0, 0.0, 0.0);
        for (p, q) in pairs {
            let (px, py) = (p.0 - mp.0, p.1 - mp.1);
            let (qx, qy) = (q.0 - mq.0, q.1 - mq.1);
            // conj(p) * q
            num_re += px * qx + py * qy;
            num_im += px * qy - py * qx;
            den += px * px + py * py;
        }
        if den < 1e-9 {
            return None;
        }
        let a = (num_re / den, num_im / den);
        let b = (mq.0 - (a.0 * mp.0 - a.1 * mp.1), mq.1 - (a.1 * mp.0 + a.0 * mp.1));
        Some(Sim { a, b })
    }
}

fn is_inlier(s: &Sim, p: (f64, f64), q: (f64, f64), tol: f64) -> bool {
    let r = s.apply(p);
    (r.0 - q.0).hypot(r.1 - q.1) <= tol
}

fn patch_std(v: &[f32]) -> f32 {
    let n = v.len() as f32;
    let m = v.iter().sum::<f32>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f32>() / n).sqrt()
}

/// Locates `template` in `scene` under rotation and scale: every template
/// patch is matched over the configured ranges with brightness-normalized
/// patches, then a similarity transform is fit to the patch centers with
/// RANSAC.
pub fn detect_object(
    template: &ImageBuffer,
    scene: &ImageBuffer,
    geom: &PatchGeometry,
    params: &DetectParams,
) -> Result<Detection> {
    if !(params.min_confidence >= 0.0 && params.min_confidence <= 1.0) {
        return Err(Error::param("min_confidence must lie in [0, 1]"));
    }
    let gp = GnnfParams {
        search: params.search,
        theta_range: params.theta_range,
        scale_range: params.scale_range,
        filter: Filter::Bilinear,
        metric: PatchMetric::Normalized,
    };
    if params.restarts == 0 {
        return Err(Error::param("restarts must be at least 1"));
    }
    let mut merged: Vec<(Pos, GnnfEntry)> = Vec::new();
    let mut textured: Vec<bool> = Vec::new();
    let mut outcome = Err(Error::NotFound("no consistent transform".into()));
    for run in 0..params.restarts {
        let field = compute_gnnf(template, scene, geom, &gp, rng::key(params.seed, run as u64, 0, 0xde7))?;
        if merged.is_empty() {
            merged = field.iter().map(|(z, e)| (z, *e)).collect();
            textured = merged
                .iter()
                .map(|(z, _)| patch_std(&extract_patch(template, *z, geom)) >= params.min_texture)
                .collect();
        } else {
            for (m, (_, e)) in merged.iter_mut().zip(field.iter()) {
                if e.dist < m.1.dist {
                    m.1 = *e;
                }
            }
        }
        let pairs: Vec<((f64, f64), (f64, f64))> = merged
            .iter()
            .zip(&textured)
            .filter(|(_, &t)| t)
            .map(|((z, e), _)| ((z.x as f64, z.y as f64), (e.xf.x as f64, e.xf.y as f64)))
            .collect();
        if pairs.len() < 2 {
            return Err(Error::NotFound("template has too few textured patches".into()));
        }
        outcome = fit_similarity(&pairs, params, run as u64);
        if outcome.is_ok() {
            break;
        }
    }
    outcome
}

fn fit_similarity(pairs: &[((f64, f64), (f64, f64))], params: &DetectParams, run: u64) -> Result<Detection> {
    let tol = params.inlier_threshold;
    let mut rng = SmallRng::seed_from_u64(rng::key(params.seed ^ 0x00de_7ec7, run, 0, 0));
    let mut best: Option<(usize, Sim)> = None;
    for _ in 0..params.ransac_iterations {
        let (p1, q1) = pairs[rng.gen_range(0..pairs.len())];
        let (p2, q2) = pairs[rng.gen_range(0..pairs.len())];
        let Some(s) = Sim::from_pair(p1, q1, p2, q2) else {
            continue;
        };
        let n = pairs.iter().filter(|(p, q)| is_inlier(&s, *p, *q, tol)).count();
        if best.is_none_or(|(bn, _)| n > bn) {
            best = Some((n, s));
        }
    }
    let (_, mut sim) = best.ok_or_else(|| Error::NotFound("no consistent transform".into()))?;
    for _ in 0..3 {
        let inl: Vec<_> = pairs
            .iter()
            .copied()
            .filter(|(p, q)| is_inlier(&sim, *p, *q, tol))
            .collect();
        match Sim::fit(&inl) {
            Some(s) => sim = s,
            None => break,
        }
    }
    let n = pairs.iter().filter(|(p, q)| is_inlier(&sim, *p, *q, tol)).count();
    let confidence = n as f64 / pairs.len() as f64;
    if confidence < params.min_confidence {
        return Err(Error::NotFound(format!(
            "best transform explains {:.1}% of patches",
            100.0 * confidence
        )));
    }
    Ok(Detection {
        theta: sim.a.1.atan2(sim.a.0),
        scale: sim.a.0.hypot(sim.a.1),
        tx: sim.b.0,
        ty: sim.b.1,
        confidence,
    })
}
