use crate::annf::Nnf;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::{PatchGeometry, Pos};

use super::grid::Grid;

/// M-step: every output pixel becomes the weighted mean of the source
/// colors voted onto it by T→S patches covering it and by S→T patches
/// landing on it. A vote's weight is the source weight at the center of the
/// voting source patch. Pixels without votes keep their current color.
pub fn vote_and_average(
    t_current: &ImageBuffer,
    s_to_t: Option<&Nnf>,
    t_to_s: Option<&Nnf>,
    s: &ImageBuffer,
    geom: &PatchGeometry,
    weights: Option<&Grid<f32>>,
) -> Result<ImageBuffer> {
    vote_terms(t_current, s_to_t, t_to_s, s, geom, weights, (1.0, 1.0))
}

/// Voting with separate multipliers for the completeness (S→T) and
/// coherence (T→S) votes.
pub(crate) fn vote_terms(
    t_current: &ImageBuffer,
    s_to_t: Option<&Nnf>,
    t_to_s: Option<&Nnf>,
    s: &ImageBuffer,
    geom: &PatchGeometry,
    weights: Option<&Grid<f32>>,
    term: (f64, f64),
) -> Result<ImageBuffer> {
    let c = s.channels();
    if t_current.channels() != c {
        return Err(Error::ChannelCount {
            expected: c,
            found: t_current.channels(),
        });
    }
    if let Some(w) = weights {
        w.require_dims(s.width(), s.height(), "weight map")?;
    }
    let (tw, th) = (t_current.width(), t_current.height());
    let s_rect = geom.valid_rect_of(s);
    let t_rect = geom.valid_rect(tw, th);
    if let Some(f) = t_to_s {
        if !t_rect.contains_rect(&f.source_rect()) || !s_rect.contains_rect(&f.target_rect()) {
            return Err(Error::DimensionMismatch("T→S field does not fit the images".into()));
        }
    }
    if let Some(f) = s_to_t {
        if !s_rect.contains_rect(&f.source_rect()) || !t_rect.contains_rect(&f.target_rect()) {
            return Err(Error::DimensionMismatch("S→T field does not fit the images".into()));
        }
    }
    let mut acc = vec![0.0f64; tw * th * c];
    let mut wsum = vec![0.0f64; tw * th];
    let h = geom.half();
    let weight = |p: Pos| weights.map_or(1.0, |g| g.get(p.x as usize, p.y as usize) as f64);
    let mut splat = |tp: Pos, sp: Pos, k: f64| {
        let wt = k * weight(sp);
        for dy in -h..=h {
            let ty = (tp.y + dy) as usize;
            let sy = (sp.y + dy) as usize;
            for dx in -h..=h {
                let ti = ty * tw + (tp.x + dx) as usize;
                let src = s.pixel((sp.x + dx) as usize, sy);
                for ch in 0..c {
                    acc[ti * c + ch] += wt * src[ch] as f64;
                }
                wsum[ti] += wt;
            }
        }
    };
    if let Some(f) = t_to_s {
        for (tp, e) in f.iter() {
            splat(tp, e.target, term.1);
        }
    }
    if let Some(f) = s_to_t {
        for (sp, e) in f.iter() {
            splat(e.target, sp, term.0);
        }
    }
    let mut out = t_current.clone();
    for (i, px) in out.data_mut().chunks_exact_mut(c).enumerate() {
        if wsum[i] > 0.0 {
            for ch in 0..c {
                px[ch] = (acc[i * c + ch] / wsum[i]) as f32;
            }
        }
    }
    Ok(out)
}
