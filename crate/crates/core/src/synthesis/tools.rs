use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, ImageBuffer};
use crate::patch::{Pos, Rect};

use super::constraints::{ConstraintSet, HardRegion};
use super::em::{EmMode, EmOutput, EmSchedule, Engine};
use super::grid::{Grid, LabelMap, Mask};

/// Resizes `s` to `dims` by gradual EM retargeting.
pub fn retarget(
    s: &ImageBuffer,
    dims: (usize, usize),
    constraints: &ConstraintSet,
    schedule: &EmSchedule,
) -> Result<ImageBuffer> {
    Ok(retarget_with(s, dims, constraints, schedule)?.image)
}

pub fn retarget_with(
    s: &ImageBuffer,
    dims: (usize, usize),
    constraints: &ConstraintSet,
    schedule: &EmSchedule,
) -> Result<EmOutput> {
    if constraints.known_t.is_some() {
        return Err(Error::InvalidConstraint(
            "retargeting has no known output pixels".into(),
        ));
    }
    Engine::new(s, constraints, schedule, EmMode::Bidirectional, dims, None)?.run_gradual()
}

/// Fills pixels set in `unknown` with the inverse-squared-distance weighted
/// mean of the known pixels bordering them.
pub fn idw_fill(img: &ImageBuffer, unknown: &Mask) -> Result<ImageBuffer> {
    unknown.require_dims(img.width(), img.height(), "fill mask")?;
    let (w, h) = unknown.dims();
    let mut ring = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if unknown.get(x, y) {
                continue;
            }
            let p = Pos::new(x as i32, y as i32);
            let touches = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(dx, dy)| unknown.at(p.offset(dx, dy)) == Some(true));
            if touches {
                ring.push(p);
            }
        }
    }
    let mut out = img.clone();
    if unknown.count() == 0 {
        return Ok(out);
    }
    if ring.is_empty() {
        return Err(Error::InvalidConstraint("fill region has no known border".into()));
    }
    let c = img.channels();
    let mut acc = vec![0.0f64; c];
    for y in 0..h {
        for x in 0..w {
            if !unknown.get(x, y) {
                continue;
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut wsum = 0.0;
            for b in &ring {
                let d2 = ((b.x - x as i32).pow(2) + (b.y - y as i32).pow(2)) as f64;
                let wt = 1.0 / d2;
                wsum += wt;
                for (a, &v) in acc.iter_mut().zip(img.pixel(b.x as usize, b.y as usize)) {
                    *a += wt * v as f64;
                }
            }
            for (o, a) in out.pixel_mut(x, y).iter_mut().zip(&acc) {
                *o = (a / wsum) as f32;
            }
        }
    }
    Ok(out)
}

/// Checks that a hole can be completed: it must stay off the image border,
/// and every label inside it must also appear outside.
pub fn check_completion(dims: (usize, usize), hole: &Mask, labels: Option<&LabelMap>) -> Result<()> {
    let (w, h) = dims;
    hole.require_dims(w, h, "hole mask")?;
    for y in 0..h {
        for x in 0..w {
            if hole.get(x, y) && (x == 0 || y == 0 || x + 1 == w || y + 1 == h) {
                return Err(Error::InvalidConstraint(format!(
                    "hole touches the image border at ({x}, {y})"
                )));
            }
        }
    }
    if let Some(l) = labels {
        l.require_dims(w, h, "label map")?;
        let outside: std::collections::HashSet<u32> = l
            .data
            .iter()
            .zip(&hole.data)
            .filter(|(_, &hl)| !hl)
            .map(|(&v, _)| v)
            .collect();
        let mut missing: Vec<u32> = l
            .data
            .iter()
            .zip(&hole.data)
            .filter(|(&v, &hl)| hl && v != 0 && !outside.contains(&v))
            .map(|(&v, _)| v)
            .collect();
        missing.sort_unstable();
        if let Some(&v) = missing.first() {
            return Err(Error::UnsupportedLabel(v));
        }
    }
    Ok(())
}

/// Fills the hole by coherence-only EM. Pixels labeled in `labels` may
/// only be synthesized from source patches with the same label.
pub fn complete(s: &ImageBuffer, hole: &Mask, labels: Option<&LabelMap>, schedule: &EmSchedule) -> Result<ImageBuffer> {
    Ok(complete_with(s, hole, labels, schedule)?.image)
}

pub fn complete_with(
    s: &ImageBuffer,
    hole: &Mask,
    labels: Option<&LabelMap>,
    schedule: &EmSchedule,
) -> Result<EmOutput> {
    let (w, h) = (s.width(), s.height());
    check_completion((w, h), hole, labels)?;
    let s = s.to_rgb();
    let known = hole.not();
    let t0 = idw_fill(&s, hole)?;
    let c = ConstraintSet {
        labels_s: labels.cloned(),
        labels_t: labels.cloned(),
        known_t: Some(known.clone()),
        source_valid: Some(known),
        ..Default::default()
    };
    Engine::new(&s, &c, schedule, EmMode::CohereOnly, (w, h), Some(&t0))?.run(&t0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// The region and its destination trade places.
    Swap,
    /// The vacated area is interpolated from its border.
    Interpolate,
    /// The region is copied and the original stays.
    Clone,
}

/// Moves `region` by `offset`, pinning the moved pixels and blending the
/// rest with bidirectional EM.
pub fn reshuffle(
    s: &ImageBuffer,
    region: Rect,
    offset: Pos,
    mode: InitMode,
    constraints: &ConstraintSet,
    schedule: &EmSchedule,
) -> Result<ImageBuffer> {
    let s = s.to_rgb();
    let bounds = Rect::new(0, 0, s.width() as i32, s.height() as i32);
    if region.is_empty() || !bounds.contains_rect(&region) {
        return Err(Error::InvalidConstraint(format!(
            "region {region:?} is outside the image"
        )));
    }
    let dest = region.translate(offset);
    if !bounds.contains_rect(&dest) {
        return Err(Error::InvalidConstraint(format!(
            "moved region {dest:?} escapes the image"
        )));
    }
    let mut t0 = s.clone();
    let vacated: Vec<Pos> = region.iter().filter(|p| !dest.contains(*p)).collect();
    if mode == InitMode::Swap {
        for &p in &vacated {
            let q = p.add(offset);
            t0.pixel_mut(p.x as usize, p.y as usize)
                .copy_from_slice(s.pixel(q.x as usize, q.y as usize));
        }
    }
    for q in dest.iter() {
        let p = q.sub(offset);
        t0.pixel_mut(q.x as usize, q.y as usize)
            .copy_from_slice(s.pixel(p.x as usize, p.y as usize));
    }
    if mode == InitMode::Interpolate {
        let mut m = Grid::filled(s.width(), s.height(), false);
        for &p in &vacated {
            m.set(p.x as usize, p.y as usize, true);
        }
        t0 = idw_fill(&t0, &m)?;
    }
    let mut c = constraints.clone();
    c.hard.push(HardRegion { source: region, offset });
    Ok(em_bidirectional(&s, &t0, &c, schedule)?.image)
}

fn em_bidirectional(s: &ImageBuffer, t0: &ImageBuffer, c: &ConstraintSet, schedule: &EmSchedule) -> Result<EmOutput> {
    Engine::new(
        s,
        c,
        schedule,
        EmMode::Bidirectional,
        (t0.width(), t0.height()),
        Some(t0),
    )?
    .run(t0)
}

/// `r` scaled by `k` about its center.
pub fn scale_about_center(r: Rect, k: f64) -> Rect {
    let w = ((r.width() as f64 * k).round() as i32).max(1);
    let h = ((r.height() as f64 * k).round() as i32).max(1);
    let cx = (r.x0 + r.x1) as f64 / 2.0;
    let cy = (r.y0 + r.y1) as f64 / 2.0;
    let x0 = (cx - w as f64 / 2.0).round() as i32;
    let y0 = (cy - h as f64 / 2.0).round() as i32;
    Rect::new(x0, y0, x0 + w, y0 + h)
}

/// Grows or shrinks the object in `region` while keeping its texture scale:
/// the region is resized in small steps and, after each step, its interior
/// is resynthesized from the original object and the uncovered surroundings
/// from the original background.
pub fn local_scale(s: &ImageBuffer, region: Rect, factor: f64, schedule: &EmSchedule) -> Result<ImageBuffer> {
    schedule.validate()?;
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::param(format!("scale factor {factor} must be positive")));
    }
    let s = s.to_rgb();
    let (w, h) = (s.width(), s.height());
    let bounds = Rect::new(0, 0, w as i32, h as i32);
    let fin = scale_about_center(region, factor);
    if region.is_empty() || !bounds.contains_rect(&region) || !bounds.contains_rect(&fin) {
        return Err(Error::InvalidConstraint(format!(
            "region {region:?} scaled by {factor} escapes the image"
        )));
    }
    let mut labels_s = Grid::filled(w, h, 2u32);
    for p in region.iter() {
        labels_s.set(p.x as usize, p.y as usize, 1);
    }
    let mut t = s.clone();
    let mut prev = region;
    let mut k = 1.0f64;
    while fin != prev {
        k = if factor > 1.0 {
            (k / schedule.gradual_step).min(factor)
        } else {
            (k * schedule.gradual_step).max(factor)
        };
        let cur = scale_about_center(region, k);
        if cur == prev {
            continue;
        }
        let patch = t.crop(
            prev.x0 as usize,
            prev.y0 as usize,
            prev.width() as usize,
            prev.height() as usize,
        )?;
        let scaled = resize_bilinear(&patch, cur.width() as usize, cur.height() as usize);
        for p in cur.iter() {
            t.pixel_mut(p.x as usize, p.y as usize)
                .copy_from_slice(scaled.pixel((p.x - cur.x0) as usize, (p.y - cur.y0) as usize));
        }
        let mut known = Grid::filled(w, h, true);
        let mut labels_t = Grid::filled(w, h, 0u32);
        for p in region.iter() {
            known.set(p.x as usize, p.y as usize, false);
            labels_t.set(p.x as usize, p.y as usize, 2);
        }
        for p in cur.iter() {
            known.set(p.x as usize, p.y as usize, false);
            labels_t.set(p.x as usize, p.y as usize, 1);
        }
        let c = ConstraintSet {
            labels_s: Some(labels_s.clone()),
            labels_t: Some(labels_t),
            known_t: Some(known),
            ..Default::default()
        };
        t = Engine::new(&s, &c, schedule, EmMode::CohereOnly, (w, h), Some(&t))?
            .run(&t)?
            .image;
        prev = cur;
    }
    Ok(t)
}
