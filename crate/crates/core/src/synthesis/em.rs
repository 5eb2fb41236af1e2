use std::collections::HashSet;

use rand::rngs::SmallRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::annf::{init_random_in, inset_dims, iterate, Filtered, MatchSpace, Nnf, NnfEntry, SearchParams, SsdSpace};
use crate::error::{Error, Result};
use crate::image::{resize, to_lab, ImageBuffer};
use crate::patch::{PatchGeometry, Pos, Rect};
use crate::rng;

use super::bds::BdsScore;
use super::constraints::{rasterize_segment, scale_rect, segment_distance, ConstraintSet, ModelConstraint};
use super::grid::{Grid, LabelMap, Mask};
use super::model::{fit_and_project_model, Correspondence, FittedModel, RansacParams};
use super::progress;
use super::vote::vote_terms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmSchedule {
    pub patch_size: usize,
    pub pyramid_factor: f64,
    /// Smallest side of the coarsest level.
    pub min_dim: usize,
    /// EM iterations at the coarsest level; halved per finer level.
    pub coarse_iters: usize,
    /// EM iterations at the finest level, and the floor for the others.
    pub fine_iters: usize,
    /// Per-step size ratio of gradual resizing.
    pub gradual_step: f64,
    /// Random-search radius at the finest level of a multi-level run.
    pub final_radius: Option<f64>,
    /// Matching sweeps per E-step.
    pub e_sweeps: usize,
    pub threads: usize,
    pub seed: u64,
    pub ransac: RansacParams,
}

impl Default for EmSchedule {
    fn default() -> Self {
        EmSchedule {
            patch_size: 7,
            pyramid_factor: 0.5,
            min_dim: 32,
            coarse_iters: 20,
            fine_iters: 4,
            gradual_step: 0.9,
            final_radius: Some(1.0),
            e_sweeps: 2,
            threads: 1,
            seed: 0,
            ransac: RansacParams::default(),
        }
    }
}

impl EmSchedule {
    pub fn validate(&self) -> Result<()> {
        PatchGeometry::new(self.patch_size)?;
        if !(self.pyramid_factor > 0.0 && self.pyramid_factor < 1.0) {
            return Err(Error::param("pyramid factor must lie in (0, 1)"));
        }
        if !(self.gradual_step > 0.0 && self.gradual_step < 1.0) {
            return Err(Error::param("gradual step must lie in (0, 1)"));
        }
        if self.coarse_iters == 0 || self.fine_iters == 0 || self.e_sweeps == 0 || self.threads == 0 {
            return Err(Error::param("iteration, sweep and thread counts must be at least 1"));
        }
        if self.final_radius.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::param("final radius must be positive"));
        }
        Ok(())
    }

    /// EM iterations at level `j` (0 = coarsest) of `n`.
    pub fn level_iters(&self, j: usize, n: usize) -> usize {
        if n == 1 {
            self.coarse_iters
        } else if j + 1 == n {
            self.fine_iters
        } else {
            (self.coarse_iters >> j.min(31)).max(self.fine_iters)
        }
    }

    /// Source and output dimensions per level, coarsest first.
    pub fn plan(&self, s: (usize, usize), t: (usize, usize)) -> Vec<((usize, usize), (usize, usize))> {
        let m = s.0.min(s.1).min(t.0).min(t.1) as f64;
        let mut n = 1;
        while (m * self.pyramid_factor.powi(n)).round() >= self.min_dim as f64 {
            n += 1;
        }
        let p = self.patch_size;
        let sc = |d: (usize, usize), f: f64| {
            (
                ((d.0 as f64 * f).round() as usize).max(p),
                ((d.1 as f64 * f).round() as usize).max(p),
            )
        };
        (0..n)
            .map(|j| {
                let f = self.pyramid_factor.powi(n - 1 - j);
                (sc(s, f), sc(t, f))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmMode {
    /// Completeness and coherence votes.
    Bidirectional,
    /// Coherence votes only (completion).
    CohereOnly,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelTrace {
    pub source_dims: (usize, usize),
    pub target_dims: (usize, usize),
    /// Approximate score after each E-step.
    pub scores: Vec<BdsScore>,
    /// Labeled coordinates whose match carried a different label.
    pub label_violations: usize,
    pub fit_failures: usize,
    pub max_inlier_move: f64,
}

#[derive(Debug, Clone)]
pub struct EmOutput {
    pub image: ImageBuffer,
    pub levels: Vec<LevelTrace>,
    /// Final output→source field.
    pub t_to_s: Nnf,
    /// Final source→output field (bidirectional runs).
    pub s_to_t: Option<Nnf>,
}

/// Coarse-to-fine EM from the initial output `t0` (same size as the
/// result), matching in Lab and voting in the source color space.
pub fn em_optimize(
    s: &ImageBuffer,
    t0: &ImageBuffer,
    schedule: &EmSchedule,
    constraints: &ConstraintSet,
) -> Result<ImageBuffer> {
    Ok(em_optimize_with(s, t0, schedule, constraints, EmMode::Bidirectional)?.image)
}

pub fn em_optimize_with(
    s: &ImageBuffer,
    t0: &ImageBuffer,
    schedule: &EmSchedule,
    constraints: &ConstraintSet,
    mode: EmMode,
) -> Result<EmOutput> {
    let engine = Engine::new(s, constraints, schedule, mode, (t0.width(), t0.height()), Some(t0))?;
    engine.run(t0)
}

struct State {
    t: ImageBuffer,
    ts: Nnf,
    st: Option<Nnf>,
}

struct Level {
    s: ImageBuffer,
    s_lab: ImageBuffer,
    tdims: (usize, usize),
    weights: Grid<f32>,
    labels_s: Option<LabelMap>,
    labels_t: Option<LabelMap>,
    source_ok: Mask,
    known: Option<(Mask, ImageBuffer)>,
    pins: Vec<(Rect, Pos)>,
    models: Vec<ModelConstraint>,
    radius: Option<f64>,
    iters: usize,
    geom: PatchGeometry,
}

/// Centers whose whole patch is set in `m`.
fn patch_ok(m: &Mask, half: i32) -> Mask {
    let (w, h) = m.dims();
    let mut integral = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + integral[(y + 1) * (w + 1) + x]
                - integral[y * (w + 1) + x]
                + u32::from(!m.get(x, y));
        }
    }
    let mut out = Grid::filled(w, h, false);
    let hh = half as usize;
    for y in hh..h.saturating_sub(hh) {
        for x in hh..w.saturating_sub(hh) {
            let (x0, y0, x1, y1) = (x - hh, y - hh, x + hh + 1, y + hh + 1);
            let bad = integral[y1 * (w + 1) + x1] + integral[y0 * (w + 1) + x0]
                - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0];
            out.set(x, y, bad == 0);
        }
    }
    out
}

fn pf(p: Pos) -> (f64, f64) {
    (p.x as f64, p.y as f64)
}

fn pr(p: (f64, f64)) -> Pos {
    Pos::new(p.0.round() as i32, p.1.round() as i32)
}

fn lab_at(l: &LabelMap, p: Pos) -> u32 {
    l.get(p.x as usize, p.y as usize)
}

impl Level {
    fn allow_ts(&self, t: Pos, s: Pos) -> bool {
        if !self.source_ok.get(s.x as usize, s.y as usize) {
            return false;
        }
        match (&self.labels_t, &self.labels_s) {
            (Some(lt), Some(ls)) => {
                let l = lab_at(lt, t);
                l == 0 || lab_at(ls, s) == l
            }
            _ => true,
        }
    }

    fn allow_st(&self, s: Pos, t: Pos) -> bool {
        match (&self.labels_s, &self.labels_t) {
            (Some(ls), Some(lt)) => {
                let l = lab_at(ls, s);
                l == 0 || lab_at(lt, t) == l
            }
            _ => true,
        }
    }

    fn ts_space<'b>(&'b self, t_lab: &'b ImageBuffer) -> Result<impl MatchSpace + 'b> {
        Ok(Filtered {
            inner: SsdSpace::new(t_lab, &self.s_lab, self.geom)?,
            filter: move |t: Pos, s: Pos| self.allow_ts(t, s),
        })
    }

    fn st_space<'b>(&'b self, t_lab: &'b ImageBuffer) -> Result<impl MatchSpace + 'b> {
        Ok(Filtered {
            inner: SsdSpace::new(&self.s_lab, t_lab, self.geom)?,
            filter: move |s: Pos, t: Pos| self.allow_st(s, t),
        })
    }

    /// Pins hard-region entries and, where the output pixel neighborhood is
    /// known, the identity match.
    fn lock_ts(&self, f: &mut Nnf, space: &impl MatchSpace) {
        let src = f.source_rect();
        let tgt = f.target_rect();
        let mut locked = vec![false; f.len()];
        let mut pin = |f: &mut Nnf, t: Pos, s: Pos| {
            locked[src.index(t)] = true;
            *f.get_mut(t) = NnfEntry {
                target: s,
                dist: space.distance(t, s, f64::INFINITY),
            };
        };
        if let Some((km, _)) = &self.known {
            if (self.s.width(), self.s.height()) == self.tdims {
                let kok = patch_ok(km, self.geom.half());
                for t in src.iter() {
                    if kok.get(t.x as usize, t.y as usize) && tgt.contains(t) && self.allow_ts(t, t) {
                        pin(f, t, t);
                    }
                }
            }
        }
        for &(r, off) in &self.pins {
            for q in r.translate(off).intersect(&src).iter() {
                let s = q.sub(off);
                if tgt.contains(s) {
                    pin(f, q, s);
                }
            }
        }
        f.set_locked(Some(locked));
    }

    /// Copies known and pinned pixels into `t`.
    fn restore(&self, t: &mut ImageBuffer) {
        if let Some((km, kimg)) = &self.known {
            for y in 0..km.height {
                for x in 0..km.width {
                    if km.get(x, y) {
                        t.pixel_mut(x, y).copy_from_slice(kimg.pixel(x, y));
                    }
                }
            }
        }
        let trect = Rect::new(0, 0, t.width() as i32, t.height() as i32);
        let srect = Rect::new(0, 0, self.s.width() as i32, self.s.height() as i32);
        for &(r, off) in &self.pins {
            for q in r.translate(off).intersect(&trect).iter() {
                let s = q.sub(off);
                if srect.contains(s) {
                    t.pixel_mut(q.x as usize, q.y as usize)
                        .copy_from_slice(self.s.pixel(s.x as usize, s.y as usize));
                }
            }
        }
    }

    fn label_violations(&self, ts: &Nnf, st: Option<&Nnf>) -> usize {
        let (Some(ls), Some(lt)) = (&self.labels_s, &self.labels_t) else {
            return 0;
        };
        let mut n = ts
            .iter()
            .filter(|(t, e)| {
                let l = lab_at(lt, *t);
                l != 0 && lab_at(ls, e.target) != l
            })
            .count();
        if let Some(f) = st {
            n += f
                .iter()
                .filter(|(s, e)| {
                    let l = lab_at(ls, *s);
                    l != 0 && lab_at(lt, e.target) != l
                })
                .count();
        }
        n
    }

    fn vote(&self, t: &ImageBuffer, st: Option<&Nnf>, ts: &Nnf) -> Result<ImageBuffer> {
        let term = match st {
            Some(f) => (1.0 / f.len() as f64, 1.0 / ts.len() as f64),
            None => (0.0, 1.0),
        };
        let mut out = vote_terms(t, st, Some(ts), &self.s, &self.geom, Some(&self.weights), term)?;
        self.restore(&mut out);
        Ok(out)
    }
}

/// Carries a field to new source/target sizes, keeping offsets.
fn rescale_field(old: &Nnf, space: &impl MatchSpace, seed: u64) -> Result<Nnf> {
    let (osw, osh) = old.source_dims();
    let (otw, oth) = old.target_dims();
    let src = space.source_rect();
    let tgt = space.target_rect();
    let (nsw, nsh) = inset_dims(src);
    let (ntw, nth) = inset_dims(tgt);
    let rs = (nsw as f64 / osw as f64, nsh as f64 / osh as f64);
    let rt = (ntw as f64 / otw as f64, nth as f64 / oth as f64);
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(src.area());
    for z in src.iter() {
        let zc = old.source_rect().clamp(Pos::new(
            (z.x as f64 / rs.0).round() as i32,
            (z.y as f64 / rs.1).round() as i32,
        ));
        let t = old.get(zc).target;
        let rest = z.sub(Pos::new(
            (zc.x as f64 * rs.0).round() as i32,
            (zc.y as f64 * rs.1).round() as i32,
        ));
        let mut cand =
            tgt.clamp(Pos::new((t.x as f64 * rt.0).round() as i32, (t.y as f64 * rt.1).round() as i32).add(rest));
        if !space.allowed(z, cand) {
            cand = space
                .sample_target(z, &mut rng)
                .ok_or_else(|| Error::InvalidConstraint(format!("no allowed match for {z}")))?;
        }
        entries.push(NnfEntry {
            target: cand,
            dist: space.distance(z, cand, f64::INFINITY),
        });
    }
    Nnf::from_entries(src, tgt, entries, seed)
}

pub(crate) fn next_dims(cur: (usize, usize), tgt: (usize, usize), step: f64) -> (usize, usize) {
    let axis = |c: usize, t: usize| {
        if c > t {
            t.max(((c as f64 * step).round() as usize).min(c - 1))
        } else if c < t {
            t.min(((c as f64 / step).round() as usize).max(c + 1))
        } else {
            c
        }
    };
    (axis(cur.0, tgt.0), axis(cur.1, tgt.1))
}

pub(crate) struct Engine<'a> {
    s: ImageBuffer,
    c: &'a ConstraintSet,
    sched: &'a EmSchedule,
    geom: PatchGeometry,
    mode: EmMode,
    weights: Grid<f32>,
    t_full: (usize, usize),
    t_known: Option<ImageBuffer>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        s: &ImageBuffer,
        c: &'a ConstraintSet,
        sched: &'a EmSchedule,
        mode: EmMode,
        t_full: (usize, usize),
        t0: Option<&ImageBuffer>,
    ) -> Result<Self> {
        sched.validate()?;
        let geom = PatchGeometry::new(sched.patch_size)?;
        let p = geom.size();
        for (w, h) in [(s.width(), s.height()), t_full] {
            if w < p || h < p {
                return Err(Error::ImageTooSmall {
                    width: w,
                    height: h,
                    required: p,
                });
            }
        }
        c.validate((s.width(), s.height()), t_full)?;
        if let Some(t0) = t0 {
            if (t0.width(), t0.height()) != t_full {
                return Err(Error::DimensionMismatch("initial output has the wrong size".into()));
            }
        }
        let t_known = match (&c.known_t, t0) {
            (Some(_), Some(t0)) => Some(t0.to_rgb()),
            (Some(_), None) => return Err(Error::InvalidConstraint("known pixels need an initial output".into())),
            _ => None,
        };
        Ok(Engine {
            s: s.to_rgb(),
            c,
            sched,
            geom,
            mode,
            weights: c.effective_weights(s.width(), s.height()),
            t_full,
            t_known,
        })
    }

    fn level(&self, sd: (usize, usize), td: (usize, usize), iters: usize, radius: Option<f64>) -> Result<Level> {
        let s = resize(&self.s, sd.0, sd.1);
        let s_lab = to_lab(&s)?;
        let sf = (
            sd.0 as f64 / self.s.width() as f64,
            sd.1 as f64 / self.s.height() as f64,
        );
        let tf = (td.0 as f64 / self.t_full.0 as f64, td.1 as f64 / self.t_full.1 as f64);
        let valid = match &self.c.source_valid {
            Some(m) => m.shrink_all(sd.0, sd.1),
            None => Grid::filled(sd.0, sd.1, true),
        };
        let source_ok = patch_ok(&valid, self.geom.half());
        if source_ok.count() == 0 {
            return Err(Error::InvalidConstraint(format!(
                "no usable source patches at {}x{}",
                sd.0, sd.1
            )));
        }
        let known = match (&self.c.known_t, &self.t_known) {
            (Some(m), Some(img)) => Some((m.shrink_all(td.0, td.1), resize(img, td.0, td.1))),
            _ => None,
        };
        let labels_s = self.c.labels_s.as_ref().map(|l| l.shrink_labels(sd.0, sd.1));
        let mut labels_t = self.c.labels_t.as_ref().map(|l| l.shrink_labels(td.0, td.1));
        if let (Some(ls), Some(lt)) = (&labels_s, &mut labels_t) {
            let present: HashSet<u32> = (0..sd.1)
                .flat_map(|y| (0..sd.0).map(move |x| (x, y)))
                .filter(|&(x, y)| source_ok.get(x, y))
                .map(|(x, y)| ls.get(x, y))
                .collect();
            for v in lt.data.iter_mut() {
                if *v != 0 && !present.contains(v) {
                    *v = 0;
                }
            }
        }
        let pins = self
            .c
            .hard
            .iter()
            .map(|h| {
                let off = Pos::new(
                    (h.offset.x as f64 * tf.0).round() as i32,
                    (h.offset.y as f64 * tf.1).round() as i32,
                );
                (scale_rect(h.source, sf), off)
            })
            .collect();
        let models = self.c.models.iter().map(|m| m.scaled(sf, tf)).collect();
        Ok(Level {
            weights: self.weights.resample_nearest(sd.0, sd.1),
            s,
            s_lab,
            tdims: td,
            labels_s,
            labels_t,
            source_ok,
            known,
            pins,
            models,
            radius,
            iters,
            geom: self.geom,
        })
    }

    fn init_state(&self, lv: &Level, mut t: ImageBuffer, seed: u64) -> Result<State> {
        lv.restore(&mut t);
        let t_lab = to_lab(&t)?;
        let ts_space = lv.ts_space(&t_lab)?;
        let mut ts = init_random_in(&ts_space, seed)?;
        lv.lock_ts(&mut ts, &ts_space);
        let st = match self.mode {
            EmMode::Bidirectional => Some(init_random_in(&lv.st_space(&t_lab)?, rng::key(seed, 1, 0, 0))?),
            EmMode::CohereOnly => None,
        };
        Ok(State { t, ts, st })
    }

    fn transfer_state(&self, prev: State, lv: &Level, seed: u64) -> Result<State> {
        let mut guess = resize(&prev.t, lv.tdims.0, lv.tdims.1);
        lv.restore(&mut guess);
        let t_lab = to_lab(&guess)?;
        let ts_space = lv.ts_space(&t_lab)?;
        let mut ts = rescale_field(&prev.ts, &ts_space, seed)?;
        lv.lock_ts(&mut ts, &ts_space);
        let st = match &prev.st {
            Some(f) => Some(rescale_field(f, &lv.st_space(&t_lab)?, rng::key(seed, 1, 0, 0))?),
            None => None,
        };
        let t = lv.vote(&guess, st.as_ref(), &ts)?;
        Ok(State { t, ts, st })
    }

    fn run_level(&self, lv: &Level, st: &mut State, seed: u64, trace: &mut LevelTrace) -> Result<()> {
        let params = SearchParams {
            iterations: 1,
            alpha: 0.5,
            radius: lv.radius,
            early_stop: true,
            threads: self.sched.threads,
        };
        for it in 0..lv.iters {
            let t_lab = to_lab(&st.t)?;
            let ts_space = lv.ts_space(&t_lab)?;
            let st_space = lv.st_space(&t_lab)?;
            st.ts.refresh_distances(&ts_space);
            for _ in 0..self.sched.e_sweeps {
                iterate(&mut st.ts, &ts_space, &params)?;
            }
            if let Some(f) = st.st.as_mut() {
                f.refresh_distances(&st_space);
                for _ in 0..self.sched.e_sweeps {
                    iterate(f, &st_space, &params)?;
                }
            }
            trace.scores.push(BdsScore {
                complete: st.st.as_ref().map_or(0.0, |f| f.mean_distance()),
                cohere: st.ts.mean_distance(),
            });
            trace.label_violations += lv.label_violations(&st.ts, st.st.as_ref());
            if !lv.models.is_empty() {
                self.apply_models(lv, st, &ts_space, &st_space, rng::key(seed, it as u64, 2, 0), trace);
            }
            st.t = lv.vote(&st.t, st.st.as_ref(), &st.ts)?;
            progress::tick();
        }
        Ok(())
    }

    fn apply_models(
        &self,
        lv: &Level,
        st: &mut State,
        ts_space: &impl MatchSpace,
        st_space: &impl MatchSpace,
        seed: u64,
        trace: &mut LevelTrace,
    ) {
        let set_ts = |f: &mut Nnf, t: Pos, s: Pos| {
            if !f.is_locked(t) && ts_space.allowed(t, s) {
                *f.get_mut(t) = NnfEntry {
                    target: s,
                    dist: ts_space.distance(t, s, f64::INFINITY),
                };
            }
        };
        let set_st = |f: &mut Nnf, s: Pos, t: Pos| {
            let t = f.target_rect().clamp(t);
            if st_space.allowed(s, t) {
                *f.get_mut(s) = NnfEntry {
                    target: t,
                    dist: st_space.distance(s, t, f64::INFINITY),
                };
            }
        };
        for (k, m) in lv.models.iter().enumerate() {
            let mut corr = Vec::new();
            let mut p_list = Vec::new();
            let mut q_list = Vec::new();
            let on_model = |p: Pos| match *m {
                ModelConstraint::Line { a, b, .. } => segment_distance(pf(p), a, b) <= 0.5,
                ModelConstraint::Region { rect, .. } => rect.contains(p),
            };
            if let Some(f) = &st.st {
                let ps: Vec<Pos> = match *m {
                    ModelConstraint::Line { a, b, .. } => rasterize_segment(a, b),
                    ModelConstraint::Region { rect, .. } => rect.intersect(&f.source_rect()).iter().collect(),
                };
                for p in ps.into_iter().filter(|&p| f.source_rect().contains(p)) {
                    p_list.push(p);
                    corr.push(Correspondence {
                        source: pf(p),
                        target: pf(f.get(p).target),
                    });
                }
            }
            for (t, e) in st.ts.iter() {
                if on_model(e.target) {
                    q_list.push((t, e.target));
                    corr.push(Correspondence {
                        source: pf(e.target),
                        target: pf(t),
                    });
                }
            }
            let fit = match fit_and_project_model(&corr, &m.spec(), &self.sched.ransac, rng::key(seed, k as u64, 0, 0))
            {
                Ok(f) => f,
                Err(_) => {
                    trace.fit_failures += 1;
                    continue;
                }
            };
            trace.max_inlier_move = trace.max_inlier_move.max(fit.max_inlier_move);
            if let Some(f) = st.st.as_mut() {
                for (i, &p) in p_list.iter().enumerate() {
                    set_st(f, p, pr(fit.projected[i]));
                }
            }
            match (*m, fit.model) {
                (ModelConstraint::Line { .. }, FittedModel::Line(l)) => {
                    // Shift the field in a band around the line so whole patches
                    // follow their projected centers.
                    let off = p_list.len();
                    let dir = l.direction();
                    let along = |p: Pos| dir.0 * p.x as f64 + dir.1 * p.y as f64;
                    let mut shifts: Vec<(f64, Pos)> = q_list
                        .iter()
                        .enumerate()
                        .map(|(j, &(t, _))| (along(t), pr(fit.projected[off + j]).sub(t)))
                        .collect();
                    if shifts.is_empty() {
                        continue;
                    }
                    shifts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let band = lv.geom.size() as f64;
                    let (u0, u1) = (shifts[0].0 - band, shifts[shifts.len() - 1].0 + band);
                    let old = st.ts.clone();
                    let src = old.source_rect();
                    for x in src.iter() {
                        let u = along(x);
                        if l.distance(pf(x)) > band || u < u0 || u > u1 {
                            continue;
                        }
                        let i = shifts.partition_point(|s| s.0 < u);
                        let d = match (i.checked_sub(1).map(|k| shifts[k]), shifts.get(i)) {
                            (Some(a), Some(b)) => {
                                if u - a.0 <= b.0 - u {
                                    a.1
                                } else {
                                    b.1
                                }
                            }
                            (Some(a), None) => a.1,
                            (None, Some(b)) => b.1,
                            (None, None) => continue,
                        };
                        if d != Pos::new(0, 0) {
                            set_ts(&mut st.ts, x, old.get(src.clamp(x.sub(d))).target);
                        }
                    }
                }
                (ModelConstraint::Region { rect, .. }, FittedModel::Similarity { scale, tx, ty }) => {
                    let img = Rect::new(
                        (scale * rect.x0 as f64 + tx).floor() as i32,
                        (scale * rect.y0 as f64 + ty).floor() as i32,
                        (scale * rect.x1 as f64 + tx).ceil() as i32,
                        (scale * rect.y1 as f64 + ty).ceil() as i32,
                    );
                    let srect = st.ts.target_rect();
                    for q in img.intersect(&st.ts.source_rect()).iter() {
                        let sp = pr(((q.x as f64 - tx) / scale, (q.y as f64 - ty) / scale));
                        if rect.contains(sp) && srect.contains(sp) {
                            set_ts(&mut st.ts, q, sp);
                        }
                    }
                }
                _ => {}
            }
        }
    }

    fn finish(state: State, levels: Vec<LevelTrace>) -> EmOutput {
        EmOutput {
            image: state.t,
            levels,
            t_to_s: state.ts,
            s_to_t: state.st,
        }
    }

    /// Coarse-to-fine run starting from `t0` at the coarsest level.
    pub(crate) fn run(&self, t0: &ImageBuffer) -> Result<EmOutput> {
        let t0 = t0.to_rgb();
        let plan = self.sched.plan((self.s.width(), self.s.height()), self.t_full);
        let n = plan.len();
        progress::plan((0..n).map(|j| self.sched.level_iters(j, n)).sum());
        let mut state: Option<State> = None;
        let mut levels = Vec::with_capacity(n);
        for (j, &(sd, td)) in plan.iter().enumerate() {
            let radius = if n > 1 && j + 1 == n {
                self.sched.final_radius
            } else {
                None
            };
            let lv = self.level(sd, td, self.sched.level_iters(j, n), radius)?;
            let seed = rng::key(self.sched.seed, j as u64, 0, 0);
            let mut st = match state.take() {
                None => self.init_state(&lv, resize(&t0, td.0, td.1), seed)?,
                Some(prev) => self.transfer_state(prev, &lv, seed)?,
            };
            let mut tr = LevelTrace {
                source_dims: sd,
                target_dims: td,
                ..Default::default()
            };
            self.run_level(&lv, &mut st, seed, &mut tr)?;
            levels.push(tr);
            state = Some(st);
        }
        Ok(Self::finish(state.expect("at least one level"), levels))
    }

    /// Gradual resizing from the source size to the output size at the
    /// coarsest level, then coarse-to-fine refinement.
    pub(crate) fn run_gradual(&self) -> Result<EmOutput> {
        let plan = self.sched.plan((self.s.width(), self.s.height()), self.t_full);
        let n = plan.len();
        let (sd0, td0) = plan[0];
        let mut steps = 0;
        let mut d = sd0;
        while d != td0 {
            d = next_dims(d, td0, self.sched.gradual_step);
            steps += 1;
        }
        progress::plan(steps * self.sched.fine_iters + (0..n).map(|j| self.sched.level_iters(j, n)).sum::<usize>());
        let mut levels = Vec::new();
        let mut cur = sd0;
        let mut state: Option<State> = None;
        let mut step = 0u64;
        loop {
            let last = cur == td0;
            let iters = if last {
                self.sched.level_iters(0, n)
            } else {
                self.sched.fine_iters
            };
            let lv = self.level(sd0, cur, iters, None)?;
            let seed = rng::key(self.sched.seed, 0, step, 1);
            let mut st = match state.take() {
                None => self.init_state(&lv, lv.s.clone(), seed)?,
                Some(prev) => self.transfer_state(prev, &lv, seed)?,
            };
            let mut tr = LevelTrace {
                source_dims: sd0,
                target_dims: cur,
                ..Default::default()
            };
            self.run_level(&lv, &mut st, seed, &mut tr)?;
            levels.push(tr);
            state = Some(st);
            if last {
                break;
            }
            cur = next_dims(cur, td0, self.sched.gradual_step);
            step += 1;
        }
        for (j, &(sd, td)) in plan.iter().enumerate().skip(1) {
            let radius = if j + 1 == n { self.sched.final_radius } else { None };
            let lv = self.level(sd, td, self.sched.level_iters(j, n), radius)?;
            let seed = rng::key(self.sched.seed, j as u64, 0, 0);
            let mut st = self.transfer_state(state.take().expect("state"), &lv, seed)?;
            let mut tr = LevelTrace {
                source_dims: sd,
                target_dims: td,
                ..Default::default()
            };
            self.run_level(&lv, &mut st, seed, &mut tr)?;
            levels.push(tr);
            state = Some(st);
        }
        Ok(Self::finish(state.expect("at least one level"), levels))
    }
}
