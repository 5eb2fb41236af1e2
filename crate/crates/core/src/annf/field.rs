use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::{ssd, PatchGeometry, Pos, Rect};

/// The search domain of a matching run: which source coordinates are
/// matched, which target coordinates they may map to, and how two
/// coordinates are compared.
///
/// `distance` may stop early once the running value exceeds `bound`; it
/// must then return some value `>= bound`.
pub trait MatchSpace: Sync {
    fn source_rect(&self) -> Rect;
    fn target_rect(&self) -> Rect;
    /// Dimensions of the target image; the default random-search radius is
    /// the larger of the two.
    fn target_dims(&self) -> (usize, usize) {
        inset_dims(self.target_rect())
    }
    fn distance(&self, a: Pos, b: Pos, bound: f64) -> f64;

    /// Search-space filter. Disallowed candidates are never evaluated.
    fn allowed(&self, _a: Pos, _b: Pos) -> bool {
        true
    }

    /// Whether `distance(a, b) == distance(b, a)` (self-matching spaces only).
    fn symmetric(&self) -> bool {
        false
    }

    /// Uniform draw from the allowed targets of `a`.
    fn sample_target(&self, a: Pos, rng: &mut dyn rand::RngCore) -> Option<Pos> {
        let r = self.target_rect();
        for _ in 0..256 {
            let p = Pos::new(rng.gen_range(r.x0..r.x1), rng.gen_range(r.y0..r.y1));
            if self.allowed(a, p) {
                return Some(p);
            }
        }
        r.iter().find(|&p| self.allowed(a, p))
    }
}

/// Image dimensions of a valid rectangle inset symmetrically by the patch half.
pub fn inset_dims(r: Rect) -> (usize, usize) {
    ((r.x0 + r.x1) as usize, (r.y0 + r.y1) as usize)
}

/// Patch SSD between two images.
#[derive(Clone, Copy)]
pub struct SsdSpace<'a> {
    pub a: &'a ImageBuffer,
    pub b: &'a ImageBuffer,
    pub geom: PatchGeometry,
    src: Rect,
    dst: Rect,
    self_match: bool,
}

impl<'a> SsdSpace<'a> {
    pub fn new(a: &'a ImageBuffer, b: &'a ImageBuffer, geom: PatchGeometry) -> Result<Self> {
        if a.channels() != b.channels() {
            return Err(Error::ChannelCount {
                expected: a.channels(),
                found: b.channels(),
            });
        }
        let src = geom.require_fits(a)?;
        let dst = geom.require_fits(b)?;
        Ok(SsdSpace {
            a,
            b,
            geom,
            src,
            dst,
            self_match: std::ptr::eq(a, b),
        })
    }
}

impl MatchSpace for SsdSpace<'_> {
    fn source_rect(&self) -> Rect {
        self.src
    }
    fn target_rect(&self) -> Rect {
        self.dst
    }
    fn target_dims(&self) -> (usize, usize) {
        (self.b.width(), self.b.height())
    }
    #[inline]
    fn distance(&self, a: Pos, b: Pos, bound: f64) -> f64 {
        ssd(self.a, a, self.b, b, self.geom.half(), bound)
    }
    fn symmetric(&self) -> bool {
        self.self_match
    }
}

/// Wraps a space with an extra candidate filter.
pub struct Filtered<S, F> {
    pub inner: S,
    pub filter: F,
}

impl<S: MatchSpace, F: Fn(Pos, Pos) -> bool + Sync> MatchSpace for Filtered<S, F> {
    fn source_rect(&self) -> Rect {
        self.inner.source_rect()
    }
    fn target_rect(&self) -> Rect {
        self.inner.target_rect()
    }
    fn target_dims(&self) -> (usize, usize) {
        self.inner.target_dims()
    }
    fn distance(&self, a: Pos, b: Pos, bound: f64) -> f64 {
        self.inner.distance(a, b, bound)
    }
    fn allowed(&self, a: Pos, b: Pos) -> bool {
        (self.filter)(a, b) && self.inner.allowed(a, b)
    }
    fn symmetric(&self) -> bool {
        self.inner.symmetric()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnfEntry {
    pub target: Pos,
    pub dist: f64,
}

/// Translation nearest-neighbor field over the valid patch centers of the
/// source image.
#[derive(Debug, Clone, PartialEq)]
pub struct Nnf {
    pub(crate) source: Rect,
    pub(crate) target: Rect,
    pub(crate) entries: Vec<NnfEntry>,
    pub(crate) seed: u64,
    pub(crate) sweeps: u64,
    pub(crate) locked: Option<Vec<bool>>,
}

impl Nnf {
    pub fn from_entries(source: Rect, target: Rect, entries: Vec<NnfEntry>, seed: u64) -> Result<Self> {
        if entries.len() != source.area() {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {}x{} field",
                entries.len(),
                source.width(),
                source.height()
            )));
        }
        Ok(Nnf {
            source,
            target,
            entries,
            seed,
            sweeps: 0,
            locked: None,
        })
    }

    pub fn source_rect(&self) -> Rect {
        self.source
    }
    pub fn target_rect(&self) -> Rect {
        self.target
    }
    pub fn source_dims(&self) -> (usize, usize) {
        inset_dims(self.source)
    }
    pub fn target_dims(&self) -> (usize, usize) {
        inset_dims(self.target)
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    /// Number of sweeps applied so far; its parity selects the scan order.
    pub fn sweeps_done(&self) -> u64 {
        self.sweeps
    }
    pub fn entries(&self) -> &[NnfEntry] {
        &self.entries
    }
    pub fn entries_mut(&mut self) -> &mut [NnfEntry] {
        &mut self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, p: Pos) -> &NnfEntry {
        &self.entries[self.source.index(p)]
    }

    pub fn get_mut(&mut self, p: Pos) -> &mut NnfEntry {
        let i = self.source.index(p);
        &mut self.entries[i]
    }

    pub fn offset(&self, p: Pos) -> Pos {
        self.get(p).target.sub(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pos, &NnfEntry)> + '_ {
        self.entries.iter().enumerate().map(|(i, e)| (self.source.pos(i), e))
    }

    pub fn mean_distance(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.dist).sum::<f64>() / self.entries.len() as f64
    }

    /// Marks entries that sweeps must never overwrite.
    pub fn set_locked(&mut self, locked: Option<Vec<bool>>) {
        self.locked = locked.filter(|l| l.len() == self.entries.len());
    }

    pub fn is_locked(&self, p: Pos) -> bool {
        self.locked.as_ref().is_some_and(|l| l[self.source.index(p)])
    }

    /// Recomputes every cached distance.
    pub fn refresh_distances(&mut self, space: &impl MatchSpace) {
        let src = self.source;
        for (i, e) in self.entries.iter_mut().enumerate() {
            e.dist = space.distance(src.pos(i), e.target, f64::INFINITY);
        }
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        self.entries.capacity() * std::mem::size_of::<NnfEntry>() + self.locked.as_ref().map_or(0, |l| l.capacity())
    }
}

/// Parameters of the propagation / random-search loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub iterations: usize,
    /// Ratio between successive random-search window sizes.
    pub alpha: f64,
    /// Maximum random-search radius; `None` uses the larger target dimension.
    pub radius: Option<f64>,
    pub early_stop: bool,
    /// Strip workers per sweep; 1 is the reproducible single-thread mode.
    pub threads: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            iterations: 5,
            alpha: 0.5,
            radius: None,
            early_stop: true,
            threads: 1,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.threads == 0 {
            return Err(Error::param("threads must be at least 1"));
        }
        Ok(())
    }

    pub fn radius_for(&self, space: &impl MatchSpace) -> f64 {
        self.radius.unwrap_or_else(|| {
            let (w, h) = space.target_dims();
            w.max(h) as f64
        })
    }
}
