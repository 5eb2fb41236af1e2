use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::{Pos, Rect};

use super::grid::{Grid, LabelMap, Mask};
use super::model::{ModelSpec, Point};

/// Vote weight multiplier for source pixels marked by a model constraint.
pub const MODEL_WEIGHT_BOOST: f32 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LineKind {
    Free,
    FixedSlope,
    /// Output line through `a` and `b`, in target coordinates.
    FixedPosition {
        a: Point,
        b: Point,
    },
}

/// A structure in the source that should stay geometrically consistent in
/// the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelConstraint {
    /// Source segment from `a` to `b`.
    Line { kind: LineKind, a: Point, b: Point },
    /// Source region moved rigidly; `scale` of `None` is a pure translation.
    Region { rect: Rect, scale: Option<f64> },
}

impl ModelConstraint {
    /// The constraint at a pyramid level: source geometry scaled by `sf`,
    /// target geometry by `tf`.
    pub(crate) fn scaled(&self, sf: (f64, f64), tf: (f64, f64)) -> ModelConstraint {
        let sp = |p: Point, f: (f64, f64)| (p.0 * f.0, p.1 * f.1);
        match *self {
            ModelConstraint::Line { kind, a, b } => ModelConstraint::Line {
                kind: match kind {
                    LineKind::FixedPosition { a, b } => LineKind::FixedPosition {
                        a: sp(a, tf),
                        b: sp(b, tf),
                    },
                    k => k,
                },
                a: sp(a, sf),
                b: sp(b, sf),
            },
            ModelConstraint::Region { rect, scale } => ModelConstraint::Region {
                rect: scale_rect(rect, sf),
                scale,
            },
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match *self {
            ModelConstraint::Line { kind, a, b } => match kind {
                LineKind::Free => ModelSpec::FreeLine,
                LineKind::FixedSlope => ModelSpec::FixedSlopeLine {
                    direction: (b.0 - a.0, b.1 - a.1),
                },
                LineKind::FixedPosition { a, b } => ModelSpec::FixedPositionLine { a, b },
            },
            ModelConstraint::Region { scale: None, .. } => ModelSpec::TranslateRegion,
            ModelConstraint::Region { scale: Some(s), .. } => ModelSpec::ScaleRegion { scale: s },
        }
    }

    /// Whether source pixel `p` belongs to the marked structure.
    pub fn marks(&self, p: Pos) -> bool {
        match *self {
            ModelConstraint::Line { a, b, .. } => segment_distance((p.x as f64, p.y as f64), a, b) <= 1.0,
            ModelConstraint::Region { rect, .. } => rect.contains(p),
        }
    }
}

pub(crate) fn scale_rect(r: Rect, f: (f64, f64)) -> Rect {
    let x0 = (r.x0 as f64 * f.0).round() as i32;
    let y0 = (r.y0 as f64 * f.1).round() as i32;
    let x1 = ((r.x1 as f64 * f.0).round() as i32).max(x0 + 1);
    let y1 = ((r.y1 as f64 * f.1).round() as i32).max(y0 + 1);
    Rect::new(x0, y0, x1, y1)
}

/// Distance from `p` to the segment `a`–`b`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Integer pixels along a segment, in order, without repeats.
pub fn rasterize_segment(a: Point, b: Point) -> Vec<Pos> {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let n = len.ceil().max(1.0) as usize;
    let mut out: Vec<Pos> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let p = Pos::new(
            (a.0 + t * (b.0 - a.0)).round() as i32,
            (a.1 + t * (b.1 - a.1)).round() as i32,
        );
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// Output pixels of `source` shifted by `offset` are copied verbatim from
/// the source region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardRegion {
    pub source: Rect,
    pub offset: Pos,
}

impl HardRegion {
    pub fn target(&self) -> Rect {
        self.source.translate(self.offset)
    }
}

/// Everything that restricts a synthesis run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    /// Source labels; 0 is unconstrained.
    pub labels_s: Option<LabelMap>,
    /// Output labels; a labeled output patch may only match a source patch
    /// with the same label.
    pub labels_t: Option<LabelMap>,
    pub models: Vec<ModelConstraint>,
    pub hard: Vec<HardRegion>,
    /// Per-source-pixel vote weights (default 1).
    pub weights: Option<Grid<f32>>,
    /// Output pixels copied from the initial output and never synthesized.
    pub known_t: Option<Mask>,
    /// Source pixels allowed inside matched source patches.
    pub source_valid: Option<Mask>,
}

impl ConstraintSet {
    pub fn validate(&self, s_dims: (usize, usize), t_dims: (usize, usize)) -> Result<()> {
        let (sw, sh) = s_dims;
        let (tw, th) = t_dims;
        if let Some(l) = &self.labels_s {
            l.require_dims(sw, sh, "source label map")?;
        }
        if let Some(l) = &self.labels_t {
            l.require_dims(tw, th, "output label map")?;
            if self.labels_s.is_none() {
                return Err(Error::InvalidConstraint(
                    "output labels given without source labels".into(),
                ));
            }
        }
        if let Some(w) = &self.weights {
            w.require_dims(sw, sh, "weight map")?;
            if w.data.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidConstraint(
                    "weights must be finite and non-negative".into(),
                ));
            }
        }
        if let Some(m) = &self.known_t {
            m.require_dims(tw, th, "known-pixel mask")?;
        }
        if let Some(m) = &self.source_valid {
            m.require_dims(sw, sh, "source mask")?;
        }
        let s_rect = Rect::new(0, 0, sw as i32, sh as i32);
        let t_rect = Rect::new(0, 0, tw as i32, th as i32);
        for h in &self.hard {
            if h.source.is_empty() || !s_rect.contains_rect(&h.source) {
                return Err(Error::InvalidConstraint(format!(
                    "hard region {:?} is outside the source",
                    h.source
                )));
            }
            if !t_rect.contains_rect(&h.target()) {
                return Err(Error::InvalidConstraint(format!(
                    "hard region {:?} moved by {} escapes the output",
                    h.source, h.offset
                )));
            }
        }
        for m in &self.models {
            match *m {
                ModelConstraint::Line { a, b, .. } => {
                    let inside = |p: Point| p.0 >= 0.0 && p.1 >= 0.0 && p.0 < sw as f64 && p.1 < sh as f64;
                    if !inside(a) || !inside(b) || a == b {
                        return Err(Error::InvalidConstraint(format!(
                            "line {a:?}-{b:?} is degenerate or outside"
                        )));
                    }
                }
                ModelConstraint::Region { rect, scale } => {
                    if rect.is_empty() || !s_rect.contains_rect(&rect) {
                        return Err(Error::InvalidConstraint(format!(
                            "region {rect:?} is outside the source"
                        )));
                    }
                    if scale.is_some_and(|s| !(s > 0.0)) {
                        return Err(Error::InvalidConstraint("region scale must be positive".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Vote weights: user weights (or 1) boosted on model-marked pixels.
    pub fn effective_weights(&self, w: usize, h: usize) -> Grid<f32> {
        let mut g = self.weights.clone().unwrap_or_else(|| Grid::filled(w, h, 1.0));
        for m in &self.models {
            let area = match *m {
                ModelConstraint::Line { a, b, .. } => Rect::new(
                    (a.0.min(b.0) - 1.0).floor() as i32,
                    (a.1.min(b.1) - 1.0).floor() as i32,
                    (a.0.max(b.0) + 2.0).ceil() as i32,
                    (a.1.max(b.1) + 2.0).ceil() as i32,
                ),
                ModelConstraint::Region { rect, .. } => rect,
            };
            for p in area.intersect(&g.rect()).iter() {
                if m.marks(p) {
                    let i = p.y as usize * w + p.x as usize;
                    g.data[i] *= MODEL_WEIGHT_BOOST;
                }
            }
        }
        g
    }
}

/// Parsed model annotation file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations {
    pub models: Vec<ModelConstraint>,
    pub hard: Vec<HardRegion>,
}

impl Annotations {
    /// One record per line:
    ///
    /// ```text
    /// line free x0 y0 x1 y1
    /// line slope x0 y0 x1 y1
    /// line pos x0 y0 x1 y1 tx0 ty0 tx1 ty1
    /// region move x0 y0 x1 y1 dx dy
    /// region translate x0 y0 x1 y1
    /// region scale x0 y0 x1 y1 s
    /// ```
    ///
    /// Regions are half-open pixel rectangles. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn parse(text: &str) -> Result<Annotations> {
        let mut out = Annotations::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Format(format!("annotation line {}: {msg}: {line:?}", no + 1));
            let words: Vec<&str> = line.split_whitespace().collect();
            let nums = |from: usize, n: usize| -> Result<Vec<f64>> {
                if words.len() != from + n {
                    return Err(bad(&format!("expected {n} numbers")));
                }
                words[from..]
                    .iter()
                    .map(|w| {
                        w.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| bad("bad number"))
                    })
                    .collect()
            };
            let ints = |v: &[f64]| -> Result<Vec<i32>> {
                v.iter()
                    .map(|&x| {
                        if x.fract() == 0.0 {
                            Ok(x as i32)
                        } else {
                            Err(bad("expected integer"))
                        }
                    })
                    .collect()
            };
            match (words.first().copied(), words.get(1).copied()) {
                (Some("line"), Some(kind @ ("free" | "slope"))) => {
                    let v = nums(2, 4)?;
                    out.models.push(ModelConstraint::Line {
                        kind: if kind == "free" {
                            LineKind::Free
                        } else {
                            LineKind::FixedSlope
                        },
                        a: (v[0], v[1]),
                        b: (v[2], v[3]),
                    });
                }
                (Some("line"), Some("pos")) => {
                    let v = nums(2, 8)?;
                    out.models.push(ModelConstraint::Line {
                        kind: LineKind::FixedPosition {
                            a: (v[4], v[5]),
                            b: (v[6], v[7]),
                        },
                        a: (v[0], v[1]),
                        b: (v[2], v[3]),
                    });
                }
                (Some("region"), Some("move")) => {
                    let v = ints(&nums(2, 6)?)?;
                    out.hard.push(HardRegion {
                        source: Rect::new(v[0], v[1], v[2], v[3]),
                        offset: Pos::new(v[4], v[5]),
                    });
                }
                (Some("region"), Some("translate")) => {
                    let v = ints(&nums(2, 4)?)?;
                    out.models.push(ModelConstraint::Region {
                        rect: Rect::new(v[0], v[1], v[2], v[3]),
                        scale: None,
                    });
                }
                (Some("region"), Some("scale")) => {
                    let v = nums(2, 5)?;
                    let r = ints(&v[..4])?;
                    out.models.push(ModelConstraint::Region {
                        rect: Rect::new(r[0], r[1], r[2], r[3]),
                        scale: Some(v[4]),
                    });
                }
                _ => return Err(bad("unknown record")),
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for m in &self.models {
            let _ = match *m {
                ModelConstraint::Line { kind, a, b } => match kind {
                    LineKind::Free => writeln!(s, "line free {} {} {} {}", a.0, a.1, b.0, b.1),
                    LineKind::FixedSlope => {
                        writeln!(s, "line slope {} {} {} {}", a.0, a.1, b.0, b.1)
                    }
                    LineKind::FixedPosition { a: ta, b: tb } => writeln!(
                        s,
                        "line pos {} {} {} {} {} {} {} {}",
                        a.0, a.1, b.0, b.1, ta.0, ta.1, tb.0, tb.1
                    ),
                },
                ModelConstraint::Region { rect: r, scale: None } => {
                    writeln!(s, "region translate {} {} {} {}", r.x0, r.y0, r.x1, r.y1)
                }
                ModelConstraint::Region {
                    rect: r,
                    scale: Some(k),
                } => {
                    writeln!(s, "region scale {} {} {} {} {}", r.x0, r.y0, r.x1, r.y1, k)
                }
            };
        }
        for h in &self.hard {
            let r = h.source;
            let _ = writeln!(
                s,
                "region move {} {} {} {} {} {}",
                r.x0, r.y0, r.x1, r.y1, h.offset.x, h.offset.y
            );
        }
        s
    }
}
