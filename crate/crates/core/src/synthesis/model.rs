use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier distance in pixels.
    pub threshold: f64,
    pub min_inlier_fraction: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 500,
            threshold: 2.0,
            min_inlier_fraction: 0.5,
        }
    }
}

/// Geometric model a set of target positions is pulled onto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    FreeLine,
    /// Line of fixed direction; only its offset is fitted.
    FixedSlopeLine {
        direction: Point,
    },
    /// User-placed line; nothing is fitted.
    FixedPositionLine {
        a: Point,
        b: Point,
    },
    TranslateRegion,
    /// Region mapped by `target = scale * source + t`; only `t` is fitted.
    ScaleRegion {
        scale: f64,
    },
}

impl ModelSpec {
    pub fn is_line(&self) -> bool {
        matches!(
            self,
            ModelSpec::FreeLine | ModelSpec::FixedSlopeLine { .. } | ModelSpec::FixedPositionLine { .. }
        )
    }

    fn min_points(&self) -> usize {
        match self {
            ModelSpec::ScaleRegion { .. } => 3,
            ModelSpec::FixedPositionLine { .. } => 1,
            _ => 2,
        }
    }
}

/// Source/target pair; lines only look at the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub source: Point,
    pub target: Point,
}

/// `nx * x + ny * y + c = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub nx: f64,
    pub ny: f64,
    pub c: f64,
}

impl Line {
    pub fn through(a: Point, b: Point) -> Option<Line> {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let n = (dx * dx + dy * dy).sqrt();
        if n < 1e-12 {
            return None;
        }
        Some(Line::with_direction((dx / n, dy / n), a))
    }

    fn with_direction(dir: Point, p: Point) -> Line {
        let (nx, ny) = (-dir.1, dir.0);
        Line {
            nx,
            ny,
            c: -(nx * p.0 + ny * p.1),
        }
    }

    pub fn distance(&self, p: Point) -> f64 {
        (self.nx * p.0 + self.ny * p.1 + self.c).abs()
    }

    pub fn project(&self, p: Point) -> Point {
        let d = self.nx * p.0 + self.ny * p.1 + self.c;
        (p.0 - d * self.nx, p.1 - d * self.ny)
    }

    /// Direction vector (unit).
    pub fn direction(&self) -> Point {
        (self.ny, -self.nx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Line(Line),
    Similarity { scale: f64, tx: f64, ty: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: FittedModel,
    /// Every input target projected onto the fitted model.
    pub projected: Vec<Point>,
    pub inliers: Vec<bool>,
    /// Largest displacement applied to an inlier.
    pub max_inlier_move: f64,
}

impl ModelFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&v| v).count()
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Robustly fits `spec` to the correspondences and projects every target
/// onto the result.
///
/// Lines are fitted by RANSAC on the targets and refined on the inliers;
/// regions fit their translation on all points. Inliers are the points
/// within `threshold` of the final model. Fails with [`Error::FitFailed`]
/// when there are too few points or inliers.
pub fn fit_and_project_model(
    points: &[Correspondence],
    spec: &ModelSpec,
    params: &RansacParams,
    seed: u64,
) -> Result<ModelFit> {
    if points.len() < spec.min_points() {
        return Err(Error::FitFailed(format!(
            "{} points, need at least {}",
            points.len(),
            spec.min_points()
        )));
    }
    let mut rng = SmallRng::seed_from_u64(seed);
    let targets: Vec<Point> = points.iter().map(|p| p.target).collect();
    let model = match *spec {
        ModelSpec::FreeLine => FittedModel::Line(fit_free_line(&targets, params, &mut rng)?),
        ModelSpec::FixedSlopeLine { direction } => {
            let n = (direction.0.powi(2) + direction.1.powi(2)).sqrt();
            if n < 1e-12 {
                return Err(Error::InvalidConstraint("zero line direction".into()));
            }
            FittedModel::Line(fit_fixed_slope(
                &targets,
                (direction.0 / n, direction.1 / n),
                params,
                &mut rng,
            ))
        }
        ModelSpec::FixedPositionLine { a, b } => FittedModel::Line(
            Line::through(a, b).ok_or_else(|| Error::InvalidConstraint("degenerate fixed line".into()))?,
        ),
        ModelSpec::TranslateRegion => fit_region(points, 1.0),
        ModelSpec::ScaleRegion { scale } => {
            if !(scale > 0.0) {
                return Err(Error::InvalidConstraint(format!(
                    "region scale {scale} must be positive"
                )));
            }
            fit_region(points, scale)
        }
    };
    let projected: Vec<Point> = match model {
        FittedModel::Line(l) => targets.iter().map(|&p| l.project(p)).collect(),
        FittedModel::Similarity { scale, tx, ty } => points
            .iter()
            .map(|p| (scale * p.source.0 + tx, scale * p.source.1 + ty))
            .collect(),
    };
    let inliers: Vec<bool> = targets
        .iter()
        .zip(&projected)
        .map(|(&t, &q)| dist(t, q) <= params.threshold)
        .collect();
    let count = inliers.iter().filter(|&&v| v).count();
    let fixed = matches!(spec, ModelSpec::FixedPositionLine { .. });
    if !fixed && (count as f64) < params.min_inlier_fraction * points.len() as f64 {
        return Err(Error::FitFailed(format!(
            "{count} of {} points are inliers",
            points.len()
        )));
    }
    let max_inlier_move = targets
        .iter()
        .zip(&projected)
        .zip(&inliers)
        .filter(|(_, &i)| i)
        .map(|((&t, &q), _)| dist(t, q))
        .fold(0.0, f64::max);
    Ok(ModelFit {
        model,
        projected,
        inliers,
        max_inlier_move,
    })
}

fn inliers_of(l: &Line, pts: &[Point], thr: f64) -> Vec<Point> {
    pts.iter().copied().filter(|&p| l.distance(p) <= thr).collect()
}

/// Total least squares line through the points.
pub fn least_squares_line(pts: &[Point]) -> Option<Line> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy < 1e-12 {
        return None;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(Line::with_direction((angle.cos(), angle.sin()), (mx, my)))
}

fn fit_free_line(pts: &[Point], params: &RansacParams, rng: &mut SmallRng) -> Result<Line> {
    let mut best: Option<(usize, Line)> = None;
    for _ in 0..params.iterations {
        let i = rng.gen_range(0..pts.len());
        let j = rng.gen_range(0..pts.len());
        let Some(l) = Line::through(pts[i], pts[j]) else {
            continue;
        };
        let n = pts.iter().filter(|&&p| l.distance(p) <= params.threshold).count();
        if best.is_none_or(|b| n > b.0) {
            best = Some((n, l));
        }
    }
    let (_, mut line) = best.ok_or_else(|| Error::FitFailed("all points coincide".into()))?;
    for _ in 0..3 {
        let inl = inliers_of(&line, pts, params.threshold);
        match least_squares_line(&inl) {
            Some(l) if inliers_of(&l, pts, params.threshold).len() >= inl.len() => line = l,
            _ => break,
        }
    }
    Ok(line)
}

fn fit_fixed_slope(pts: &[Point], dir: Point, params: &RansacParams, rng: &mut SmallRng) -> Line {
    let mut best = (0, Line::with_direction(dir, pts[0]));
    for _ in 0..params.iterations.min(pts.len() * 4).max(1) {
        let l = Line::with_direction(dir, pts[rng.gen_range(0..pts.len())]);
        let n = pts.iter().filter(|&&p| l.distance(p) <= params.threshold).count();
        if n > best.0 {
            best = (n, l);
        }
    }
    let mut line = best.1;
    for _ in 0..3 {
        let inl = inliers_of(&line, pts, params.threshold);
        if inl.is_empty() {
            break;
        }
        let c = inl.iter().map(|p| -(line.nx * p.0 + line.ny * p.1)).sum::<f64>() / inl.len() as f64;
        let l = Line { c, ..line };
        if inliers_of(&l, pts, params.threshold).len() < inl.len() {
            break;
        }
        line = l;
    }
    line
}

fn fit_region(points: &[Correspondence], scale: f64) -> FittedModel {
    let n = points.len() as f64;
    let (tx, ty) = points.iter().fold((0.0, 0.0), |a, p| {
        (
            a.0 + p.target.0 - scale * p.source.0,
            a.1 + p.target.1 - scale * p.source.1,
        )
    });
    FittedModel::Similarity {
        scale,
        tx: tx / n,
        ty: ty / n,
    }
}
