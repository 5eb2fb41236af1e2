use std::collections::HashMap;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use patchmatch::image::{decode_image, encode_png};
use patchmatch::synthesis::{
    check_completion, complete, local_scale, reshuffle, retarget, scale_about_center, ConstraintSet, EmSchedule,
    HardRegion, InitMode, LabelMap, Mask,
};
use patchmatch::{Error, ImageBuffer, Pos, Rect};
use serde::Deserialize;

use crate::annotations::{to_annotations, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Tool {
    Complete,
    Retarget,
    Reshuffle,
    LocalScale,
}

/// Mask images, as base64 PNG or `data:` URLs, at the preview size.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Masks {
    pub hole: Option<String>,
    /// Indexed-color label image; each color is one label, black is none.
    pub labels: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    #[default]
    Swap,
    Interpolate,
    Clone,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Params {
    pub seed: Option<u64>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    /// `[x0, y0, x1, y1]`, half-open.
    pub region: Option<[i32; 4]>,
    pub offset: Option<[i32; 2]>,
    #[serde(default)]
    pub mode: Mode,
    pub factor: Option<f64>,
    pub patch_size: Option<usize>,
    pub coarse_iters: Option<usize>,
    pub fine_iters: Option<usize>,
    pub gradual_step: Option<f64>,
    pub e_sweeps: Option<usize>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub tool: Tool,
    #[serde(default)]
    pub masks: Masks,
    #[serde(default)]
    pub annotations: Vec<Record>,
    #[serde(default)]
    pub params: Params,
}

/// Why a request was refused before any work started.
#[derive(Debug)]
pub enum Rejection {
    /// Malformed request: 400.
    Bad(String),
    /// Geometry that cannot be synthesized: 422, with the label color if a
    /// label is at fault.
    Geometry { message: String, label: Option<String> },
}

impl From<Error> for Rejection {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConstraint(_) | Error::DimensionMismatch(_) => Rejection::Geometry {
                message: e.to_string(),
                label: None,
            },
            e => Rejection::Bad(e.to_string()),
        }
    }
}

pub type Work = Box<dyn FnOnce() -> patchmatch::Result<Vec<u8>> + Send>;

fn bad(msg: impl Into<String>) -> Rejection {
    Rejection::Bad(msg.into())
}

fn decode_b64_image(what: &str, data: &str) -> Result<ImageBuffer, Rejection> {
    let payload = match data.split_once(";base64,") {
        Some((head, rest)) if head.starts_with("data:") => rest,
        _ => data,
    };
    let bytes = STANDARD
        .decode(payload.trim())
        .map_err(|e| bad(format!("{what} mask is not base64: {e}")))?;
    decode_image(&bytes).map_err(|e| bad(format!("{what} mask: {e}")))
}

fn require_dims(what: &str, img: &ImageBuffer, dims: (usize, usize)) -> Result<(), Rejection> {
    if (img.width(), img.height()) != dims {
        return Err(Rejection::Geometry {
            message: format!(
                "{what} mask is {}x{}, the session image is {}x{}",
                img.width(),
                img.height(),
                dims.0,
                dims.1
            ),
            label: None,
        });
    }
    Ok(())
}

/// Label map plus the color of each label, as `#rrggbb`.
fn decode_labels(img: &ImageBuffer) -> (LabelMap, HashMap<u32, String>) {
    let labels = LabelMap::from_image(img);
    let c = img.channels();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut names = HashMap::new();
    for (px, &id) in img.data().chunks_exact(c).zip(&labels.data) {
        if id != 0 && !names.contains_key(&id) {
            let rgb = match c {
                1 | 2 => [q(px[0]); 3],
                _ => [q(px[0]), q(px[1]), q(px[2])],
            };
            names.insert(id, format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]));
        }
    }
    (labels, names)
}

fn schedule(p: &Params) -> Result<EmSchedule, Rejection> {
    let d = EmSchedule::default();
    let s = EmSchedule {
        seed: p.seed.unwrap_or(d.seed),
        patch_size: p.patch_size.unwrap_or(d.patch_size),
        coarse_iters: p.coarse_iters.unwrap_or(d.coarse_iters),
        fine_iters: p.fine_iters.unwrap_or(d.fine_iters),
        gradual_step: p.gradual_step.unwrap_or(d.gradual_step),
        e_sweeps: p.e_sweeps.unwrap_or(d.e_sweeps),
        threads: p.threads.unwrap_or(d.threads),
        ..d
    };
    s.validate().map_err(|e| bad(e.to_string()))?;
    Ok(s)
}

fn region(p: &Params) -> Result<Rect, Rejection> {
    let [x0, y0, x1, y1] = p.region.ok_or_else(|| bad("params.region is required"))?;
    Ok(Rect::new(x0, y0, x1, y1))
}

/// Validates `req` against the session image and returns the job to run.
pub fn prepare(source: Arc<ImageBuffer>, req: EditRequest, max_dim: usize) -> Result<Work, Rejection> {
    let dims = (source.width(), source.height());
    let sched = schedule(&req.params)?;
    let ann = to_annotations(&req.annotations).map_err(|e| bad(e.to_string()))?;
    let constraints = ConstraintSet {
        models: ann.models,
        hard: ann.hard,
        ..Default::default()
    };
    let has_annotations = !req.annotations.is_empty();
    if req.tool != Tool::Complete && (req.masks.hole.is_some() || req.masks.labels.is_some()) {
        return Err(bad("masks are only used by the complete tool"));
    }
    let p = &req.params;

    let work: Work = match req.tool {
        Tool::Complete => {
            if has_annotations {
                return Err(bad("the complete tool takes no annotations"));
            }
            let hole_img = decode_b64_image(
                "hole",
                req.masks.hole.as_deref().ok_or_else(|| bad("masks.hole is required"))?,
            )?;
            require_dims("hole", &hole_img, dims)?;
            let hole = Mask::from_image(&hole_img);
            let labels = match req.masks.labels.as_deref() {
                Some(data) => {
                    let img = decode_b64_image("labels", data)?;
                    require_dims("labels", &img, dims)?;
                    Some(decode_labels(&img))
                }
                None => None,
            };
            if let Err(e) = check_completion(dims, &hole, labels.as_ref().map(|l| &l.0)) {
                return Err(match e {
                    Error::UnsupportedLabel(id) => {
                        let name = labels.as_ref().and_then(|l| l.1.get(&id).cloned()).unwrap_or_default();
                        Rejection::Geometry {
                            message: format!("label {name} appears inside the hole but nowhere outside it"),
                            label: Some(name),
                        }
                    }
                    e => e.into(),
                });
            }
            let labels = labels.map(|l| l.0);
            Box::new(move || encode_png(&complete(&source, &hole, labels.as_ref(), &sched)?))
        }
        Tool::Retarget => {
            let out = (p.width.unwrap_or(dims.0), p.height.unwrap_or(dims.1));
            let limit = 2 * max_dim;
            if out.0 == 0 || out.1 == 0 || out.0 > limit || out.1 > limit {
                return Err(bad(format!(
                    "output size {}x{} must be within 1..={limit}",
                    out.0, out.1
                )));
            }
            constraints.validate(dims, out)?;
            Box::new(move || encode_png(&retarget(&source, out, &constraints, &sched)?))
        }
        Tool::Reshuffle => {
            let r = region(p)?;
            let [dx, dy] = p.offset.ok_or_else(|| bad("params.offset is required"))?;
            let offset = Pos::new(dx, dy);
            let mut check = constraints.clone();
            check.hard.push(HardRegion { source: r, offset });
            check.validate(dims, dims)?;
            let mode = match p.mode {
                Mode::Swap => InitMode::Swap,
                Mode::Interpolate => InitMode::Interpolate,
                Mode::Clone => InitMode::Clone,
            };
            Box::new(move || encode_png(&reshuffle(&source, r, offset, mode, &constraints, &sched)?))
        }
        Tool::LocalScale => {
            if has_annotations {
                return Err(bad("the localScale tool takes no annotations"));
            }
            let r = region(p)?;
            let factor = p.factor.ok_or_else(|| bad("params.factor is required"))?;
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(bad(format!("factor {factor} must be positive")));
            }
            let bounds = Rect::new(0, 0, dims.0 as i32, dims.1 as i32);
            let fin = scale_about_center(r, factor);
            if r.is_empty() || !bounds.contains_rect(&r) || !bounds.contains_rect(&fin) {
                return Err(Rejection::Geometry {
                    message: format!("region {r:?} scaled by {factor} escapes the image"),
                    label: None,
                });
            }
            Box::new(move || encode_png(&local_scale(&source, r, factor, &sched)?))
        }
    };
    Ok(work)
}
