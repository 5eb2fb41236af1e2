use serde::{Deserialize, Serialize};

use crate::annf::{Filtered, SearchParams, SsdSpace};
use crate::error::{Error, Result};
use crate::gpm::compute_knn_in;
use crate::image::ImageBuffer;
use crate::patch::{PatchGeometry, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseParams {
    pub k: usize,
    /// Bandwidth of `exp(-d / h²)`, where `d` is the patch distance divided
    /// by the number of samples (so `h` is in intensity units).
    pub h: f64,
    pub include_self: bool,
    pub search: SearchParams,
    pub seed: u64,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        DenoiseParams {
            k: 16,
            h: 0.1,
            include_self: true,
            search: SearchParams::default(),
            seed: 0,
        }
    }
}

/// Non-local means over the `k` most similar patches of the whole image.
///
/// Every pixel becomes the weighted mean of the centers of its patch's
/// nearest neighbors (and of itself, at distance zero). Pixels closer to the
/// border than the patch half borrow the neighbors of the nearest valid
/// center, shifted by the same amount.
pub fn nlm_denoise(img: &ImageBuffer, geom: &PatchGeometry, params: &DenoiseParams) -> Result<ImageBuffer> {
    if !(params.h > 0.0) {
        return Err(Error::param(format!("bandwidth h = {} must be positive", params.h)));
    }
    let space = Filtered {
        inner: SsdSpace::new(img, img, *geom)?,
        filter: |a: Pos, b: Pos| a != b,
    };
    let field = compute_knn_in(&space, params.k, &params.search, params.seed)?;
    let rect = field.source_rect();
    let samples = geom.samples(img.channels()) as f64;
    let h2 = params.h * params.h;
    let c = img.channels();
    let mut out = img.clone();
    let mut acc = vec![0.0f64; c];
    for y in 0..img.height() as i32 {
        for x in 0..img.width() as i32 {
            let p = Pos::new(x, y);
            let z = rect.clamp(p);
            let shift = p.sub(z);
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut wsum = 0.0;
            if params.include_self {
                wsum = 1.0;
                for (a, &v) in acc.iter_mut().zip(img.pixel(x as usize, y as usize)) {
                    *a = v as f64;
                }
            }
            for e in field.heap(z) {
                let w = (-(e.dist / samples) / h2).exp();
                if w == 0.0 {
                    continue;
                }
                let q = e.target.add(shift);
                wsum += w;
                for (a, &v) in acc.iter_mut().zip(img.pixel(q.x as usize, q.y as usize)) {
                    *a += w * v as f64;
                }
            }
            if wsum > 0.0 {
                for (o, a) in out.pixel_mut(x as usize, y as usize).iter_mut().zip(&acc) {
                    *o = (a / wsum) as f32;
                }
            }
        }
    }
    Ok(out)
}
