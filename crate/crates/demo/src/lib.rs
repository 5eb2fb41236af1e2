//! WebAssembly bindings for the demo page in `www/`. Images travel as PNG or
//! JPEG bytes in and PNG bytes out.

use patchmatch::annf::{compute_nnf, SearchParams};
use patchmatch::image::{decode_image, encode_png};
use patchmatch::synthesis::{retarget, ConstraintSet, EmSchedule};
use patchmatch::vision::{nlm_denoise, DenoiseParams};
use patchmatch::{ColorSpace, ImageBuffer, PatchGeometry};
use wasm_bindgen::prelude::*;

/// Nearest-neighbor field drawn as color: red is the matched x and green the
/// matched y, both relative to the second image's size.
#[wasm_bindgen]
pub struct NnfView {
    png: Vec<u8>,
    mean_dist: f64,
}

#[wasm_bindgen]
impl NnfView {
    #[wasm_bindgen(getter)]
    pub fn png(&self) -> Vec<u8> {
        self.png.clone()
    }
    /// Mean patch distance over the field.
    #[wasm_bindgen(getter, js_name = meanDist)]
    pub fn mean_dist(&self) -> f64 {
        self.mean_dist
    }
}

fn fail(e: impl ToString) -> String {
    e.to_string()
}

pub fn nnf_view_impl(a: &[u8], b: &[u8], patch_size: usize, iterations: usize, seed: u32) -> Result<NnfView, String> {
    let (a, b) = (decode_image(a).map_err(fail)?, decode_image(b).map_err(fail)?);
    let geom = PatchGeometry::new(patch_size).map_err(fail)?;
    let params = SearchParams {
        iterations,
        threads: 1,
        ..SearchParams::default()
    };
    let f = compute_nnf(&a, &b, &geom, &params, false, seed as u64).map_err(fail)?;
    let src = f.source_rect();
    let (bw, bh) = (b.width().max(2) - 1, b.height().max(2) - 1);
    let view = ImageBuffer::from_fn(a.width(), a.height(), 3, ColorSpace::Srgb, |x, y, c| {
        let p = src.clamp(patchmatch::Pos::new(x as i32, y as i32));
        let t = f.entries()[src.index(p)].target;
        match c {
            0 => t.x as f32 / bw as f32,
            1 => t.y as f32 / bh as f32,
            _ => 0.0,
        }
    });
    Ok(NnfView {
        png: encode_png(&view).map_err(fail)?,
        mean_dist: f.mean_distance(),
    })
}

pub fn denoise_impl(img: &[u8], k: usize, h: f64, seed: u32) -> Result<Vec<u8>, String> {
    let img = decode_image(img).map_err(fail)?;
    let params = DenoiseParams {
        k,
        h,
        seed: seed as u64,
        ..DenoiseParams::default()
    };
    let out = nlm_denoise(&img, &PatchGeometry::default(), &params).map_err(fail)?;
    encode_png(&out).map_err(fail)
}

pub fn retarget_impl(img: &[u8], width: usize, height: usize, seed: u32) -> Result<Vec<u8>, String> {
    let img = decode_image(img).map_err(fail)?;
    let schedule = EmSchedule {
        seed: seed as u64,
        coarse_iters: 8,
        fine_iters: 2,
        ..EmSchedule::default()
    };
    let out = retarget(&img, (width, height), &ConstraintSet::default(), &schedule).map_err(fail)?;
    encode_png(&out).map_err(fail)
}

#[wasm_bindgen(js_name = nnfView)]
pub fn nnf_view(a: &[u8], b: &[u8], patch_size: usize, iterations: usize, seed: u32) -> Result<NnfView, JsError> {
    nnf_view_impl(a, b, patch_size, iterations, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn denoise(img: &[u8], k: usize, h: f64, seed: u32) -> Result<Vec<u8>, JsError> {
    denoise_impl(img, k, h, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = retarget)]
pub fn retarget_js(img: &[u8], width: usize, height: usize, seed: u32) -> Result<Vec<u8>, JsError> {
    retarget_impl(img, width, height, seed).map_err(|e| JsError::new(&e))
}
