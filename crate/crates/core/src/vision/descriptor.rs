use crate::error::Result;
use crate::gpm::DescriptorField;
use crate::image::ImageBuffer;
use crate::patch::PatchGeometry;

pub const CELLS: usize = 4;
pub const BINS: usize = 8;

/// Dense gradient-orientation descriptor: per patch, a `4 x 4` grid of cells
/// each holding an 8-bin histogram of gradient orientations weighted by
/// magnitude, L2-normalized. Flat patches give the zero vector.
pub fn dense_descriptor(img: &ImageBuffer, geom: &PatchGeometry) -> Result<DescriptorField> {
    let rect = geom.valid_rect_of(img);
    if rect.is_empty() {
        return Err(crate::Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            required: geom.size(),
        });
    }
    let g = img.to_gray();
    let (w, h) = (g.width(), g.height());
    let at = |x: usize, y: usize| g.get(x, y, 0);
    let mut mag = vec![0.0f32; w * h];
    let mut bin = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let gx = 0.5 * (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y));
            let gy = 0.5 * (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1)));
            let m = gx.hypot(gy);
            mag[y * w + x] = m;
            let a = gy.atan2(gx).rem_euclid(std::f32::consts::TAU);
            bin[y * w + x] = ((a / std::f32::consts::TAU * BINS as f32) as usize).min(BINS - 1) as u8;
        }
    }
    let p = geom.size();
    let half = geom.half();
    let dim = CELLS * CELLS * BINS;
    Ok(DescriptorField::from_fn(rect, dim, |z, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for dy in 0..p {
            for dx in 0..p {
                let x = (z.x - half) as usize + dx;
                let y = (z.y - half) as usize + dy;
                let cell = (dy * CELLS / p) * CELLS + dx * CELLS / p;
                let i = y * w + x;
                out[cell * BINS + bin[i] as usize] += mag[i];
            }
        }
        let n = out.iter().map(|v| v * v).sum::<f32>().sqrt();
        if n > 1e-12 {
            out.iter_mut().for_each(|v| *v /= n);
        }
    }))
}
