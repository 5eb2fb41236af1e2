//! Procedural test imagery: natural-looking scenes, similar pairs, periodic
//! textures and noise. Used by the test suites, the benchmark harness and
//! the browser demo.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::image::{ColorSpace, ImageBuffer};
use crate::synthesis::Mask;

/// Multi-octave value noise in `[0, 1]`, one independent field per channel.
pub fn value_noise(w: usize, h: usize, channels: usize, cell: f32, octaves: usize, seed: u64) -> ImageBuffer {
    let mut out = ImageBuffer::filled(w, h, channels, ColorSpace::Srgb, 0.0);
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut amp = 1.0f32;
    let mut total = 0.0f32;
    let mut size = cell.max(1.0);
    for _ in 0..octaves.max(1) {
        let gw = (w as f32 / size).ceil() as usize + 2;
        let gh = (h as f32 / size).ceil() as usize + 2;
        for c in 0..channels {
            let grid: Vec<f32> = (0..gw * gh).map(|_| rng.gen::<f32>()).collect();
            for y in 0..h {
                let fy = y as f32 / size;
                let y0 = fy.floor() as usize;
                let ty = smooth(fy - y0 as f32);
                for x in 0..w {
                    let fx = x as f32 / size;
                    let x0 = fx.floor() as usize;
                    let tx = smooth(fx - x0 as f32);
                    let g = |xx: usize, yy: usize| grid[yy * gw + xx];
                    let top = g(x0, y0) * (1.0 - tx) + g(x0 + 1, y0) * tx;
                    let bot = g(x0, y0 + 1) * (1.0 - tx) + g(x0 + 1, y0 + 1) * tx;
                    let v = out.get(x, y, c) + amp * (top * (1.0 - ty) + bot * ty);
                    out.set(x, y, c, v);
                }
            }
        }
        total += amp;
        amp *= 0.5;
        size = (size / 2.0).max(1.0);
    }
    for v in out.data_mut() {
        *v /= total;
    }
    out
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Natural-looking RGB scene: smooth color noise overlaid with hard-edged
/// disks, rectangles and a striped band.
pub fn scene(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut img = value_noise(w, h, 3, (w.min(h) as f32 / 4.0).max(4.0), 5, seed);
    let mut rng = SmallRng::seed_from_u64(seed ^ 0x5eed);
    let shapes = 6 + (w * h) / 6000;
    for _ in 0..shapes {
        let color: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let cx = rng.gen_range(0.0..w as f32);
        let cy = rng.gen_range(0.0..h as f32);
        let r = rng.gen_range(3.0..(w.min(h) as f32 / 6.0).max(4.0));
        let disk = rng.gen_bool(0.5);
        let stripes = rng.gen_bool(0.3);
        let period = rng.gen_range(3.0..9.0f32);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let inside = if disk {
                    dx * dx + dy * dy < r * r
                } else {
                    dx.abs() < r && dy.abs() < r * 0.6
                };
                if inside {
                    let k = if stripes && ((x as f32 + y as f32) / period).floor() as i64 % 2 == 0 {
                        0.6
                    } else {
                        1.0
                    };
                    let px = img.pixel_mut(x, y);
                    for c in 0..3 {
                        px[c] = 0.25 * px[c] + 0.75 * color[c] * k;
                    }
                }
            }
        }
    }
    img
}

/// Two overlapping views of one scene: `b` is shifted by `shift`, carries
/// mild sensor noise and a small gain change.
pub fn similar_pair(w: usize, h: usize, shift: (usize, usize), seed: u64) -> (ImageBuffer, ImageBuffer) {
    let big = scene(w + shift.0, h + shift.1, seed);
    let a = big.crop(0, 0, w, h).expect("in bounds");
    let mut b = big.crop(shift.0, shift.1, w, h).expect("in bounds");
    add_gaussian_noise(&mut b, 2.0 / 255.0, seed ^ 0xb);
    for v in b.data_mut() {
        *v = (*v * 1.02).clamp(0.0, 1.0);
    }
    (a, b)
}

/// Uniform white noise in `[0, 1]`.
pub fn white_noise(w: usize, h: usize, channels: usize, seed: u64) -> ImageBuffer {
    let mut rng = SmallRng::seed_from_u64(seed);
    ImageBuffer::from_fn(w, h, channels, ColorSpace::Srgb, |_, _, _| rng.gen())
}

/// Adds i.i.d. Gaussian noise; samples are not clamped.
pub fn add_gaussian_noise(img: &mut ImageBuffer, sigma: f32, seed: u64) {
    let mut rng = SmallRng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, sigma).expect("finite sigma");
    for v in img.data_mut() {
        *v += normal.sample(&mut rng);
    }
}

/// Periodic tiling of `tile`.
pub fn tiled(w: usize, h: usize, tile: &ImageBuffer) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, tile.channels(), tile.space(), |x, y, c| {
        tile.get(x % tile.width(), y % tile.height(), c)
    })
}

/// Running-bond brick wall: mortar lines between alternating-offset bricks
/// with per-brick color jitter.
pub fn bricks(w: usize, h: usize, brick: (usize, usize), seed: u64) -> ImageBuffer {
    let mut rng = SmallRng::seed_from_u64(seed);
    let rows = h / brick.1 + 2;
    let cols = w / brick.0 + 2;
    let jitter: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-0.08..0.08)).collect();
    ImageBuffer::from_fn(w, h, 3, ColorSpace::Srgb, |x, y, c| {
        let row = y / brick.1;
        let shift = if row % 2 == 1 { brick.0 / 2 } else { 0 };
        let xx = x + shift;
        let col = xx / brick.0;
        let mortar = y % brick.1 == 0 || xx % brick.0 == 0;
        if mortar {
            [0.85, 0.85, 0.8][c]
        } else {
            let j = jitter[row * cols + col];
            ([0.62, 0.28, 0.2][c] + j).clamp(0.0, 1.0)
        }
    })
}

pub fn psnr(clean: &ImageBuffer, test: &ImageBuffer) -> f64 {
    let mse = clean
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        / clean.data().len() as f64;
    10.0 * (1.0 / mse.max(1e-20)).log10()
}

/// Copies the `size x size` block at `from` to `to`. Returns the tampered
/// image and the mask of copied and pasted pixels.
pub fn copy_move(img: &ImageBuffer, from: (usize, usize), to: (usize, usize), size: usize) -> (ImageBuffer, Mask) {
    let mut out = img.clone();
    let mut truth = Mask::filled(img.width(), img.height(), false);
    for dy in 0..size {
        for dx in 0..size {
            let px = img.pixel(from.0 + dx, from.1 + dy).to_vec();
            out.pixel_mut(to.0 + dx, to.1 + dy).copy_from_slice(&px);
            truth.set(from.0 + dx, from.1 + dy, true);
            truth.set(to.0 + dx, to.1 + dy, true);
        }
    }
    (out, truth)
}

/// Pastes `template` into a copy of `background` under the similarity
/// `q = scale·R(theta)·p + t` (template pixel coordinates to background
/// coordinates), with bilinear sampling of the template.
pub fn paste_similarity(
    background: &ImageBuffer,
    template: &ImageBuffer,
    theta: f64,
    scale: f64,
    t: (f64, f64),
) -> ImageBuffer {
    let mut out = background.clone();
    let (s, c) = theta.sin_cos();
    let (tw, th) = (template.width() as f64, template.height() as f64);
    let mut px = vec![0.0f32; template.channels()];
    for y in 0..out.height() {
        for x in 0..out.width() {
            let (dx, dy) = (x as f64 - t.0, y as f64 - t.1);
            let u = (c * dx + s * dy) / scale;
            let v = (-s * dx + c * dy) / scale;
            if u >= 0.0 && v >= 0.0 && u <= tw - 1.0 && v <= th - 1.0 {
                template.sample_bilinear(u as f32, v as f32, &mut px);
                out.pixel_mut(x, y).copy_from_slice(&px);
            }
        }
    }
    out
}

pub fn iou(a: &Mask, b: &Mask) -> f64 {
    let inter = a.data.iter().zip(&b.data).filter(|(x, y)| **x && **y).count();
    let union = a.data.iter().zip(&b.data).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic_and_bounded() {
        let a = scene(40, 30, 3);
        assert_eq!(a, scene(40, 30, 3));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let (p, q) = similar_pair(32, 32, (4, 2), 1);
        assert_eq!((p.width(), q.height()), (32, 32));
        let t = tiled(10, 10, &white_noise(3, 3, 1, 0));
        assert_eq!(t.get(0, 0, 0), t.get(3, 6, 0));
    }
}
