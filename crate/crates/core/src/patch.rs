//! Patch geometry and the sum-of-squared-differences kernel.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Integer pixel coordinate (patch centers, targets, offsets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Pos {
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn sub(self, other: Pos) -> Pos {
        Pos::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Pos) -> Pos {
        Pos::new(self.x + other.x, self.y + other.y)
    }

    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn norm(self) -> f64 {
        ((self.x as f64).powi(2) + (self.y as f64).powi(2)).sqrt()
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Half-open integer rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl Rect {
    pub const fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> i32 {
        (self.x1 - self.x0).max(0)
    }

    pub fn height(&self) -> i32 {
        (self.y1 - self.y0).max(0)
    }

    pub fn area(&self) -> usize {
        self.width() as usize * self.height() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn contains(&self, p: Pos) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    /// Nearest point of the rectangle. The rectangle must be nonempty.
    pub fn clamp(&self, p: Pos) -> Pos {
        Pos::new(p.x.clamp(self.x0, self.x1 - 1), p.y.clamp(self.y0, self.y1 - 1))
    }

    /// Raster index of `p` relative to the rectangle origin.
    pub fn index(&self, p: Pos) -> usize {
        (p.y - self.y0) as usize * self.width() as usize + (p.x - self.x0) as usize
    }

    pub fn pos(&self, index: usize) -> Pos {
        let w = self.width() as usize;
        Pos::new(self.x0 + (index % w) as i32, self.y0 + (index / w) as i32)
    }

    pub fn iter(self) -> impl Iterator<Item = Pos> {
        let r = self;
        (r.y0..r.y1).flat_map(move |y| (r.x0..r.x1).map(move |x| Pos::new(x, y)))
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.is_empty() || (other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1)
    }

    pub fn translate(&self, d: Pos) -> Rect {
        Rect::new(self.x0 + d.x, self.y0 + d.y, self.x1 + d.x, self.y1 + d.y)
    }
}

/// Square patch of odd side length, identified by its center pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    size: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        PatchGeometry { size: 7 }
    }
}

impl PatchGeometry {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::param(format!("patch size must be odd and positive, got {size}")));
        }
        Ok(PatchGeometry { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn half(&self) -> i32 {
        (self.size / 2) as i32
    }

    /// Number of samples in one patch for an image with `channels` channels.
    pub fn samples(&self, channels: usize) -> usize {
        self.size * self.size * channels
    }

    /// Centers at which a full patch fits inside a `width x height` image.
    pub fn valid_rect(&self, width: usize, height: usize) -> Rect {
        let h = self.half();
        Rect::new(h, h, width as i32 - h, height as i32 - h)
    }

    pub fn valid_rect_of(&self, img: &ImageBuffer) -> Rect {
        self.valid_rect(img.width(), img.height())
    }

    pub(crate) fn require_fits(&self, img: &ImageBuffer) -> Result<Rect> {
        let r = self.valid_rect_of(img);
        if r.is_empty() {
            return Err(Error::ImageTooSmall {
                width: img.width(),
                height: img.height(),
                required: self.size,
            });
        }
        Ok(r)
    }
}

/// Sum of squared differences between the patch of `a` centered at `pa` and
/// the patch of `b` centered at `pb`.
///
/// With `early_stop = Some(bound)` the summation may stop as soon as the
/// partial sum exceeds `bound`; the returned value is then some number
/// `>= bound` and is only meaningful for comparison against it.
pub fn patch_distance(
    a: &ImageBuffer,
    pa: Pos,
    b: &ImageBuffer,
    pb: Pos,
    geom: &PatchGeometry,
    early_stop: Option<f64>,
) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(Error::ChannelCount {
            expected: a.channels(),
            found: b.channels(),
        });
    }
    if !geom.valid_rect_of(a).contains(pa) {
        return Err(Error::OutsideValidRect(pa));
    }
    if !geom.valid_rect_of(b).contains(pb) {
        return Err(Error::OutsideValidRect(pb));
    }
    Ok(ssd(a, pa, b, pb, geom.half(), early_stop.unwrap_or(f64::INFINITY)))
}

/// Unchecked SSD kernel. Both centers must be valid for half-size `half`.
#[inline]
pub(crate) fn ssd(a: &ImageBuffer, pa: Pos, b: &ImageBuffer, pb: Pos, half: i32, bound: f64) -> f64 {
    let c = a.channels();
    let row_len = (2 * half as usize + 1) * c;
    let a_data = a.data();
    let b_data = b.data();
    let a_stride = a.width() * c;
    let b_stride = b.width() * c;
    let mut a_off = (pa.y - half) as usize * a_stride + (pa.x - half) as usize * c;
    let mut b_off = (pb.y - half) as usize * b_stride + (pb.x - half) as usize * c;
    let mut sum = 0.0f64;
    for _ in 0..(2 * half + 1) {
        let ra = &a_data[a_off..a_off + row_len];
        let rb = &b_data[b_off..b_off + row_len];
        sum = row_ssd_acc(ra, rb, sum);
        if sum > bound {
            return sum;
        }
        a_off += a_stride;
        b_off += b_stride;
    }
    sum
}

/// Adds the squared differences of two equal-length rows to `s`, in order.
#[inline]
pub fn row_ssd_acc(ra: &[f32], rb: &[f32], mut s: f64) -> f64 {
    for (&x, &y) in ra.iter().zip(rb) {
        let d = (x - y) as f64;
        s += d * d;
    }
    s
}

/// Copies the patch centered at `p` into a flat row-major vector.
pub fn extract_patch(img: &ImageBuffer, p: Pos, geom: &PatchGeometry) -> Vec<f32> {
    let h = geom.half();
    let c = img.channels();
    let mut out = Vec::with_capacity(geom.samples(c));
    for dy in -h..=h {
        let y = (p.y + dy) as usize;
        let start = (y * img.width() + (p.x - h) as usize) * c;
        out.extend_from_slice(&img.data()[start..start + geom.size() * c]);
    }
    out
}

/// Standardizes a patch in place: subtracts the mean and divides by the
/// standard deviation, floored at `1e-4`.
pub fn normalize_patch(v: &mut [f32]) {
    if v.is_empty() {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-4);
    for x in v.iter_mut() {
        *x = ((*x as f64 - mean) / std) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorSpace;
    use rand::{Rng, SeedableRng};

    fn noise(w: usize, h: usize, c: usize, seed: u64) -> ImageBuffer {
        let mut rng = rand::rngs::SmallRng::seed_from_u64(seed);
        let data = (0..w * h * c).map(|_| rng.gen::<f32>()).collect();
        ImageBuffer::new(w, h, c, ColorSpace::Srgb, data).unwrap()
    }

    #[test]
    fn valid_rect_shrinks_by_patch_minus_one() {
        let g = PatchGeometry::default();
        let r = g.valid_rect(40, 30);
        assert_eq!(r, Rect::new(3, 3, 37, 27));
        assert_eq!(r.width(), 40 - 6);
        assert_eq!(r.height(), 30 - 6);
    }

    #[test]
    fn even_patch_rejected() {
        assert!(PatchGeometry::new(6).is_err());
        assert!(PatchGeometry::new(0).is_err());
    }

    #[test]
    fn identical_patches_are_zero() {
        let a = noise(20, 20, 3, 1);
        let g = PatchGeometry::default();
        for p in g.valid_rect_of(&a).iter() {
            assert_eq!(patch_distance(&a, p, &a, p, &g, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn uniform_offset_closed_form() {
        let a = ImageBuffer::filled(9, 9, 1, ColorSpace::Srgb, 0.5);
        let b = ImageBuffer::filled(9, 9, 1, ColorSpace::Srgb, 0.5 + 1.0 / 255.0);
        let g = PatchGeometry::default();
        let d = patch_distance(&a, Pos::new(4, 4), &b, Pos::new(4, 4), &g, None).unwrap();
        let step = (0.5f32 + 1.0 / 255.0 - 0.5f32) as f64;
        assert!((d - 49.0 * step * step).abs() < 1e-12);
        assert!((d - 49.0 / (255.0f64 * 255.0)).abs() < 1e-8);
    }

    #[test]
    fn matches_naive_double_loop() {
        let a = noise(15, 15, 3, 2);
        let b = noise(15, 15, 3, 3);
        let g = PatchGeometry::default();
        let (pa, pb) = (Pos::new(5, 8), Pos::new(10, 4));
        let mut naive = 0.0f64;
        for dy in -3..=3 {
            for dx in -3..=3 {
                for ch in 0..3 {
                    let va = a.get((pa.x + dx) as usize, (pa.y + dy) as usize, ch);
                    let vb = b.get((pb.x + dx) as usize, (pb.y + dy) as usize, ch);
                    naive += ((va - vb) as f64).powi(2);
                }
            }
        }
        let d = patch_distance(&a, pa, &b, pb, &g, None).unwrap();
        assert!((d - naive).abs() <= 1e-12 * naive.max(1.0));
        // symmetric for SSD
        let r = patch_distance(&b, pb, &a, pa, &g, None).unwrap();
        assert_eq!(d, r);
    }

    #[test]
    fn early_stop_reports_at_least_bound() {
        let a = noise(15, 15, 3, 4);
        let b = noise(15, 15, 3, 5);
        let g = PatchGeometry::default();
        let full = patch_distance(&a, Pos::new(7, 7), &b, Pos::new(7, 7), &g, None).unwrap();
        let bound = full / 4.0;
        let stopped = patch_distance(&a, Pos::new(7, 7), &b, Pos::new(7, 7), &g, Some(bound)).unwrap();
        assert!(stopped >= bound);
        let exact = patch_distance(&a, Pos::new(7, 7), &b, Pos::new(7, 7), &g, Some(f64::INFINITY)).unwrap();
        assert_eq!(exact, full);
    }

    #[test]
    fn outside_valid_rect_is_error() {
        let a = noise(10, 10, 1, 6);
        let g = PatchGeometry::default();
        let err = patch_distance(&a, Pos::new(2, 5), &a, Pos::new(5, 5), &g, None);
        assert!(matches!(err, Err(Error::OutsideValidRect(_))));
        let b = noise(10, 10, 3, 6);
        assert!(patch_distance(&a, Pos::new(5, 5), &b, Pos::new(5, 5), &g, None).is_err());
    }

    #[test]
    fn extract_patch_layout() {
        let a = noise(12, 12, 2, 7);
        let g = PatchGeometry::new(3).unwrap();
        let v = extract_patch(&a, Pos::new(4, 5), &g);
        assert_eq!(v.len(), 18);
        assert_eq!(v[0], a.get(3, 4, 0));
        assert_eq!(v[17], a.get(5, 6, 1));
    }

    proptest::proptest! {
        #[test]
        fn ssd_symmetric_and_self_zero(seed in 0u64..1000, ax in 3i32..17, ay in 3i32..17, bx in 3i32..17, by in 3i32..17) {
            let a = noise(20, 20, 3, seed);
            let b = noise(20, 20, 3, seed + 1);
            let g = PatchGeometry::default();
            let (pa, pb) = (Pos::new(ax, ay), Pos::new(bx, by));
            let d1 = patch_distance(&a, pa, &b, pb, &g, None).unwrap();
            let d2 = patch_distance(&b, pb, &a, pa, &g, None).unwrap();
            proptest::prop_assert_eq!(d1, d2);
            proptest::prop_assert_eq!(patch_distance(&a, pa, &a, pa, &g, None).unwrap(), 0.0);
        }
    }
}
