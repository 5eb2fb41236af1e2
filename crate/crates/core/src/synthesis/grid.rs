use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::{Pos, Rect};

/// Row-major per-pixel map (masks, labels, weights).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

pub type Mask = Grid<bool>;
pub type LabelMap = Grid<u32>;

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, v: T) -> Self {
        Grid {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Grid { width, height, data })
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Value at an integer position, `None` outside the grid.
    pub fn at(&self, p: Pos) -> Option<T> {
        if p.x < 0 || p.y < 0 || p.x as usize >= self.width || p.y as usize >= self.height {
            None
        } else {
            Some(self.get(p.x as usize, p.y as usize))
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn rect(&self) -> Rect {
        Rect::new(0, 0, self.width as i32, self.height as i32)
    }

    pub fn require_dims(&self, width: usize, height: usize, what: &str) -> Result<()> {
        if (self.width, self.height) != (width, height) {
            return Err(Error::DimensionMismatch(format!(
                "{what} is {}x{}, image is {width}x{height}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Resamples by reducing the fine pixels covered by each output pixel.
    pub(crate) fn reduce(&self, w: usize, h: usize, f: impl Fn(&mut dyn Iterator<Item = T>) -> T) -> Grid<T> {
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let (ya, yb) = span(y, sy, self.height);
            for x in 0..w {
                let (xa, xb) = span(x, sx, self.width);
                let mut it = (ya..yb)
                    .flat_map(|yy| (xa..xb).map(move |xx| (xx, yy)))
                    .map(|(xx, yy)| self.get(xx, yy));
                data.push(f(&mut it));
            }
        }
        Grid {
            width: w,
            height: h,
            data,
        }
    }

    /// Nearest-neighbor resample using pixel-center alignment.
    pub fn resample_nearest(&self, w: usize, h: usize) -> Grid<T> {
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let yy = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            for x in 0..w {
                let xx = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
                data.push(self.get(xx, yy));
            }
        }
        Grid {
            width: w,
            height: h,
            data,
        }
    }
}

fn span(o: usize, scale: f64, n: usize) -> (usize, usize) {
    let a = ((o as f64 * scale).floor() as usize).min(n - 1);
    let b = (((o + 1) as f64 * scale).ceil() as usize).clamp(a + 1, n);
    (a, b)
}

impl Mask {
    /// Coarse pixel is set only when every covered fine pixel is set.
    pub fn shrink_all(&self, w: usize, h: usize) -> Mask {
        self.reduce(w, h, |it| it.filter(|&v| !v).count() == 0)
    }

    /// Coarse pixel is set when any covered fine pixel is set.
    pub fn shrink_any(&self, w: usize, h: usize) -> Mask {
        self.reduce(w, h, |it| it.filter(|&v| v).count() > 0)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn not(&self) -> Mask {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    /// Decodes a mask image: with an alpha channel the alpha decides,
    /// otherwise any nonzero color value sets the pixel.
    pub fn from_image(img: &ImageBuffer) -> Mask {
        let c = img.channels();
        let data = img
            .data()
            .chunks_exact(c)
            .map(|px| match c {
                2 | 4 => px[c - 1] > 0.0,
                _ => px.iter().any(|&v| v > 0.0),
            })
            .collect();
        Grid {
            width: img.width(),
            height: img.height(),
            data,
        }
    }
}

impl LabelMap {
    /// Coarse label: the most frequent nonzero label among covered pixels,
    /// so thin labeled strokes survive downsampling.
    pub fn shrink_labels(&self, w: usize, h: usize) -> LabelMap {
        self.reduce(w, h, |it| {
            let mut counts: Vec<(u32, usize)> = Vec::new();
            for v in it.filter(|&v| v != 0) {
                match counts.iter_mut().find(|c| c.0 == v) {
                    Some(c) => c.1 += 1,
                    None => counts.push((v, 1)),
                }
            }
            counts
                .iter()
                .max_by_key(|c| (c.1, std::cmp::Reverse(c.0)))
                .map_or(0, |c| c.0)
        })
    }

    /// Decodes an indexed-color label image. Each distinct color becomes one
    /// label numbered by first appearance in raster order; black and fully
    /// transparent pixels are 0.
    pub fn from_image(img: &ImageBuffer) -> LabelMap {
        let c = img.channels();
        let mut ids: HashMap<[u8; 3], u32> = HashMap::new();
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let data = img
            .data()
            .chunks_exact(c)
            .map(|px| {
                if matches!(c, 2 | 4) && px[c - 1] == 0.0 {
                    return 0;
                }
                let key = match c {
                    1 | 2 => [q(px[0]); 3],
                    _ => [q(px[0]), q(px[1]), q(px[2])],
                };
                if key == [0, 0, 0] {
                    return 0;
                }
                let next = ids.len() as u32 + 1;
                *ids.entry(key).or_insert(next)
            })
            .collect();
        Grid {
            width: img.width(),
            height: img.height(),
            data,
        }
    }
}
