//! Float image container, color conversion, resampling and pyramids.

use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ColorSpace {
    /// 8-bit sRGB decoded to float, still gamma encoded.
    #[default]
    Srgb,
    LinearRgb,
    /// CIELab (D65); L in [0, 100].
    Lab,
}

/// Row-major `height x width x channels` float image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    space: ColorSpace,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, space: ColorSpace, data: Vec<f32>) -> Result<Self> {
        if !(1..=4).contains(&channels) {
            return Err(Error::InvalidImage(format!("channel count {channels} not in 1..=4")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} != {width}*{height}*{channels}",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            space,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, space: ColorSpace, value: f32) -> Self {
        ImageBuffer {
            width,
            height,
            channels,
            space,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        ImageBuffer {
            width,
            height,
            channels,
            space,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn space(&self) -> ColorSpace {
        self.space
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn with_space(mut self, space: ColorSpace) -> Self {
        self.space = space;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Bilinear sample with edge clamping. `x`, `y` are pixel-center coordinates.
    pub fn sample_bilinear(&self, x: f32, y: f32, out: &mut [f32]) {
        let xf = x.clamp(0.0, (self.width - 1) as f32);
        let yf = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xf.floor() as usize;
        let y0 = yf.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xf - x0 as f32;
        let fy = yf - y0 as f32;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bot = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            *o = top * (1.0 - fy) + bot * fy;
        }
    }

    /// Copy of the sub-image `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageBuffer> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let s = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[s..s + w * c]);
        }
        ImageBuffer::new(w, h, c, self.space, data)
    }

    /// Per-channel (min, max).
    pub fn channel_range(&self) -> Vec<(f32, f32)> {
        let mut r = vec![(f32::INFINITY, f32::NEG_INFINITY); self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (c, &v) in px.iter().enumerate() {
                r[c].0 = r[c].0.min(v);
                r[c].1 = r[c].1.max(v);
            }
        }
        r
    }

    /// Luminance-like single channel image (channel mean).
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let c = self.channels.min(3);
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[..c].iter().sum::<f32>() / c as f32)
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            space: self.space,
            data,
        }
    }

    /// Drops an alpha channel if present.
    pub fn to_rgb(&self) -> ImageBuffer {
        match self.channels {
            3 => self.clone(),
            4 => {
                let data = self.data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
                ImageBuffer {
                    width: self.width,
                    height: self.height,
                    channels: 3,
                    space: self.space,
                    data,
                }
            }
            1 => {
                let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
                ImageBuffer {
                    width: self.width,
                    height: self.height,
                    channels: 3,
                    space: self.space,
                    data,
                }
            }
            _ => {
                let data = self.data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect();
                ImageBuffer {
                    width: self.width,
                    height: self.height,
                    channels: 3,
                    space: self.space,
                    data,
                }
            }
        }
    }
}

/// Decodes a PNG or JPEG file to float samples in `[0, 1]`, tagged sRGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decode { message, .. } => Error::Decode {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Decodes in-memory PNG or JPEG bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let format = image::guess_format(bytes).map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
        path: Default::default(),
        message: e.to_string(),
    })?;
    Ok(from_dynamic(&img))
}

fn from_dynamic(img: &DynamicImage) -> ImageBuffer {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let to_f = |v: u8| v as f32 / 255.0;
    let to_f16 = |v: u16| v as f32 / 65535.0;
    let (channels, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.as_raw().iter().map(|&v| to_f(v)).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.as_raw().iter().map(|&v| to_f16(v)).collect()),
        DynamicImage::ImageLumaA8(b) => (2, b.as_raw().iter().map(|&v| to_f(v)).collect()),
        DynamicImage::ImageRgba8(b) => (4, b.as_raw().iter().map(|&v| to_f(v)).collect()),
        DynamicImage::ImageRgba16(_) | DynamicImage::ImageLumaA16(_) => (4, img.to_rgba32f().into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.as_raw().iter().map(|&v| to_f(v)).collect()),
        _ => (3, img.to_rgb32f().into_raw()),
    };
    ImageBuffer {
        width: w,
        height: h,
        channels,
        space: ColorSpace::Srgb,
        data,
    }
}

fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes as 8-bit sRGB PNG. Linear and Lab buffers are converted first.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let srgb = match img.space {
        ColorSpace::Srgb => img.clone(),
        ColorSpace::LinearRgb => linear_to_srgb(img)?,
        ColorSpace::Lab => lab_to_srgb(img)?,
    };
    let (w, h) = (srgb.width as u32, srgb.height as u32);
    let raw: Vec<u8> = srgb.data.iter().map(|&v| quantize_u8(v)).collect();
    let dynimg = match srgb.channels {
        1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, raw).expect("sized")),
        2 => DynamicImage::ImageLumaA8(image::GrayAlphaImage::from_raw(w, h, raw).expect("sized")),
        3 => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, raw).expect("sized")),
        _ => DynamicImage::ImageRgba8(image::RgbaImage::from_raw(w, h, raw).expect("sized")),
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynimg
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[inline]
fn srgb_decode(c: f32) -> f32 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn srgb_encode(c: f32) -> f32 {
    if c <= 0.0031308 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

fn require_rgb(img: &ImageBuffer) -> Result<()> {
    if img.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            found: img.channels,
        });
    }
    Ok(())
}

fn map_pixels(img: &ImageBuffer, space: ColorSpace, f: impl Fn([f32; 3]) -> [f32; 3]) -> ImageBuffer {
    let data = img.data.chunks_exact(3).flat_map(|p| f([p[0], p[1], p[2]])).collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 3,
        space,
        data,
    }
}

fn linear_rgb_to_lab(rgb: [f32; 3]) -> [f32; 3] {
    let [r, g, b] = rgb.map(|v| v as f64);
    let mut xyz = [0.0; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        xyz[i] = (row[0] * r + row[1] * g + row[2] * b) / WHITE[i];
    }
    const D: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > D * D * D {
            t.cbrt()
        } else {
            t / (3.0 * D * D) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(xyz[0]), f(xyz[1]), f(xyz[2]));
    [
        (116.0 * fy - 16.0) as f32,
        (500.0 * (fx - fy)) as f32,
        (200.0 * (fy - fz)) as f32,
    ]
}

fn lab_to_linear_rgb(lab: [f32; 3]) -> [f32; 3] {
    let [l, a, b] = lab.map(|v| v as f64);
    let fy = (l + 16.0) / 116.0;
    let fx = fy + a / 500.0;
    let fz = fy - b / 200.0;
    const D: f64 = 6.0 / 29.0;
    let finv = |t: f64| {
        if t > D {
            t * t * t
        } else {
            3.0 * D * D * (t - 4.0 / 29.0)
        }
    };
    let xyz = [finv(fx) * WHITE[0], finv(fy) * WHITE[1], finv(fz) * WHITE[2]];
    let mut rgb = [0.0f32; 3];
    for (i, row) in XYZ_TO_RGB.iter().enumerate() {
        rgb[i] = (row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2]) as f32;
    }
    rgb
}

pub fn srgb_to_linear(img: &ImageBuffer) -> Result<ImageBuffer> {
    match img.space {
        ColorSpace::LinearRgb => Ok(img.clone()),
        ColorSpace::Lab => lab_to_linear(img),
        ColorSpace::Srgb => {
            let mut out = img.clone();
            let color = img.channels.min(3);
            for px in out.data.chunks_exact_mut(img.channels) {
                for v in px[..color].iter_mut() {
                    *v = srgb_decode(*v);
                }
            }
            out.space = ColorSpace::LinearRgb;
            Ok(out)
        }
    }
}

pub fn linear_to_srgb(img: &ImageBuffer) -> Result<ImageBuffer> {
    match img.space {
        ColorSpace::Srgb => Ok(img.clone()),
        ColorSpace::Lab => lab_to_srgb(img),
        ColorSpace::LinearRgb => {
            let mut out = img.clone();
            let color = img.channels.min(3);
            for px in out.data.chunks_exact_mut(img.channels) {
                for v in px[..color].iter_mut() {
                    *v = srgb_encode(v.clamp(0.0, 1.0));
                }
            }
            out.space = ColorSpace::Srgb;
            Ok(out)
        }
    }
}

/// Converts an sRGB or linear RGB image to CIELab (D65).
pub fn to_lab(img: &ImageBuffer) -> Result<ImageBuffer> {
    require_rgb(img)?;
    Ok(match img.space {
        ColorSpace::Lab => img.clone(),
        ColorSpace::LinearRgb => map_pixels(img, ColorSpace::Lab, linear_rgb_to_lab),
        ColorSpace::Srgb => map_pixels(img, ColorSpace::Lab, |p| linear_rgb_to_lab(p.map(srgb_decode))),
    })
}

fn lab_to_linear(img: &ImageBuffer) -> Result<ImageBuffer> {
    require_rgb(img)?;
    Ok(map_pixels(img, ColorSpace::LinearRgb, lab_to_linear_rgb))
}

pub fn lab_to_srgb(img: &ImageBuffer) -> Result<ImageBuffer> {
    require_rgb(img)?;
    if img.space != ColorSpace::Lab {
        return Err(Error::InvalidImage(format!("expected Lab image, got {:?}", img.space)));
    }
    Ok(map_pixels(img, ColorSpace::Srgb, |p| {
        lab_to_linear_rgb(p).map(|v| srgb_encode(v.clamp(0.0, 1.0)))
    }))
}

/// Area-averaging resample (box filter weighted by pixel overlap).
/// Exact for downsampling; for upsampling it degenerates to nearest.
pub fn resize_area(img: &ImageBuffer, new_w: usize, new_h: usize) -> ImageBuffer {
    assert!(new_w > 0 && new_h > 0, "resize to empty image");
    let c = img.channels;
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    let weights = |n_out: usize, scale: f64, n_in: usize| -> Vec<Vec<(usize, f64)>> {
        (0..n_out)
            .map(|o| {
                let start = o as f64 * scale;
                let end = ((o + 1) as f64 * scale).min(n_in as f64);
                let mut w = Vec::new();
                let mut i = start.floor() as usize;
                while (i as f64) < end && i < n_in {
                    let lo = start.max(i as f64);
                    let hi = end.min((i + 1) as f64);
                    if hi > lo {
                        w.push((i, (hi - lo) / scale));
                    }
                    i += 1;
                }
                w
            })
            .collect()
    };
    let wx = weights(new_w, sx, img.width);
    let wy = weights(new_h, sy, img.height);
    // horizontal pass
    let mut tmp = vec![0.0f64; new_w * img.height * c];
    for y in 0..img.height {
        for (ox, ws) in wx.iter().enumerate() {
            for &(ix, w) in ws {
                let src = img.pixel(ix, y);
                let dst = &mut tmp[(y * new_w + ox) * c..(y * new_w + ox + 1) * c];
                for ch in 0..c {
                    dst[ch] += src[ch] as f64 * w;
                }
            }
        }
    }
    let mut data = vec![0.0f32; new_w * new_h * c];
    for (oy, ws) in wy.iter().enumerate() {
        for ox in 0..new_w {
            let mut acc = vec![0.0f64; c];
            for &(iy, w) in ws {
                let src = &tmp[(iy * new_w + ox) * c..(iy * new_w + ox + 1) * c];
                for ch in 0..c {
                    acc[ch] += src[ch] * w;
                }
            }
            for ch in 0..c {
                data[(oy * new_w + ox) * c + ch] = acc[ch] as f32;
            }
        }
    }
    ImageBuffer {
        width: new_w,
        height: new_h,
        channels: c,
        space: img.space,
        data,
    }
}

/// Bilinear resample using pixel-center alignment.
pub fn resize_bilinear(img: &ImageBuffer, new_w: usize, new_h: usize) -> ImageBuffer {
    let c = img.channels;
    let sx = img.width as f32 / new_w as f32;
    let sy = img.height as f32 / new_h as f32;
    let mut out = ImageBuffer::filled(new_w, new_h, c, img.space, 0.0);
    let mut px = vec![0.0f32; c];
    for y in 0..new_h {
        for x in 0..new_w {
            let fx = (x as f32 + 0.5) * sx - 0.5;
            let fy = (y as f32 + 0.5) * sy - 0.5;
            img.sample_bilinear(fx, fy, &mut px);
            out.pixel_mut(x, y).copy_from_slice(&px);
        }
    }
    out
}

/// Resamples with area averaging when shrinking and bilinear when growing.
pub fn resize(img: &ImageBuffer, new_w: usize, new_h: usize) -> ImageBuffer {
    if new_w == img.width && new_h == img.height {
        img.clone()
    } else if new_w <= img.width && new_h <= img.height {
        resize_area(img, new_w, new_h)
    } else {
        resize_bilinear(img, new_w, new_h)
    }
}

/// Dimensions of each pyramid level from coarsest to finest.
pub fn pyramid_dims(width: usize, height: usize, factor: f64, min_dim: usize) -> Result<Vec<(usize, usize)>> {
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::param(format!("pyramid factor {factor} must lie in (0, 1)")));
    }
    if width.min(height) < min_dim {
        return Err(Error::ImageTooSmall {
            width,
            height,
            required: min_dim,
        });
    }
    let mut dims = vec![(width, height)];
    let mut level = 1;
    loop {
        let s = factor.powi(level);
        let w = (width as f64 * s).round() as usize;
        let h = (height as f64 * s).round() as usize;
        if w.min(h) < min_dim || (w, h) == *dims.last().unwrap() {
            break;
        }
        dims.push((w, h));
        level += 1;
    }
    dims.reverse();
    Ok(dims)
}

/// Gaussian-free area pyramid, coarsest level first, full resolution last.
pub fn build_pyramid(img: &ImageBuffer, factor: f64, min_dim: usize) -> Result<Vec<ImageBuffer>> {
    let dims = pyramid_dims(img.width, img.height, factor, min_dim)?;
    Ok(dims.iter().map(|&(w, h)| resize_area(img, w, h)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white_png_bytes() -> Vec<u8> {
        let img = image::RgbImage::from_pixel(1, 1, image::Rgb([255, 255, 255]));
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(img)
            .write_to(&mut out, ImageFormat::Png)
            .unwrap();
        out.into_inner()
    }

    #[test]
    fn decodes_white_pixel() {
        let img = decode_image(&white_png_bytes()).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (1, 1, 3));
        assert!(img.data().iter().all(|&v| v == 1.0));
        assert_eq!(img.space(), ColorSpace::Srgb);
    }

    #[test]
    fn truncated_file_is_decode_error() {
        let bytes = white_png_bytes();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&p), Err(Error::Decode { .. })));
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::Io { .. })
        ));
        assert!(matches!(
            decode_image(b"GIF89a......"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn gray_png_checkerboard_round_trip() {
        let raw: Vec<u8> = (0..64)
            .map(|i| if (i % 8 + i / 8) % 2 == 0 { 0 } else { 200 })
            .collect();
        let g = image::GrayImage::from_raw(8, 8, raw.clone()).unwrap();
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(g)
            .write_to(&mut out, ImageFormat::Png)
            .unwrap();
        let img = decode_image(out.get_ref()).unwrap();
        assert_eq!(img.channels(), 1);
        for (v, r) in img.data().iter().zip(&raw) {
            assert_eq!(*v, *r as f32 / 255.0);
        }
        let re = encode_png(&img).unwrap();
        let back = decode_image(&re).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn lab_white_black_red() {
        let img = ImageBuffer::new(3, 1, 3, ColorSpace::Srgb, vec![1., 1., 1., 0., 0., 0., 1., 0., 0.]).unwrap();
        let lab = to_lab(&img).unwrap();
        let w = lab.pixel(0, 0);
        assert!((w[0] - 100.0).abs() < 1e-3 && w[1].abs() < 1e-3 && w[2].abs() < 1e-3);
        assert_eq!(lab.pixel(1, 0), &[0.0, 0.0, 0.0]);
        // reference from the textbook sRGB -> XYZ -> Lab chain, evaluated offline
        let r = lab.pixel(2, 0);
        let reference = [53.2408, 80.0925, 67.2032];
        for (v, e) in r.iter().zip(reference) {
            assert!((v - e).abs() < 0.5, "{v} vs {e}");
        }
    }

    #[test]
    fn lab_rejects_gray() {
        let g = ImageBuffer::filled(2, 2, 1, ColorSpace::Srgb, 0.5);
        assert!(matches!(to_lab(&g), Err(Error::ChannelCount { .. })));
    }

    #[test]
    fn pyramid_dims_geometric() {
        let img = ImageBuffer::filled(512, 512, 1, ColorSpace::Srgb, 0.25);
        let pyr = build_pyramid(&img, 0.5, 32).unwrap();
        let dims: Vec<_> = pyr.iter().map(|l| l.width()).collect();
        assert_eq!(dims, vec![32, 64, 128, 256, 512]);
        for l in &pyr {
            assert!(l.data().iter().all(|&v| (v - 0.25).abs() < 1e-6));
        }
        assert!(build_pyramid(&ImageBuffer::filled(20, 20, 1, ColorSpace::Srgb, 0.), 0.5, 32).is_err());
        assert!(build_pyramid(&img, 1.5, 32).is_err());
    }

    #[test]
    fn area_filter_conserves_energy() {
        let mut img = ImageBuffer::filled(64, 64, 1, ColorSpace::Srgb, 0.0);
        img.set(17, 40, 0, 1.0);
        let pyr = build_pyramid(&img, 0.5, 32).unwrap();
        let fine: f64 = pyr[1].data().iter().map(|&v| v as f64).sum();
        let coarse: f64 = pyr[0].data().iter().map(|&v| v as f64).sum();
        // one coarse pixel covers four fine pixels
        assert!((coarse * 4.0 - fine).abs() < 1e-6);
    }

    #[test]
    fn crop_and_bilinear() {
        let img = ImageBuffer::from_fn(5, 4, 1, ColorSpace::Srgb, |x, y, _| (x + 10 * y) as f32);
        let c = img.crop(1, 1, 3, 2).unwrap();
        assert_eq!(c.data(), &[11., 12., 13., 21., 22., 23.]);
        let mut o = [0.0];
        img.sample_bilinear(1.5, 2.5, &mut o);
        assert!((o[0] - 26.5).abs() < 1e-5);
        assert!(img.crop(3, 0, 3, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn lab_round_trip_within_one_level(r in 0u8..=255, g in 0u8..=255, b in 0u8..=255) {
            let px = [r, g, b].map(|v| v as f32 / 255.0);
            let img = ImageBuffer::new(1, 1, 3, ColorSpace::Srgb, px.to_vec()).unwrap();
            let back = lab_to_srgb(&to_lab(&img).unwrap()).unwrap();
            for (a, b) in back.data().iter().zip(px) {
                proptest::prop_assert!((a - b).abs() <= 1.0 / 255.0);
            }
        }
    }
}
