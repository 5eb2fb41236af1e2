use crate::error::{Error, Result};

pub const X_BITS: u32 = 12;
pub const Y_BITS: u32 = 12;
pub const IMAGE_BITS: u32 = 16;
pub const DIST_BITS: u32 = 24;
pub const MAX_COORD: u32 = (1 << X_BITS) - 1;
pub const MAX_IMAGE: u32 = (1 << IMAGE_BITS) - 1;
pub const MAX_DIST: u32 = (1 << DIST_BITS) - 1;

/// Unassigned entry: every bit set.
pub const SENTINEL: u64 = u64::MAX;

/// Unpacked web entry; `dist` is the quantized patch distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WebEntry {
    pub x: u32,
    pub y: u32,
    pub image: u32,
    pub dist: u32,
}

impl WebEntry {
    pub const SENTINEL: WebEntry = WebEntry {
        x: MAX_COORD,
        y: MAX_COORD,
        image: MAX_IMAGE,
        dist: MAX_DIST,
    };
}

/// Packs `x | y << 12 | image << 24 | dist << 40`. Distances above the
/// 24-bit range saturate.
pub fn pack_web_entry(x: u32, y: u32, image: u32, dist: u64) -> Result<u64> {
    if x > MAX_COORD || y > MAX_COORD {
        return Err(Error::param(format!("coordinate ({x}, {y}) exceeds {MAX_COORD}")));
    }
    if image > MAX_IMAGE {
        return Err(Error::param(format!("image index {image} exceeds {MAX_IMAGE}")));
    }
    let d = dist.min(MAX_DIST as u64);
    Ok(x as u64 | (y as u64) << X_BITS | (image as u64) << (X_BITS + Y_BITS) | d << (X_BITS + Y_BITS + IMAGE_BITS))
}

pub fn unpack_web_entry(word: u64) -> WebEntry {
    WebEntry {
        x: (word & MAX_COORD as u64) as u32,
        y: ((word >> X_BITS) & MAX_COORD as u64) as u32,
        image: ((word >> (X_BITS + Y_BITS)) & MAX_IMAGE as u64) as u32,
        dist: (word >> (X_BITS + Y_BITS + IMAGE_BITS)) as u32,
    }
}

#[inline]
pub fn is_sentinel(word: u64) -> bool {
    word == SENTINEL
}

/// Quantized distance of a packed entry; the sentinel ranks above every
/// assigned entry.
#[inline]
pub fn rank(word: u64) -> u64 {
    if is_sentinel(word) {
        MAX_DIST as u64 + 1
    } else {
        word >> (X_BITS + Y_BITS + IMAGE_BITS)
    }
}

/// Monotone 24-bit quantizer over `[0, d_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub d_max: f64,
}

impl Quantizer {
    /// Largest SSD between two `patch x patch` patches with `channels`
    /// values in `[0, 1]`.
    pub fn for_patch(patch: usize, channels: usize) -> Self {
        Quantizer {
            d_max: (patch * patch * channels) as f64,
        }
    }

    pub fn quantize(&self, d: f64) -> u32 {
        (d.clamp(0.0, self.d_max) * MAX_DIST as f64 / self.d_max).round() as u32
    }

    pub fn dequantize(&self, q: u32) -> f64 {
        q as f64 * self.d_max / MAX_DIST as f64
    }
}
