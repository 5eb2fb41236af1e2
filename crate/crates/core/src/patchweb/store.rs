//! On-disk layout of a web directory.
//!
//! `manifest.txt` lists one image per line as `width height path`.
//! `<index>.wnnf.z` holds the field of image `index`: the uncompressed
//! header `"WEB1" u32 width, u32 height, u16 patch_size` followed by a raw
//! deflate stream of little-endian 64-bit entries in raster order over the
//! valid rectangle.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::entry::{rank, SENTINEL};
use crate::error::{Error, Result};
use crate::image::{load_image, ImageBuffer};
use crate::patch::{PatchGeometry, Rect};

pub const WEB_MAGIC: &[u8; 4] = b"WEB1";
pub const MANIFEST_FILE: &str = "manifest.txt";
/// Largest supported image side.
pub const MAX_SIDE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub images: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads image dimensions from the files themselves.
    pub fn from_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut images = Vec::with_capacity(paths.len());
        for p in paths {
            let img = load_image(p.as_ref())?;
            images.push(ManifestEntry {
                path: p.as_ref().to_path_buf(),
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(Manifest { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }
    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() > super::entry::MAX_IMAGE as usize + 1 {
            return Err(Error::param(format!(
                "{} images exceed the 65536 limit",
                self.images.len()
            )));
        }
        for e in &self.images {
            check_side(e.width, e.height, &e.path)?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.images {
            out.push_str(&format!("{} {} {}\n", e.width, e.height, e.path.display()));
        }
        fs::write(path, out).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut images = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            let bad = || Error::Format(format!("{}:{}: expected `width height path`", path.display(), n + 1));
            let width = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let height = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let p = parts.next().filter(|s| !s.is_empty()).ok_or_else(bad)?;
            images.push(ManifestEntry {
                path: PathBuf::from(p),
                width,
                height,
            });
        }
        Ok(Manifest { images })
    }
}

pub(crate) fn check_side(w: usize, h: usize, what: &Path) -> Result<()> {
    if w > MAX_SIDE || h > MAX_SIDE {
        return Err(Error::param(format!(
            "{} is {w}x{h}; images are limited to {MAX_SIDE} pixels per side",
            what.display()
        )));
    }
    Ok(())
}

/// Loads a collection image as 3-channel sRGB.
pub fn load_collection_image(e: &ManifestEntry) -> Result<ImageBuffer> {
    let img = load_image(&e.path)?.to_rgb();
    if (img.width(), img.height()) != (e.width, e.height) {
        return Err(Error::DimensionMismatch(format!(
            "{} is {}x{}, manifest says {}x{}",
            e.path.display(),
            img.width(),
            img.height(),
            e.width,
            e.height
        )));
    }
    Ok(img)
}

/// Packed field of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebNnf {
    pub width: u32,
    pub height: u32,
    pub patch_size: u16,
    pub entries: Vec<u64>,
}

impl WebNnf {
    pub fn unassigned(width: usize, height: usize, geom: &PatchGeometry) -> Self {
        WebNnf {
            width: width as u32,
            height: height as u32,
            patch_size: geom.size() as u16,
            entries: vec![SENTINEL; geom.valid_rect(width, height).area()],
        }
    }

    pub fn rect(&self) -> Rect {
        PatchGeometry::new(self.patch_size as usize)
            .map(|g| g.valid_rect(self.width as usize, self.height as usize))
            .unwrap_or(Rect::new(0, 0, 0, 0))
    }

    /// Pointwise minimum by quantized distance.
    pub fn merge_min(&mut self, other: &WebNnf) -> Result<()> {
        if (self.width, self.height, self.patch_size) != (other.width, other.height, other.patch_size) {
            return Err(Error::DimensionMismatch("merging fields of different shapes".into()));
        }
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            if rank(b) < rank(*a) {
                *a = b;
            }
        }
        Ok(())
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(WEB_MAGIC)?;
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.height.to_le_bytes())?;
        w.write_all(&self.patch_size.to_le_bytes())?;
        let mut enc = DeflateEncoder::new(w, Compression::fast());
        for e in &self.entries {
            enc.write_all(&e.to_le_bytes())?;
        }
        enc.finish()?.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let (width, height, patch_size) = crate::annf::read_header(&mut r, WEB_MAGIC)?;
        let geom = PatchGeometry::new(patch_size as usize)?;
        let n = geom.valid_rect(width as usize, height as usize).area();
        let mut dec = DeflateDecoder::new(r);
        let mut bytes = vec![0u8; n * 8];
        dec.read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated web field: {e}")))?;
        let entries = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(WebNnf {
            width,
            height,
            patch_size,
            entries,
        })
    }
}

pub fn field_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index}.wnnf.z"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_field(path: &Path) -> Result<WebNnf> {
    WebNnf::read_from(File::open(path).map_err(io_err(path))?)
}

/// Writes atomically through a temporary file and rename.
pub fn write_field(path: &Path, f: &WebNnf) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    f.write_to(File::create(&tmp).map_err(io_err(&tmp))?)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Merges `f` into the stored field by pointwise minimum while holding an
/// exclusive lock, so concurrent workers never lose each other's updates.
/// Returns the merged field.
pub fn merge_save(path: &Path, f: &WebNnf) -> Result<WebNnf> {
    let lock_path = path.with_extension("lock");
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(io_err(&lock_path))?;
    lock.lock().map_err(io_err(&lock_path))?;
    let result = (|| {
        let mut merged = f.clone();
        if path.exists() {
            merged.merge_min(&read_field(path)?)?;
        }
        write_field(path, &merged)?;
        Ok(merged)
    })();
    lock.unlock().map_err(io_err(&lock_path))?;
    result
}
