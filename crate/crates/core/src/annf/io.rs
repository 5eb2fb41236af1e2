//! Little-endian binary dump of a translation field:
//! `"NNF1" u32 width, u32 height, u16 patch_size`, then for each valid
//! source coordinate in raster order `i16 dx, i16 dy, f32 dist`.

use std::io::{Read, Write};

use super::field::{Nnf, NnfEntry};
use crate::error::{Error, Result};
use crate::patch::{PatchGeometry, Pos, Rect};

pub const NNF_MAGIC: &[u8; 4] = b"NNF1";

#[derive(Debug, Clone, PartialEq)]
pub struct NnfDump {
    pub width: u32,
    pub height: u32,
    pub patch_size: u16,
    /// `(offset, dist)` per valid source coordinate, raster order.
    pub entries: Vec<(Pos, f32)>,
}

impl NnfDump {
    pub fn source_rect(&self) -> Rect {
        PatchGeometry::new(self.patch_size as usize)
            .map(|g| g.valid_rect(self.width as usize, self.height as usize))
            .unwrap_or(Rect::new(0, 0, 0, 0))
    }

    /// Rebuilds a field given the target image dimensions.
    pub fn into_nnf(self, target_width: usize, target_height: usize) -> Result<Nnf> {
        let geom = PatchGeometry::new(self.patch_size as usize)?;
        let src = geom.valid_rect(self.width as usize, self.height as usize);
        let tgt = geom.valid_rect(target_width, target_height);
        let entries = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, &(off, d))| NnfEntry {
                target: src.pos(i).add(off),
                dist: d as f64,
            })
            .collect();
        Nnf::from_entries(src, tgt, entries, 0)
    }
}

pub(crate) fn write_header(w: &mut impl Write, magic: &[u8; 4], width: u32, height: u32, patch: u16) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    w.write_all(&patch.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<(u32, u32, u16)> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut b4 = [0u8; 4];
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b4)?;
    let width = u32::from_le_bytes(b4);
    r.read_exact(&mut b4)?;
    let height = u32::from_le_bytes(b4);
    r.read_exact(&mut b2)?;
    Ok((width, height, u16::from_le_bytes(b2)))
}

pub(crate) fn write_triple(w: &mut impl Write, off: Pos, d: f64) -> Result<()> {
    let dx = i16::try_from(off.x).map_err(|_| Error::Format(format!("offset {off} exceeds i16")))?;
    let dy = i16::try_from(off.y).map_err(|_| Error::Format(format!("offset {off} exceeds i16")))?;
    w.write_all(&dx.to_le_bytes())?;
    w.write_all(&dy.to_le_bytes())?;
    w.write_all(&(d as f32).to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_triple(r: &mut impl Read) -> Result<(Pos, f32)> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let dx = i16::from_le_bytes([b[0], b[1]]);
    let dy = i16::from_le_bytes([b[2], b[3]]);
    let d = f32::from_le_bytes([b[4], b[5], b[6], b[7]]);
    Ok((Pos::new(dx as i32, dy as i32), d))
}

pub fn write_nnf(f: &Nnf, patch_size: usize, w: &mut impl Write) -> Result<()> {
    let (width, height) = f.source_dims();
    write_header(w, NNF_MAGIC, width as u32, height as u32, patch_size as u16)?;
    for (z, e) in f.iter() {
        write_triple(w, e.target.sub(z), e.dist)?;
    }
    Ok(())
}

pub fn read_nnf(r: &mut impl Read) -> Result<NnfDump> {
    let (width, height, patch_size) = read_header(r, NNF_MAGIC)?;
    let mut dump = NnfDump {
        width,
        height,
        patch_size,
        entries: Vec::new(),
    };
    let n = dump.source_rect().area();
    dump.entries.reserve(n);
    for _ in 0..n {
        dump.entries.push(read_triple(r)?);
    }
    Ok(dump)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annf::init_random;
    use crate::image::{ColorSpace, ImageBuffer};

    #[test]
    fn dump_layout_and_round_trip() {
        let a = ImageBuffer::from_fn(12, 10, 1, ColorSpace::Srgb, |x, y, _| {
            ((x * 7 + y * 3) % 11) as f32 / 11.0
        });
        let g = PatchGeometry::default();
        let f = init_random(&a, &a, &g, 3).unwrap();
        let mut buf = Vec::new();
        write_nnf(&f, 7, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"NNF1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 12);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 10);
        assert_eq!(u16::from_le_bytes(buf[12..14].try_into().unwrap()), 7);
        assert_eq!(buf.len(), 14 + 8 * 6 * 4);
        let dump = read_nnf(&mut buf.as_slice()).unwrap();
        let back = dump.into_nnf(12, 10).unwrap();
        for ((_, e0), (_, e1)) in f.iter().zip(back.iter()) {
            assert_eq!(e0.target, e1.target);
            assert_eq!(e0.dist as f32, e1.dist as f32);
        }
        assert!(read_nnf(&mut &b"KNNF\0\0"[..]).is_err());
    }
}
