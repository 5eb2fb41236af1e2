use crate::annf::{compute_field, MatchSpace, Nnf, SearchParams};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::{extract_patch, row_ssd_acc, PatchGeometry, Pos, Rect};

/// Fixed-length real vector per valid coordinate of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    rect: Rect,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorField {
    pub fn new(rect: Rect, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rect.area() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} descriptors of length {dim}",
                data.len(),
                rect.area()
            )));
        }
        Ok(DescriptorField { rect, dim, data })
    }

    /// Builds a field by evaluating `f` at every valid patch center.
    pub fn from_fn(rect: Rect, dim: usize, mut f: impl FnMut(Pos, &mut [f32])) -> Self {
        let mut data = vec![0.0f32; rect.area() * dim];
        for (i, p) in rect.iter().enumerate() {
            f(p, &mut data[i * dim..(i + 1) * dim]);
        }
        DescriptorField { rect, dim, data }
    }

    /// Raw patch samples as descriptors.
    pub fn raw_patches(img: &ImageBuffer, geom: &PatchGeometry) -> Result<Self> {
        let rect = geom.require_fits(img)?;
        let dim = geom.samples(img.channels());
        Ok(Self::from_fn(rect, dim, |p, out| {
            out.copy_from_slice(&extract_patch(img, p, geom))
        }))
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, p: Pos) -> &[f32] {
        let i = self.rect.index(p);
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Sum of squared differences between two descriptors.
pub fn ssd_descriptor(a: &[f32], b: &[f32]) -> f64 {
    row_ssd_acc(a, b, 0.0)
}

/// Matching space whose distance is an arbitrary function of two
/// descriptors. The function need not be symmetric or a metric.
pub struct DescriptorSpace<'a, F> {
    pub a: &'a DescriptorField,
    pub b: &'a DescriptorField,
    pub distance: F,
}

impl<F: Fn(&[f32], &[f32]) -> f64 + Sync> MatchSpace for DescriptorSpace<'_, F> {
    fn source_rect(&self) -> Rect {
        self.a.rect
    }
    fn target_rect(&self) -> Rect {
        self.b.rect
    }
    fn distance(&self, a: Pos, b: Pos, _bound: f64) -> f64 {
        (self.distance)(self.a.get(a), self.b.get(b))
    }
}

/// Translation matching with `distance` in place of patch SSD.
pub fn match_descriptors<F>(
    a: &DescriptorField,
    b: &DescriptorField,
    distance: F,
    params: &SearchParams,
    seed: u64,
) -> Result<Nnf>
where
    F: Fn(&[f32], &[f32]) -> f64 + Sync,
{
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(format!(
            "descriptor lengths {} and {} differ",
            a.dim, b.dim
        )));
    }
    compute_field(&DescriptorSpace { a, b, distance }, params, seed)
}
