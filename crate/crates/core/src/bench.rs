//! Benchmark harness: timing, exact-oracle comparison and auxiliary memory
//! of a translation-field run.
//!
//! Memory is measured by [`CountingAlloc`] when the running binary installs
//! it as its global allocator; otherwise the report falls back to the
//! field's own heap footprint.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annf::{brute_force_nnf, compute_nnf, SearchParams};
use crate::error::Result;
use crate::image::ImageBuffer;
use crate::patch::PatchGeometry;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ACTIVE: AtomicBool = AtomicBool::new(false);

/// System allocator wrapper that tracks live and peak heap bytes.
///
/// ```ignore
/// #[global_allocator]
/// static ALLOC: patchmatch::bench::CountingAlloc = patchmatch::bench::CountingAlloc;
/// ```
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }
    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }
    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
            grow(new_size);
        }
        p
    }
}

#[inline]
fn grow(n: usize) {
    ACTIVE.store(true, Ordering::Relaxed);
    let now = CURRENT.fetch_add(n, Ordering::Relaxed) + n;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

/// Whether [`CountingAlloc`] is the global allocator of this process.
pub fn counting_active() -> bool {
    if !ACTIVE.load(Ordering::Relaxed) {
        drop(std::hint::black_box(Box::new(0u8)));
    }
    ACTIVE.load(Ordering::Relaxed)
}

pub fn live_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

/// Resets the peak to the current live size and returns it.
pub fn reset_peak() -> usize {
    let now = CURRENT.load(Ordering::Relaxed);
    PEAK.store(now, Ordering::Relaxed);
    now
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Runs `f` and returns its result with the peak heap growth above the
/// starting live size, or `None` without the counting allocator.
pub fn measure_peak<T>(f: impl FnOnce() -> T) -> (T, Option<usize>) {
    if !counting_active() {
        return (f(), None);
    }
    let base = reset_peak();
    let out = f();
    (out, Some(peak_bytes().saturating_sub(base)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub schema: u32,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub iterations: usize,
    pub threads: usize,
    pub mean_dist: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_mean_dist: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_wall_time_sec: Option<f64>,
    pub wall_time_sec: f64,
    pub peak_aux_bytes: usize,
    /// False when `peak_aux_bytes` is the field footprint rather than an
    /// allocator measurement.
    pub aux_measured: bool,
}

impl BenchReport {
    pub fn aux_bytes_per_pixel(&self) -> f64 {
        self.peak_aux_bytes as f64 / (self.width * self.height).max(1) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Times `compute_nnf` from `a` to `b` and optionally the exhaustive oracle.
pub fn run_bench(
    a: &ImageBuffer,
    b: &ImageBuffer,
    geom: &PatchGeometry,
    params: &SearchParams,
    seed: u64,
    oracle: bool,
) -> Result<BenchReport> {
    let t = Instant::now();
    let (field, peak) = measure_peak(|| compute_nnf(a, b, geom, params, false, seed));
    let wall = t.elapsed().as_secs_f64();
    let field = field?;
    let (aux, measured) = match peak {
        Some(p) => (p, true),
        None => (field.heap_bytes(), false),
    };
    let (exact, exact_wall) = if oracle {
        let t = Instant::now();
        let e = brute_force_nnf(a, b, geom)?;
        (Some(e.mean_distance()), Some(t.elapsed().as_secs_f64()))
    } else {
        (None, None)
    };
    Ok(BenchReport {
        schema: 1,
        width: a.width(),
        height: a.height(),
        patch_size: geom.size(),
        iterations: params.iterations,
        threads: params.threads,
        mean_dist: field.mean_distance(),
        exact_mean_dist: exact,
        exact_wall_time_sec: exact_wall,
        wall_time_sec: wall,
        peak_aux_bytes: aux,
        aux_measured: measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::similar_pair;

    #[test]
    fn report_carries_oracle_bound() {
        let (a, b) = similar_pair(40, 30, (3, 2), 1);
        let g = PatchGeometry::new(7).unwrap();
        let r = run_bench(&a, &b, &g, &SearchParams::default(), 7, true).unwrap();
        let exact = r.exact_mean_dist.unwrap();
        assert!(r.mean_dist >= exact - 1e-9);
        assert!(!r.aux_measured);
        assert!(r.peak_aux_bytes > 0);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema"], 1);
        for k in ["meanDist", "exactMeanDist", "wallTimeSec", "peakAuxBytes"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
