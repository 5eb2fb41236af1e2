use super::*;
use crate::annf::NnfEntry;
use crate::fixtures::{
    add_gaussian_noise, copy_move, iou, paste_similarity, psnr, scene, tiled, value_noise, white_noise,
};
use crate::gpm::ssd_descriptor;
use crate::image::{ColorSpace, ImageBuffer};
use crate::patch::{extract_patch, PatchGeometry, Pos};
use crate::synthesis::Mask;
use crate::Error;

fn geom() -> PatchGeometry {
    PatchGeometry::new(7).unwrap()
}

fn union(masks: &[Mask], w: usize, h: usize) -> Mask {
    let mut u = Mask::filled(w, h, false);
    for m in masks {
        for (a, b) in u.data.iter_mut().zip(&m.data) {
            *a |= *b;
        }
    }
    u
}

fn textured(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut img = value_noise(w, h, 3, 12.0, 4, seed);
    add_gaussian_noise(&mut img, 0.03, seed ^ 0xf0);
    img
}

fn near(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol
}

#[test]
fn nlm_keeps_constant_image() {
    let img = ImageBuffer::filled(40, 40, 3, ColorSpace::Srgb, 0.3);
    let out = nlm_denoise(&img, &geom(), &DenoiseParams::default()).unwrap();
    assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
}

#[test]
fn nlm_tiny_bandwidth_is_identity() {
    let img = white_noise(40, 32, 3, 2);
    let p = DenoiseParams {
        h: 1e-4,
        ..Default::default()
    };
    let out = nlm_denoise(&img, &geom(), &p).unwrap();
    assert_eq!(out.data(), img.data());
}

#[test]
fn nlm_output_is_convex_combination() {
    let img = white_noise(48, 40, 3, 4);
    let out = nlm_denoise(&img, &geom(), &DenoiseParams::default()).unwrap();
    let range = img.channel_range();
    for px in out.data().chunks_exact(3) {
        for (c, &v) in px.iter().enumerate() {
            assert!(v >= range[c].0 - 1e-6 && v <= range[c].1 + 1e-6);
        }
    }
}

#[test]
fn nlm_gains_two_db_at_sigma_20() {
    let clean = scene(112, 112, 3);
    let mut noisy = clean.clone();
    add_gaussian_noise(&mut noisy, 20.0 / 255.0, 9);
    let out = nlm_denoise(&noisy, &geom(), &DenoiseParams::default()).unwrap();
    let (before, after) = (psnr(&clean, &noisy), psnr(&clean, &out));
    assert!(after >= before + 2.0, "{before:.2} -> {after:.2}");
}

#[test]
fn nlm_rejects_bad_bandwidth() {
    let img = white_noise(20, 20, 1, 0);
    let p = DenoiseParams {
        h: 0.0,
        ..Default::default()
    };
    assert!(matches!(
        nlm_denoise(&img, &geom(), &p),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn copy_move_found_with_high_iou() {
    let base = textured(112, 112, 1);
    let (img, truth) = copy_move(&base, (8, 10), (62, 58), 40);
    let masks = detect_copy_move(&img, &geom(), &ForgeryParams::default()).unwrap();
    assert_eq!(masks.len(), 2);
    let score = iou(&union(&masks, 112, 112), &truth);
    assert!(score >= 0.5, "iou {score}");
}

#[test]
fn copy_move_pristine_noise_is_clean() {
    let img = white_noise(96, 96, 3, 8);
    assert!(detect_copy_move(&img, &geom(), &ForgeryParams::default())
        .unwrap()
        .is_empty());
}

#[test]
fn copy_move_small_copy_is_gated() {
    let base = textured(96, 96, 2);
    let (img, _) = copy_move(&base, (10, 10), (60, 60), 12);
    assert!(detect_copy_move(&img, &geom(), &ForgeryParams::default())
        .unwrap()
        .is_empty());
    let p = ForgeryParams {
        min_region: 4,
        ..Default::default()
    };
    assert_eq!(detect_copy_move(&img, &geom(), &p).unwrap().len(), 2);
}

#[test]
fn agreement_relation_is_symmetric() {
    let e = |x, y, d| NnfEntry {
        target: Pos::new(x, y),
        dist: d,
    };
    let cases: Vec<(Vec<NnfEntry>, Vec<NnfEntry>)> = vec![
        (vec![e(50, 50, 0.0)], vec![e(51, 50, 0.0)]),
        (vec![e(50, 50, 0.0), e(10, 10, 0.0)], vec![e(51, 50, 0.0)]),
        (vec![e(50, 50, 0.0), e(10, 10, 9.0)], vec![e(52, 51, 0.0)]),
        (vec![e(50, 50, 9.0)], vec![e(51, 50, 0.0)]),
        (vec![e(50, 50, 0.0)], vec![e(60, 50, 0.0)]),
    ];
    let d = Pos::new(1, 0);
    let expected = [true, false, true, false, false];
    for ((a, b), want) in cases.iter().zip(expected) {
        let ab = knn_sets_agree(a, b, d, 1, 1.0);
        let ba = knn_sets_agree(b, a, Pos::new(-1, 0), 1, 1.0);
        assert_eq!(ab, ba);
        assert_eq!(ab, want);
    }
}

#[test]
fn forgery_params_validated() {
    let img = white_noise(30, 30, 1, 0);
    for p in [
        ForgeryParams {
            offset_agreement: 0,
            ..Default::default()
        },
        ForgeryParams {
            min_region: 0,
            ..Default::default()
        },
    ] {
        assert!(matches!(
            detect_copy_move(&img, &geom(), &p),
            Err(Error::InvalidParameter(_))
        ));
    }
}

#[test]
fn forgery_field_skips_near_self() {
    let img = textured(48, 48, 3);
    let f = forgery_field(&img, &geom(), &ForgeryParams::default()).unwrap();
    for (z, heap) in f.iter() {
        assert!(heap.iter().all(|e| e.target.chebyshev(z) >= 7));
    }
}

#[test]
fn lattice_recovers_tile_grid() {
    let tile = white_noise(40, 30, 3, 5);
    let img = tiled(160, 120, &tile);
    let r = detect_lattice(&img, &geom(), &LatticeParams::default()).unwrap();
    let mut got = [r.v1, r.v2];
    got.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    assert!(
        near(got[0], (0.0, 30.0), 1.0) && near(got[1], (40.0, 0.0), 1.0),
        "{got:?}"
    );
    assert!(r.inlier_mask.count() > 1000);
}

#[test]
fn lattice_absent_in_noise() {
    let img = white_noise(120, 100, 3, 1);
    assert!(matches!(
        detect_lattice(&img, &geom(), &LatticeParams::default()),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn lattice_single_repeat_is_insufficient() {
    let base = white_noise(100, 80, 3, 6);
    let (img, _) = copy_move(&base, (5, 5), (50, 40), 12);
    assert!(matches!(
        detect_lattice(&img, &geom(), &LatticeParams::default()),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn basis_reduction_is_canonical() {
    let (a, b) = reduce_basis((40.0, 30.0), (-40.0, 0.0));
    assert_eq!((a, b), ((0.0, 30.0), (40.0, 0.0)));
    let (a, b) = reduce_basis((0.0, -30.0), (80.0, 60.0));
    assert_eq!((a, b), ((0.0, 30.0), (80.0, 0.0)));
}

#[test]
fn normalization_is_affine_invariant() {
    let img = white_noise(9, 9, 3, 7);
    let p = extract_patch(&img, Pos::new(4, 4), &geom());
    for center in [Center::Mean, Center::Median] {
        let mut a = p.clone();
        let mut b: Vec<f32> = p.iter().map(|v| 2.5 * v + 0.3).collect();
        normalize_patch_with(&mut a, center);
        normalize_patch_with(&mut b, center);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn median_center_is_median() {
    let mut v = vec![0.0f32, 0.0, 0.0, 1.0, 10.0];
    normalize_patch_with(&mut v, Center::Median);
    assert_eq!(v[0], 0.0);
}

#[test]
fn detect_crop_is_pure_translation() {
    let bg = scene(120, 120, 11);
    let crop = bg.crop(50, 40, 36, 36).unwrap();
    let p = DetectParams {
        theta_range: (0.0, 0.0),
        scale_range: (1.0, 1.0),
        ..Default::default()
    };
    let d = detect_object(&crop, &bg, &geom(), &p).unwrap();
    assert!(d.theta.abs() < 1e-3 && (d.scale - 1.0).abs() < 1e-3);
    assert!(near((d.tx, d.ty), (50.0, 40.0), 1.0), "{d:?}");
}

#[test]
fn detect_rotated_scaled_template() {
    let bg = scene(150, 150, 11);
    let tmpl = scene(44, 44, 12);
    let sc = paste_similarity(&bg, &tmpl, 30f64.to_radians(), 1.5, (80.0, 25.0));
    let d = detect_object(&tmpl, &sc, &geom(), &DetectParams::default()).unwrap();
    assert!((d.theta.to_degrees() - 30.0).abs() <= 5.0, "{d:?}");
    assert!((d.scale / 1.5 - 1.0).abs() <= 0.1, "{d:?}");
    let (x, y) = d.apply(22.0, 22.0);
    let (ex, ey) = (
        80.0 + 1.5 * (30f64.to_radians().cos() * 22.0 - 30f64.to_radians().sin() * 22.0),
        25.0 + 1.5 * (30f64.to_radians().sin() * 22.0 + 30f64.to_radians().cos() * 22.0),
    );
    assert!(near((x, y), (ex, ey), 2.0));
}

#[test]
fn detect_reports_absent_template() {
    let bg = scene(120, 120, 11);
    let tmpl = scene(40, 40, 99);
    assert!(matches!(
        detect_object(&tmpl, &bg, &geom(), &DetectParams::default()),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn detect_confidence_ignores_brightness_offset() {
    let bg = scene(120, 120, 11);
    let crop = bg.crop(30, 50, 36, 36).unwrap();
    let mut bright = crop.clone();
    bright.data_mut().iter_mut().for_each(|v| *v += 0.1);
    let p = DetectParams {
        theta_range: (-0.5, 0.5),
        scale_range: (0.8, 1.25),
        ..Default::default()
    };
    let a = detect_object(&crop, &bg, &geom(), &p).unwrap();
    let b = detect_object(&bright, &bg, &geom(), &p).unwrap();
    assert!((a.confidence - b.confidence).abs() < 0.05, "{a:?} {b:?}");
}

#[test]
fn detection_serializes_as_flat_record() {
    let d = Detection {
        theta: 0.5,
        scale: 1.5,
        tx: 3.0,
        ty: 4.0,
        confidence: 0.9,
    };
    let v: serde_json::Value = serde_json::to_value(d).unwrap();
    for k in ["theta", "scale", "tx", "ty", "confidence"] {
        assert!(v.get(k).is_some());
    }
}

#[test]
fn descriptor_constant_is_zero() {
    let img = ImageBuffer::filled(20, 20, 3, ColorSpace::Srgb, 0.4);
    let f = dense_descriptor(&img, &geom()).unwrap();
    assert_eq!(f.dim(), CELLS * CELLS * BINS);
    assert!(f.get(Pos::new(10, 10)).iter().all(|&v| v == 0.0));
}

#[test]
fn descriptor_ignores_brightness_offset() {
    let img = value_noise(32, 32, 3, 6.0, 3, 1);
    let mut shifted = img.clone();
    shifted.data_mut().iter_mut().for_each(|v| *v += 0.2);
    let a = dense_descriptor(&img, &geom()).unwrap();
    let b = dense_descriptor(&shifted, &geom()).unwrap();
    for p in a.rect().iter() {
        for (x, y) in a.get(p).iter().zip(b.get(p)) {
            assert!((x - y).abs() < 1e-5);
        }
        let n: f32 = a.get(p).iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-4);
    }
}

#[test]
fn descriptor_sees_edge_orientation() {
    let vertical = ImageBuffer::from_fn(16, 16, 1, ColorSpace::Srgb, |x, _, _| if x < 8 { 0.0 } else { 1.0 });
    let horizontal = ImageBuffer::from_fn(16, 16, 1, ColorSpace::Srgb, |_, y, _| if y < 8 { 0.0 } else { 1.0 });
    let a = dense_descriptor(&vertical, &geom()).unwrap();
    let b = dense_descriptor(&horizontal, &geom()).unwrap();
    let z = Pos::new(8, 8);
    assert!(ssd_descriptor(a.get(z), b.get(z)) > 0.5);
}
