use std::f32::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use super::*;
use crate::annf::{compute_field, MatchSpace, NnfEntry, SearchParams, SsdSpace};
use crate::fixtures;
use crate::image::{ColorSpace, ImageBuffer};
use crate::patch::{extract_patch, patch_distance, PatchGeometry, Pos};

fn geom() -> PatchGeometry {
    PatchGeometry::default()
}

fn params(iterations: usize) -> SearchParams {
    SearchParams {
        iterations,
        ..SearchParams::default()
    }
}

#[test]
fn jacobian_examples() {
    let base = Similarity {
        x: 10.0,
        y: 20.0,
        theta: FRAC_PI_2,
        scale: 1.0,
    };
    let c = jacobian_propagate(&base, Pos::new(1, 0));
    assert!((c.x - 10.0).abs() < 1e-6 && (c.y - 21.0).abs() < 1e-6);
    assert_eq!((c.theta, c.scale), (FRAC_PI_2, 1.0));

    let scaled = Similarity {
        theta: 0.0,
        scale: 2.0,
        ..base
    };
    let c = jacobian_propagate(&scaled, Pos::new(1, 0));
    assert_eq!((c.x, c.y), (12.0, 20.0));

    let ident = Similarity {
        theta: 0.0,
        scale: 1.0,
        ..base
    };
    for d in [Pos::new(1, 0), Pos::new(0, 1), Pos::new(-1, 0), Pos::new(0, -1)] {
        let c = jacobian_propagate(&ident, d);
        assert_eq!((c.x, c.y), (10.0 + d.x as f32, 20.0 + d.y as f32));
    }
}

#[test]
fn transformed_sampling_identity_and_symmetry() {
    let img = fixtures::scene(30, 30, 4);
    let g = geom();
    let raw = extract_patch(&img, Pos::new(12, 15), &g);
    for filter in [Filter::Bilinear, Filter::Nearest] {
        let s = sample_transformed_patch(&img, (12.0, 15.0), 0.0, 1.0, &g, filter).unwrap();
        assert_eq!(s, raw);
    }

    // point-symmetric patch: value depends only on |dx|, |dy|
    let sym = ImageBuffer::from_fn(21, 21, 1, ColorSpace::Srgb, |x, y, _| {
        let (dx, dy) = (x as f32 - 10.0, y as f32 - 10.0);
        (dx.abs() * 0.05 + dy * dy * 0.01).min(1.0)
    });
    let raw = extract_patch(&sym, Pos::new(10, 10), &g);
    let rot = sample_transformed_patch(&sym, (10.0, 10.0), PI, 1.0, &g, Filter::Bilinear).unwrap();
    for (a, b) in raw.iter().zip(&rot) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

#[test]
fn bilinear_half_pixel_matches_interpolation_formula() {
    let img = fixtures::white_noise(20, 20, 3, 7);
    let g = PatchGeometry::new(3).unwrap();
    let (cx, cy) = (8.5f32, 9.5f32);
    let s = sample_transformed_patch(&img, (cx, cy), 0.0, 1.0, &g, Filter::Bilinear).unwrap();
    let mut i = 0;
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (x, y) = (cx + dx as f32, cy + dy as f32);
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            for c in 0..3 {
                let v = |xx: usize, yy: usize| img.get(xx, yy, c) as f64;
                let want = 0.25 * (v(x0, y0) + v(x0 + 1, y0) + v(x0, y0 + 1) + v(x0 + 1, y0 + 1));
                assert!((s[i] as f64 - want).abs() < 1e-6);
                i += 1;
            }
        }
    }
}

#[test]
fn transformed_sampling_rejects_escaping_footprint() {
    let img = fixtures::white_noise(20, 20, 1, 1);
    let g = geom();
    assert!(sample_transformed_patch(&img, (3.0, 10.0), 0.0, 1.0, &g, Filter::Bilinear).is_ok());
    assert!(sample_transformed_patch(&img, (2.0, 10.0), 0.0, 1.0, &g, Filter::Bilinear).is_err());
    assert!(sample_transformed_patch(&img, (10.0, 10.0), 0.0, 4.0, &g, Filter::Bilinear).is_err());
    assert!(sample_transformed_patch(&img, (4.0, 10.0), 0.6, 1.0, &g, Filter::Bilinear).is_err());
}

#[test]
fn gnnf_rejects_bad_ranges() {
    let a = fixtures::scene(30, 30, 1);
    let bad = |t: (f32, f32), s: (f32, f32)| GnnfParams {
        theta_range: t,
        scale_range: s,
        ..GnnfParams::default()
    };
    assert!(compute_gnnf(&a, &a, &geom(), &bad((1.0, 0.0), (1.0, 1.0)), 0).is_err());
    assert!(compute_gnnf(&a, &a, &geom(), &bad((0.0, 0.0), (0.0, 1.0)), 0).is_err());
    assert!(compute_gnnf(&a, &a, &geom(), &bad((0.0, 0.0), (2.0, 1.0)), 0).is_err());
    assert!(compute_gnnf(&a, &a, &geom(), &bad((0.0, 0.0), (1.0, 5.0)), 0).is_err());
}

#[test]
fn gnnf_entries_respect_ranges_and_footprint() {
    let (a, b) = fixtures::similar_pair(48, 40, (3, 3), 2);
    let p = GnnfParams {
        search: params(3),
        theta_range: (-0.5, 1.0),
        scale_range: (0.8, 1.5),
        ..GnnfParams::default()
    };
    let f = compute_gnnf(&a, &b, &geom(), &p, 5).unwrap();
    let g = geom();
    let space = GnnfSpace::new(&a, &b, g, p).unwrap();
    let mut scratch = Vec::new();
    for (z, e) in f.iter() {
        let t = e.xf;
        assert!((-0.5..=1.0).contains(&t.theta) && (0.8..=1.5).contains(&t.scale));
        let r = footprint_radius(g.half(), t.theta, t.scale);
        assert!(t.x - r >= -1e-3 && t.x + r <= (b.width() - 1) as f32 + 1e-3);
        assert!(t.y - r >= -1e-3 && t.y + r <= (b.height() - 1) as f32 + 1e-3);
        assert_eq!(space.distance(z, &t, f64::INFINITY, &mut scratch), e.dist);
    }
}

#[test]
fn gnnf_degenerate_ranges_reproduce_translation_matching() {
    let (a, b) = fixtures::similar_pair(90, 70, (5, 4), 3);
    let p = params(4);
    let plain = compute_field(&SsdSpace::new(&a, &b, geom()).unwrap(), &p, 17).unwrap();
    let gp = GnnfParams {
        search: p,
        ..GnnfParams::default()
    };
    let g = compute_gnnf(&a, &b, &geom(), &gp, 17).unwrap();
    let (m1, m2) = (plain.mean_distance(), g.mean_distance());
    assert!((m1 - m2).abs() <= 0.01 * m1, "{m1} vs {m2}");
}

fn embed_rotated_pair() -> (ImageBuffer, ImageBuffer) {
    // A is a textured square; B is a larger canvas holding A rotated by 90°.
    let a = fixtures::scene(40, 40, 11);
    let mut b = ImageBuffer::filled(60, 60, 3, ColorSpace::Srgb, 0.5);
    for y in 0..40 {
        for x in 0..40 {
            // (x, y) -> (39 - y, x) is a 90° rotation in image coordinates
            let (bx, by) = (10 + 39 - y, 10 + x);
            b.pixel_mut(bx, by).copy_from_slice(a.pixel(x, y));
        }
    }
    (a, b)
}

#[test]
fn gnnf_finds_rotated_copy() {
    let (a, b) = embed_rotated_pair();
    let p = GnnfParams {
        search: params(8),
        theta_range: (0.0, PI),
        scale_range: (1.0, 1.0),
        ..GnnfParams::default()
    };
    let space = GnnfSpace::new(&a, &b, geom(), p).unwrap();
    let init = init_gnnf(&space, 3);
    let f = compute_gnnf(&a, &b, &geom(), &p, 3).unwrap();
    assert!(
        f.mean_distance() <= 0.05 * init.mean_distance(),
        "{} vs init {}",
        f.mean_distance(),
        init.mean_distance()
    );
}

#[test]
fn gnnf_sweeps_are_monotone() {
    let (a, b) = embed_rotated_pair();
    let p = GnnfParams {
        search: params(1),
        theta_range: (-1.0, 2.0),
        scale_range: (0.7, 1.4),
        metric: PatchMetric::Normalized,
        ..GnnfParams::default()
    };
    let space = GnnfSpace::new(&a, &b, geom(), p).unwrap();
    let mut f = init_gnnf(&space, 8);
    for _ in 0..4 {
        let before: Vec<f64> = f.entries().iter().map(|e| e.dist).collect();
        iterate_gnnf(&mut f, &space).unwrap();
        for (old, e) in before.iter().zip(f.entries()) {
            assert!(e.dist <= *old);
        }
    }
}

#[test]
fn gnnf_is_slower_per_sweep_and_to_converge() {
    let (a, b) = fixtures::similar_pair(80, 80, (4, 4), 6);
    let trans = GnnfParams {
        search: params(1),
        ..GnnfParams::default()
    };
    let full = GnnfParams {
        search: params(1),
        theta_range: (-PI / 2.0, PI / 2.0),
        scale_range: (0.75, 1.33),
        ..GnnfParams::default()
    };
    let run = |p: GnnfParams| {
        let space = GnnfSpace::new(&a, &b, geom(), p).unwrap();
        let mut f = init_gnnf(&space, 1);
        let t = std::time::Instant::now();
        let mut means = Vec::new();
        for _ in 0..6 {
            iterate_gnnf(&mut f, &space).unwrap();
            means.push(f.mean_distance());
        }
        (t.elapsed(), means)
    };
    let (t_trans, m_trans) = run(trans);
    let (t_full, m_full) = run(full);
    assert!(t_full > t_trans, "{t_full:?} vs {t_trans:?}");
    // sweeps needed to come within 10% of the final translation quality
    let target = m_trans[m_trans.len() - 1] * 1.1;
    let reach = |m: &[f64]| m.iter().position(|&d| d <= target).unwrap_or(m.len());
    assert!(reach(&m_full) >= reach(&m_trans));
}

#[test]
fn descriptor_ssd_reduces_to_patch_matching() {
    let (a, b) = fixtures::similar_pair(40, 36, (2, 3), 5);
    let g = geom();
    let da = DescriptorField::raw_patches(&a, &g).unwrap();
    let db = DescriptorField::raw_patches(&b, &g).unwrap();
    let p = SearchParams {
        early_stop: false,
        ..params(3)
    };
    let via_desc = match_descriptors(&da, &db, ssd_descriptor, &p, 21).unwrap();
    let direct = compute_field(&SsdSpace::new(&a, &b, g).unwrap(), &p, 21).unwrap();
    assert_eq!(via_desc.entries(), direct.entries());
}

#[test]
fn descriptor_length_mismatch_is_an_error() {
    let r = crate::patch::Rect::new(0, 0, 4, 4);
    let a = DescriptorField::from_fn(r, 3, |_, o| o.fill(0.0));
    let b = DescriptorField::from_fn(r, 4, |_, o| o.fill(0.0));
    assert!(match_descriptors(&a, &b, ssd_descriptor, &params(1), 0).is_err());
    assert!(DescriptorField::new(r, 3, vec![0.0; 5]).is_err());
}

#[test]
fn asymmetric_descriptor_distance_is_monotone() {
    let a = fixtures::scene(30, 30, 2);
    let b = fixtures::scene(30, 30, 3);
    let g = geom();
    let da = DescriptorField::raw_patches(&a, &g).unwrap();
    let db = DescriptorField::raw_patches(&b, &g).unwrap();
    // only penalize target values falling below the source
    let one_sided = |x: &[f32], y: &[f32]| {
        x.iter()
            .zip(y)
            .map(|(&p, &q)| ((p - q).max(0.0) as f64).min(0.2))
            .sum::<f64>()
    };
    let space = DescriptorSpace {
        a: &da,
        b: &db,
        distance: one_sided,
    };
    let mut f = crate::annf::init_random_in(&space, 4).unwrap();
    for _ in 0..4 {
        let before: Vec<f64> = f.entries().iter().map(|e| e.dist).collect();
        crate::annf::iterate(&mut f, &space, &params(1)).unwrap();
        assert!(before.iter().zip(f.entries()).all(|(o, e)| e.dist <= *o));
    }
}

#[test]
fn normalized_descriptor_ignores_brightness_shift() {
    let a = fixtures::scene(36, 36, 8);
    let shifted = ImageBuffer::from_fn(36, 36, 3, ColorSpace::Srgb, |x, y, c| a.get(x, y, c) + 30.0 / 255.0);
    let g = geom();
    let norm = |img: &ImageBuffer| {
        DescriptorField::from_fn(g.valid_rect_of(img), g.samples(3), |p, out| {
            let mut v = extract_patch(img, p, &g);
            crate::patch::normalize_patch(&mut v);
            out.copy_from_slice(&v);
        })
    };
    let (da, db) = (norm(&a), norm(&shifted));
    let f = match_descriptors(&da, &db, ssd_descriptor, &params(6), 2).unwrap();
    assert!(f.mean_distance() < 1e-3, "{}", f.mean_distance());
}

/// Independent exhaustive k-NN: every target scanned, the k smallest kept.
fn exact_knn(a: &ImageBuffer, b: &ImageBuffer, g: &PatchGeometry, k: usize) -> Vec<Vec<f64>> {
    let src = g.valid_rect_of(a);
    let tgt = g.valid_rect_of(b);
    src.iter()
        .map(|z| {
            let mut all: Vec<f64> = tgt
                .iter()
                .map(|t| patch_distance(a, z, b, t, g, None).unwrap())
                .collect();
            all.sort_by(f64::total_cmp);
            all.truncate(k);
            all
        })
        .collect()
}

fn assert_heap_invariants(f: &KnnField) {
    for (_, h) in f.iter() {
        assert_eq!(h.len(), f.k());
        let max = h.iter().map(|e| e.dist).fold(f64::MIN, f64::max);
        assert_eq!(h[0].dist, max);
        for i in 1..h.len() {
            assert!(h[(i - 1) / 2].dist >= h[i].dist);
            assert!(h[..i].iter().all(|e| e.target != h[i].target));
        }
    }
}

#[test]
fn knn_init_distinct_and_errors() {
    let a = fixtures::scene(20, 20, 1);
    let small = fixtures::scene(9, 9, 1);
    let g = geom();
    let space = SsdSpace::new(&a, &small, g).unwrap();
    assert_eq!(space.target_rect().area(), 9);
    let f = init_knn_in(&space, 9, 1).unwrap();
    assert_heap_invariants(&f);
    assert!(init_knn_in(&space, 10, 1).is_err());
    assert!(init_knn_in(&space, 0, 1).is_err());
}

#[test]
fn knn_sweeps_keep_invariants_and_monotone_roots() {
    let (a, b) = fixtures::similar_pair(32, 30, (2, 2), 4);
    let g = geom();
    let space = SsdSpace::new(&a, &b, g).unwrap();
    let mut f = init_knn_in(&space, 6, 3).unwrap();
    for _ in 0..5 {
        let roots: Vec<f64> = f.iter().map(|(_, h)| h[0].dist).collect();
        let sorted_before: Vec<Vec<f64>> = f
            .iter()
            .map(|(_, h)| sorted_heap(h).iter().map(|e| e.dist).collect())
            .collect();
        iterate_knn(&mut f, &space, &params(1)).unwrap();
        assert_heap_invariants(&f);
        for (i, (z, h)) in f.iter().enumerate() {
            assert!(h[0].dist <= roots[i]);
            let now: Vec<f64> = sorted_heap(h).iter().map(|e| e.dist).collect();
            assert!(now.iter().zip(&sorted_before[i]).all(|(n, o)| n <= o));
            for e in h {
                assert_eq!(e.dist, patch_distance(&a, z, &b, e.target, &g, None).unwrap());
            }
        }
    }
}

#[test]
fn knn_quality_against_exhaustive_search() {
    let g = geom();
    let (a, b) = fixtures::similar_pair(32, 32, (3, 2), 9);
    let f = compute_knn(&a, &b, &g, 16, &params(8), 4).unwrap();
    let exact = exact_knn(&a, &b, &g, 16);
    let exact_mean = exact.iter().flatten().sum::<f64>() / (exact.len() * 16) as f64;
    assert!(
        f.mean_distance() <= 1.10 * exact_mean,
        "{} vs {}",
        f.mean_distance(),
        exact_mean
    );
    for ((_, h), ex) in f.iter().zip(&exact) {
        let got = sorted_heap(h);
        for (e, x) in got.iter().zip(ex) {
            assert!(e.dist >= *x - 1e-12);
        }
    }
}

#[test]
fn knn_with_k1_tracks_translation_field() {
    let (a, b) = fixtures::similar_pair(80, 70, (4, 3), 12);
    let g = geom();
    let p = params(5);
    let knn = compute_knn(&a, &b, &g, 1, &p, 7).unwrap();
    let nnf = compute_field(&SsdSpace::new(&a, &b, g).unwrap(), &p, 7).unwrap();
    let (m1, m2) = (knn.mean_distance(), nnf.mean_distance());
    assert!((m1 - m2).abs() <= 0.02 * m2, "{m1} vs {m2}");
}

#[test]
fn knn_self_matching_keeps_self() {
    let a = fixtures::scene(32, 32, 14);
    let g = geom();
    let f = compute_knn(&a, &a, &g, 16, &params(8), 2).unwrap();
    assert!(f.is_self_matching());
    for (z, h) in f.iter() {
        assert!(h.iter().any(|e| e.target == z && e.dist == 0.0), "no self match at {z}");
    }
}

#[test]
fn knn_strip_parallel_keeps_invariants() {
    let (a, b) = fixtures::similar_pair(40, 48, (2, 2), 1);
    let g = geom();
    let space = SsdSpace::new(&a, &b, g).unwrap();
    let p = SearchParams {
        threads: 4,
        ..params(1)
    };
    let mut f = init_knn_in(&space, 4, 1).unwrap();
    let mut g2 = f.clone();
    for _ in 0..3 {
        iterate_knn(&mut f, &space, &p).unwrap();
        iterate_knn(&mut g2, &space, &p).unwrap();
        assert_heap_invariants(&f);
    }
    assert_eq!(f, g2);
}

#[test]
fn knn_dump_is_sorted_and_round_trips() {
    let (a, b) = fixtures::similar_pair(20, 18, (1, 1), 2);
    let g = geom();
    let f = compute_knn(&a, &b, &g, 3, &params(2), 1).unwrap();
    let mut buf = Vec::new();
    write_knn(&f, 7, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"KNNF");
    assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 20);
    assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 18);
    assert_eq!(u16::from_le_bytes(buf[12..14].try_into().unwrap()), 7);
    assert_eq!(u16::from_le_bytes(buf[14..16].try_into().unwrap()), 3);
    assert_eq!(buf.len(), 16 + f.len() * 3 * 8);
    let d = read_knn(&mut buf.as_slice()).unwrap();
    for ((z, h), chunk) in f.iter().zip(d.entries.chunks(3)) {
        let s = sorted_heap(h);
        for (e, &(off, dist)) in s.iter().zip(chunk) {
            assert_eq!(z.add(off), e.target);
            assert_eq!(dist, e.dist as f32);
        }
        assert!(chunk.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}

#[test]
fn heap_offer_rules() {
    let e = |x, d| NnfEntry {
        target: Pos::new(x, 0),
        dist: d,
    };
    let mut h = vec![e(0, 5.0), e(1, 3.0), e(2, 1.0)];
    assert!(!heap_offer(&mut h, e(3, 5.0)));
    assert!(!heap_offer(&mut h, e(1, 0.5)));
    assert!(heap_offer(&mut h, e(3, 2.0)));
    assert_eq!(h[0].dist, 3.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn knn_roots_never_increase(seed in 0u64..10_000, k in 1usize..6) {
        let a = fixtures::white_noise(14, 14, 1, seed);
        let b = fixtures::white_noise(15, 13, 1, seed + 1);
        let space = SsdSpace::new(&a, &b, geom()).unwrap();
        let mut f = init_knn_in(&space, k, seed).unwrap();
        for _ in 0..2 {
            let before: Vec<f64> = f.iter().map(|(_, h)| h[0].dist).collect();
            iterate_knn(&mut f, &space, &params(1)).unwrap();
            for (o, (_, h)) in before.iter().zip(f.iter()) {
                prop_assert!(h[0].dist <= *o);
            }
        }
    }

    #[test]
    fn gnnf_distances_never_increase(seed in 0u64..10_000) {
        let a = fixtures::white_noise(16, 16, 1, seed);
        let b = fixtures::white_noise(24, 24, 1, seed + 1);
        let p = GnnfParams { search: params(1), theta_range: (-0.7, 0.7), scale_range: (0.8, 1.2), ..GnnfParams::default() };
        let space = GnnfSpace::new(&a, &b, geom(), p).unwrap();
        let mut f = init_gnnf(&space, seed);
        let before: Vec<f64> = f.entries().iter().map(|e| e.dist).collect();
        iterate_gnnf(&mut f, &space).unwrap();
        for (o, e) in before.iter().zip(f.entries()) {
            prop_assert!(e.dist <= *o);
        }
    }
}
