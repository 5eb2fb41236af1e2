use super::*;
use crate::annf::{Nnf, NnfEntry};
use crate::fixtures::{bricks, scene, tiled, value_noise, white_noise};
use crate::image::{to_lab, ColorSpace, ImageBuffer};
use crate::patch::{PatchGeometry, Pos, Rect};
use crate::Error;

const GRAY: f32 = 1.0 / 255.0;

fn max_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> f32 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

fn mean_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> f32 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.data().len() as f32
}

fn quick() -> EmSchedule {
    EmSchedule {
        coarse_iters: 8,
        fine_iters: 3,
        ..Default::default()
    }
}

fn constant(w: usize, h: usize, rgb: [f32; 3]) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, ColorSpace::Srgb, |_, _, c| rgb[c])
}

// Independent double scan over every patch pair with a hand-written Lab SSD.
fn oracle_bds(s: &ImageBuffer, t: &ImageBuffer, p: usize) -> (f64, f64) {
    let sl = to_lab(s).unwrap();
    let tl = to_lab(t).unwrap();
    let d = |a: &ImageBuffer, ax: usize, ay: usize, b: &ImageBuffer, bx: usize, by: usize| {
        let mut acc = 0.0f64;
        for dy in 0..p {
            for dx in 0..p {
                for c in 0..3 {
                    let v = a.get(ax + dx, ay + dy, c) as f64 - b.get(bx + dx, by + dy, c) as f64;
                    acc += v * v;
                }
            }
        }
        acc
    };
    let one_way = |a: &ImageBuffer, b: &ImageBuffer| {
        let mut sum = 0.0;
        let mut n = 0.0;
        for ay in 0..=a.height() - p {
            for ax in 0..=a.width() - p {
                let mut best = f64::INFINITY;
                for by in 0..=b.height() - p {
                    for bx in 0..=b.width() - p {
                        best = best.min(d(a, ax, ay, b, bx, by));
                    }
                }
                sum += best;
                n += 1.0;
            }
        }
        sum / n
    };
    (one_way(&sl, &tl), one_way(&tl, &sl))
}

#[test]
fn bds_of_identical_images_is_zero() {
    let s = scene(20, 20, 1);
    let g = PatchGeometry::new(5).unwrap();
    let b = bds_distance(&s, &s, &g, None, BdsMode::Exact).unwrap();
    assert_eq!((b.complete, b.cohere), (0.0, 0.0));
}

#[test]
fn bds_of_a_cloned_patch_is_one_sided() {
    let s = scene(24, 24, 2);
    let t = s.crop(6, 9, 5, 5).unwrap();
    let g = PatchGeometry::new(5).unwrap();
    let b = bds_distance(&s, &t, &g, None, BdsMode::Exact).unwrap();
    assert_eq!(b.cohere, 0.0);
    assert!(b.complete > 0.0);
}

#[test]
fn exact_bds_matches_double_scan() {
    let s = scene(12, 12, 3);
    let t = value_noise(12, 12, 3, 4.0, 2, 4);
    let g = PatchGeometry::new(3).unwrap();
    let b = bds_distance(&s, &t, &g, None, BdsMode::Exact).unwrap();
    let (c, h) = oracle_bds(&s, &t, 3);
    assert!((b.complete - c).abs() <= 1e-6 * c.max(1.0), "{} vs {c}", b.complete);
    assert!((b.cohere - h).abs() <= 1e-6 * h.max(1.0), "{} vs {h}", b.cohere);
    let approx = bds_distance(
        &s,
        &t,
        &g,
        None,
        BdsMode::Approx {
            params: Default::default(),
            seed: 5,
        },
    )
    .unwrap();
    assert!(approx.total() >= b.total() - 1e-9);
}

#[test]
fn single_patch_vote_copies_the_source() {
    let s = scene(16, 16, 5);
    let g = PatchGeometry::new(7).unwrap();
    let t = ImageBuffer::filled(7, 7, 3, ColorSpace::Srgb, 0.0);
    let f = Nnf::from_entries(
        Rect::new(3, 3, 4, 4),
        g.valid_rect(16, 16),
        vec![NnfEntry {
            target: Pos::new(8, 5),
            dist: 0.0,
        }],
        0,
    )
    .unwrap();
    let out = vote_and_average(&t, None, Some(&f), &s, &g, None).unwrap();
    assert_eq!(out, s.crop(5, 2, 7, 7).unwrap());
}

fn two_vote_setup() -> (ImageBuffer, ImageBuffer, Nnf, Nnf, PatchGeometry) {
    let s = ImageBuffer::new(2, 1, 1, ColorSpace::Srgb, vec![0.0, 1.0]).unwrap();
    let t = ImageBuffer::filled(1, 1, 1, ColorSpace::Srgb, 0.3);
    let g = PatchGeometry::new(1).unwrap();
    let ts = Nnf::from_entries(
        Rect::new(0, 0, 1, 1),
        Rect::new(0, 0, 2, 1),
        vec![NnfEntry {
            target: Pos::new(0, 0),
            dist: 0.0,
        }],
        0,
    )
    .unwrap();
    let st = Nnf::from_entries(
        Rect::new(1, 0, 2, 1),
        Rect::new(0, 0, 1, 1),
        vec![NnfEntry {
            target: Pos::new(0, 0),
            dist: 0.0,
        }],
        0,
    )
    .unwrap();
    (s, t, ts, st, g)
}

#[test]
fn votes_average_with_weights() {
    let (s, t, ts, st, g) = two_vote_setup();
    let out = vote_and_average(&t, Some(&st), Some(&ts), &s, &g, None).unwrap();
    assert!((out.data()[0] - 0.5).abs() < 1e-6);
    let w = Grid::from_vec(2, 1, vec![1.0, 1.2]).unwrap();
    let out = vote_and_average(&t, Some(&st), Some(&ts), &s, &g, Some(&w)).unwrap();
    assert!((out.data()[0] - 1.2 / 2.2).abs() < 1e-6);
    let out = vote_and_average(&t, None, None, &s, &g, None).unwrap();
    assert_eq!(out.data()[0], 0.3);
}

#[test]
fn em_fixed_point_on_identical_start() {
    let s = scene(64, 64, 6);
    let out = em_optimize(&s, &s, &quick(), &ConstraintSet::default()).unwrap();
    assert!(max_abs_diff(&out, &s) <= GRAY, "{}", max_abs_diff(&out, &s) * 255.0);
}

#[test]
fn em_score_is_monotone_at_fixed_scale() {
    let s = value_noise(48, 48, 3, 6.0, 3, 7);
    let t0 = crate::image::resize(&s, 40, 40);
    let sched = EmSchedule {
        min_dim: 1000,
        coarse_iters: 10,
        ..Default::default()
    };
    let out = em_optimize_with(&s, &t0, &sched, &ConstraintSet::default(), EmMode::Bidirectional).unwrap();
    assert_eq!(out.levels.len(), 1);
    let sc: Vec<f64> = out.levels[0].scores.iter().map(|b| b.total()).collect();
    for w in sc.windows(2) {
        assert!(w[1] <= w[0] * 1.01, "{sc:?}");
    }
}

#[test]
fn constant_source_gives_constant_output() {
    let s = constant(40, 40, [0.2, 0.5, 0.7]);
    let out = retarget(&s, (52, 33), &ConstraintSet::default(), &quick()).unwrap();
    assert_eq!((out.width(), out.height()), (52, 33));
    assert!(max_abs_diff(&out, &constant(52, 33, [0.2, 0.5, 0.7])) <= GRAY);
}

#[test]
fn retarget_to_same_size_is_identity() {
    let s = scene(64, 48, 8);
    let out = retarget(&s, (64, 48), &ConstraintSet::default(), &quick()).unwrap();
    assert!(mean_abs_diff(&out, &s) <= GRAY);
}

#[test]
fn retarget_output_is_convex_in_source_colors() {
    let s = bricks(96, 64, (16, 8), 9);
    let out = retarget(&s, (72, 64), &ConstraintSet::default(), &quick()).unwrap();
    for (c, (lo, hi)) in s.channel_range().into_iter().enumerate() {
        let (olo, ohi) = out.channel_range()[c];
        assert!(
            olo >= lo - GRAY && ohi <= hi + GRAY,
            "channel {c}: [{olo}, {ohi}] vs [{lo}, {hi}]"
        );
    }
}

#[test]
fn retarget_rejects_tiny_output() {
    let s = scene(32, 32, 1);
    assert!(matches!(
        retarget(&s, (4, 32), &ConstraintSet::default(), &quick()),
        Err(Error::ImageTooSmall { .. })
    ));
}

fn hole_mask(w: usize, h: usize, r: Rect) -> Mask {
    let mut m = Grid::filled(w, h, false);
    for p in r.iter() {
        m.set(p.x as usize, p.y as usize, true);
    }
    m
}

#[test]
fn completion_of_constant_region() {
    let mut s = scene(64, 64, 10);
    for y in 16..48 {
        for x in 16..48 {
            s.pixel_mut(x, y).copy_from_slice(&[0.3, 0.6, 0.2]);
        }
    }
    let hole = hole_mask(64, 64, Rect::new(26, 26, 38, 38));
    let mut damaged = s.clone();
    for p in Rect::new(26, 26, 38, 38).iter() {
        damaged
            .pixel_mut(p.x as usize, p.y as usize)
            .copy_from_slice(&[1.0, 0.0, 1.0]);
    }
    let out = complete(&damaged, &hole, None, &quick()).unwrap();
    assert!(max_abs_diff(&out, &s) <= GRAY);
}

#[test]
fn completion_of_periodic_texture() {
    let tile = white_noise(8, 8, 3, 11);
    let s = tiled(64, 64, &tile);
    let r = Rect::new(26, 24, 38, 36);
    let hole = hole_mask(64, 64, r);
    let out = complete(&s, &hole, None, &EmSchedule::default()).unwrap();
    let mut se = 0.0f64;
    let mut n = 0.0;
    for p in r.iter() {
        for c in 0..3 {
            let d = (out.get(p.x as usize, p.y as usize, c) - s.get(p.x as usize, p.y as usize, c)) as f64 * 255.0;
            se += d * d;
            n += 1.0;
        }
    }
    let rms = (se / n).sqrt();
    assert!(rms <= 10.0, "rms {rms}");
    assert!(max_abs_diff(&out, &s) < 1.0);
}

#[test]
fn completion_labels_are_hard_filters() {
    let s = bricks(64, 64, (16, 8), 12);
    let mut labels = Grid::filled(64, 64, 0u32);
    for y in 0..64 {
        for x in 0..64 {
            if y % 8 == 0 {
                labels.set(x, y, 1);
            }
        }
    }
    let hole = hole_mask(64, 64, Rect::new(20, 20, 40, 40));
    let out = complete_with(&s, &hole, Some(&labels), &quick()).unwrap();
    assert!(out.levels.iter().all(|l| l.label_violations == 0));
    for (t, e) in out.t_to_s.iter() {
        let l = labels.at(t).unwrap();
        if l != 0 {
            assert_eq!(labels.at(e.target), Some(l));
        }
    }
}

#[test]
fn completion_errors() {
    let s = scene(48, 48, 13);
    let border = hole_mask(48, 48, Rect::new(0, 10, 8, 20));
    assert!(matches!(
        complete(&s, &border, None, &quick()),
        Err(Error::InvalidConstraint(_))
    ));
    let r = Rect::new(10, 10, 20, 20);
    let mut labels = Grid::filled(48, 48, 0u32);
    labels.set(15, 15, 7);
    match complete(&s, &hole_mask(48, 48, r), Some(&labels), &quick()) {
        Err(e @ Error::UnsupportedLabel(7)) => assert!(e.to_string().contains('7')),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reshuffle_zero_offset_clone_is_identity() {
    let s = scene(64, 64, 14);
    let out = reshuffle(
        &s,
        Rect::new(10, 10, 30, 30),
        Pos::new(0, 0),
        InitMode::Clone,
        &ConstraintSet::default(),
        &quick(),
    )
    .unwrap();
    assert!(mean_abs_diff(&out, &s) <= GRAY);
}

#[test]
fn reshuffle_pins_the_moved_region() {
    let s = scene(64, 64, 15);
    let r = Rect::new(8, 8, 24, 24);
    let d = Pos::new(30, 20);
    let out = reshuffle(&s, r, d, InitMode::Interpolate, &ConstraintSet::default(), &quick()).unwrap();
    for p in r.iter() {
        let q = p.add(d);
        assert_eq!(
            out.pixel(q.x as usize, q.y as usize),
            s.pixel(p.x as usize, p.y as usize)
        );
    }
    assert!(matches!(
        reshuffle(
            &s,
            r,
            Pos::new(50, 0),
            InitMode::Clone,
            &ConstraintSet::default(),
            &quick()
        ),
        Err(Error::InvalidConstraint(_))
    ));
}

#[test]
fn swap_and_clone_differ_on_large_moves() {
    let s = scene(64, 64, 16);
    let r = Rect::new(6, 6, 26, 26);
    let d = Pos::new(32, 30);
    let a = reshuffle(&s, r, d, InitMode::Swap, &ConstraintSet::default(), &quick()).unwrap();
    let b = reshuffle(&s, r, d, InitMode::Clone, &ConstraintSet::default(), &quick()).unwrap();
    let mut acc = 0.0;
    for p in r.iter() {
        for c in 0..3 {
            acc += (a.get(p.x as usize, p.y as usize, c) - b.get(p.x as usize, p.y as usize, c)).abs();
        }
    }
    let mad = acc / (r.area() * 3) as f32 * 255.0;
    assert!(mad > 2.0, "{mad}");
}

fn corr(pts: &[(f64, f64)]) -> Vec<Correspondence> {
    pts.iter().map(|&p| Correspondence { source: p, target: p }).collect()
}

#[test]
fn points_on_a_line_are_unchanged() {
    let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
    let fit = fit_and_project_model(&corr(&pts), &ModelSpec::FreeLine, &RansacParams::default(), 1).unwrap();
    for (a, b) in pts.iter().zip(&fit.projected) {
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }
}

#[test]
fn outlier_is_projected_and_inliers_barely_move() {
    let mut pts: Vec<(f64, f64)> = (0..20)
        .map(|i| {
            let x = i as f64 * 2.0;
            (x, 0.5 * x + 3.0 + if i % 2 == 0 { 0.3 } else { -0.3 })
        })
        .collect();
    let out = (20.0, 0.5 * 20.0 + 3.0 + 30.0 * 1.25f64.sqrt());
    pts.push(out);
    let fit = fit_and_project_model(&corr(&pts), &ModelSpec::FreeLine, &RansacParams::default(), 2).unwrap();
    assert!(!fit.inliers[20]);
    let FittedModel::Line(l) = fit.model else { panic!() };
    assert!(l.distance(fit.projected[20]) < 1e-9);
    // least-squares line through the 20 inliers
    let oracle = least_squares_line(&pts[..20]).unwrap();
    let residual = pts[..20].iter().map(|&p| oracle.distance(p)).fold(0.0, f64::max);
    for i in 0..20 {
        let d = ((pts[i].0 - fit.projected[i].0).powi(2) + (pts[i].1 - fit.projected[i].1).powi(2)).sqrt();
        assert!(d <= residual + 1e-6, "{d} > {residual}");
    }
}

#[test]
fn fixed_slope_keeps_the_slope() {
    let pts: Vec<(f64, f64)> = (0..15)
        .map(|i| (i as f64, 0.7 * i as f64 + 5.0 + (i % 3) as f64 * 0.2))
        .collect();
    let spec = ModelSpec::FixedSlopeLine { direction: (2.0, 1.0) };
    let fit = fit_and_project_model(&corr(&pts), &spec, &RansacParams::default(), 3).unwrap();
    let FittedModel::Line(l) = fit.model else { panic!() };
    let d = l.direction();
    assert!((d.1 / d.0 - 0.5).abs() < 1e-12);
    assert!(fit.max_inlier_move <= RansacParams::default().threshold);
}

#[test]
fn fixed_position_and_region_models() {
    let pts = corr(&[(0.0, 1.0), (5.0, -1.0), (9.0, 2.0)]);
    let spec = ModelSpec::FixedPositionLine {
        a: (0.0, 0.0),
        b: (10.0, 0.0),
    };
    let fit = fit_and_project_model(&pts, &spec, &RansacParams::default(), 4).unwrap();
    assert!(fit.projected.iter().all(|p| p.1.abs() < 1e-12));
    let pairs: Vec<Correspondence> = (0..6)
        .map(|i| Correspondence {
            source: (i as f64, 2.0 * i as f64),
            target: (1.5 * i as f64 + 4.0, 3.0 * i as f64 - 2.0),
        })
        .collect();
    let fit = fit_and_project_model(
        &pairs,
        &ModelSpec::ScaleRegion { scale: 1.5 },
        &RansacParams::default(),
        5,
    )
    .unwrap();
    match fit.model {
        FittedModel::Similarity { scale, tx, ty } => {
            assert_eq!(scale, 1.5);
            assert!((tx - 4.0).abs() < 1e-9 && (ty + 2.0).abs() < 1e-9);
        }
        m => panic!("{m:?}"),
    }
    let few = &pairs[..2];
    assert!(matches!(
        fit_and_project_model(few, &ModelSpec::ScaleRegion { scale: 1.5 }, &RansacParams::default(), 5),
        Err(Error::FitFailed(_))
    ));
    let scattered = corr(&[(0.0, 0.0), (10.0, 40.0), (20.0, -30.0), (30.0, 50.0), (40.0, -10.0)]);
    assert!(matches!(
        fit_and_project_model(&scattered, &ModelSpec::FreeLine, &RansacParams::default(), 6),
        Err(Error::FitFailed(_))
    ));
}

#[test]
fn local_scale_identity_and_constant() {
    let s = scene(64, 64, 17);
    let r = Rect::new(20, 20, 40, 40);
    assert_eq!(local_scale(&s, r, 1.0, &quick()).unwrap(), s);
    let mut c = scene(64, 64, 18);
    for p in Rect::new(8, 8, 56, 56).iter() {
        c.pixel_mut(p.x as usize, p.y as usize)
            .copy_from_slice(&[0.4, 0.4, 0.8]);
    }
    let out = local_scale(&c, Rect::new(24, 24, 40, 40), 1.5, &quick()).unwrap();
    for p in Rect::new(8, 8, 56, 56).iter() {
        let px = out.pixel(p.x as usize, p.y as usize);
        assert!(
            (px[0] - 0.4).abs() <= GRAY && (px[2] - 0.8).abs() <= GRAY,
            "{p}: {px:?}"
        );
    }
    assert!(matches!(
        local_scale(&s, Rect::new(2, 2, 40, 40), 1.5, &quick()),
        Err(Error::InvalidConstraint(_))
    ));
}

#[test]
fn annotations_round_trip() {
    let text = "# comment\nline free 1 2 30 4\nline slope 0 0 10 5\nline pos 1 1 9 9 2 2 8 8\n\
                region translate 3 3 10 10\nregion scale 4 4 12 12 1.5\nregion move 0 0 5 5 7 -2\n";
    let a = Annotations::parse(text).unwrap();
    assert_eq!(a.models.len(), 5);
    assert_eq!(
        a.hard,
        vec![HardRegion {
            source: Rect::new(0, 0, 5, 5),
            offset: Pos::new(7, -2)
        }]
    );
    assert_eq!(Annotations::parse(&a.to_text()).unwrap(), a);
    for bad in [
        "line free 1 2 3",
        "region move 0 0 5 5 1.5 2",
        "circle 1 2 3",
        "line slope a b c d",
    ] {
        assert!(matches!(Annotations::parse(bad), Err(Error::Format(_))), "{bad}");
    }
}

#[test]
fn mask_and_label_decoding() {
    let gray = ImageBuffer::new(3, 1, 1, ColorSpace::Srgb, vec![0.0, 0.5, 1.0]).unwrap();
    assert_eq!(Mask::from_image(&gray).data, vec![false, true, true]);
    let la = ImageBuffer::new(2, 1, 2, ColorSpace::Srgb, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(Mask::from_image(&la).data, vec![false, true]);
    let rgb = ImageBuffer::new(
        4,
        1,
        3,
        ColorSpace::Srgb,
        vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
    )
    .unwrap();
    assert_eq!(LabelMap::from_image(&rgb).data, vec![0, 1, 2, 1]);
}

#[test]
fn model_weights_boost_marked_pixels() {
    let c = ConstraintSet {
        models: vec![ModelConstraint::Region {
            rect: Rect::new(2, 2, 4, 4),
            scale: None,
        }],
        ..Default::default()
    };
    let w = c.effective_weights(6, 6);
    assert_eq!(w.get(2, 3), MODEL_WEIGHT_BOOST);
    assert_eq!(w.get(0, 0), 1.0);
}

#[test]
fn gradual_dims_reach_the_target() {
    let mut d = (64, 48);
    let mut steps = 0;
    while d != (40, 60) {
        d = super::em::next_dims(d, (40, 60), 0.9);
        steps += 1;
        assert!(steps < 100);
    }
    assert!(steps > 3);
}

#[test]
fn progress_counts_every_iteration() {
    use std::sync::Arc;
    let s = scene(64, 48, 3);
    let p = Arc::new(Progress::default());
    with_progress(p.clone(), || {
        retarget(&s, (52, 48), &ConstraintSet::default(), &quick())
    })
    .unwrap();
    assert!(p.planned() > 0);
    assert_eq!(p.done(), p.planned());
    assert_eq!(p.fraction(), 1.0);

    let mut hole = Grid::filled(64, 48, false);
    for y in 20..28 {
        for x in 20..30 {
            hole.set(x, y, true);
        }
    }
    let q = Arc::new(Progress::default());
    with_progress(q.clone(), || complete(&s, &hole, None, &quick())).unwrap();
    assert_eq!(q.done(), q.planned());
    // untracked calls leave the counters alone
    complete(&s, &hole, None, &quick()).unwrap();
    assert_eq!(q.done(), q.planned());
}
