use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use patchmatch::annf::{coherence_histogram, compute_nnf, read_nnf, write_nnf};
use patchmatch::bench::run_bench;
use patchmatch::fixtures::similar_pair;
use patchmatch::gpm::{compute_gnnf, compute_knn, write_knn, Filter, GnnfParams, PatchMetric};
use patchmatch::image::{load_image, save_png};
use patchmatch::patchweb::{
    build_web, field_mean, query_web, Policy, Quantizer, QueryParams, RelaxOps, Web, WebParams,
};
use patchmatch::synthesis::{complete, reshuffle, retarget, Annotations, ConstraintSet, InitMode, LabelMap, Mask};
use patchmatch::vision::{
    detect_copy_move, detect_lattice, detect_object, nlm_denoise, Center, DenoiseParams, DetectParams, ForgeryParams,
    LatticeParams,
};
use patchmatch::{ColorSpace, Error, ImageBuffer, PatchGeometry, Pos, Rect, Result};
use serde_json::{json, Map, Value};

use crate::args::*;

pub type Report = Map<String, Value>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn geometry(size: usize) -> Result<PatchGeometry> {
    PatchGeometry::new(size)
}

fn mask_image(mask: &Mask) -> ImageBuffer {
    ImageBuffer::from_fn(mask.width, mask.height, 1, ColorSpace::Srgb, |x, y, _| {
        if mask.get(x, y) {
            1.0
        } else {
            0.0
        }
    })
}

fn report(pairs: Value) -> Report {
    match pairs {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn ops(a: &OpsArgs) -> RelaxOps {
    RelaxOps {
        propagation: !a.no_propagation,
        random_search: !a.no_random_search,
        binning: !a.no_binning,
        enrichment: !a.no_enrichment,
        uniform: !a.no_uniform,
    }
}

fn annotations(path: Option<&Path>) -> Result<ConstraintSet> {
    let Some(path) = path else {
        return Ok(ConstraintSet::default());
    };
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let a = Annotations::parse(&text)?;
    Ok(ConstraintSet {
        models: a.models,
        hard: a.hard,
        ..Default::default()
    })
}

fn ints<const N: usize>(s: &str, what: &str) -> Result<[i32; N]> {
    let v: Vec<i32> = s
        .split(',')
        .map(|w| w.trim().parse::<i32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidParameter(format!("{what} must be {N} comma-separated integers, got {s:?}")))?;
    v.try_into()
        .map_err(|_| Error::InvalidParameter(format!("{what} must be {N} comma-separated integers, got {s:?}")))
}

pub fn nnf(a: &NnfArgs) -> Result<Report> {
    let (img_a, img_b) = (load_image(&a.a)?, load_image(&a.b)?);
    let g = geometry(a.patch_size)?;
    let t = Instant::now();
    let f = compute_nnf(&img_a, &img_b, &g, &a.search.params(), a.multiscale, a.seed)?;
    let elapsed = t.elapsed().as_secs_f64();
    let mut w = create(&a.output)?;
    write_nnf(&f, g.size(), &mut w)?;
    w.flush().map_err(io_err(&a.output))?;
    Ok(report(json!({
        "width": img_a.width(),
        "height": img_a.height(),
        "entries": f.len(),
        "meanDist": f.mean_distance(),
        "wallTimeSec": elapsed,
    })))
}

pub fn knn(a: &KnnArgs) -> Result<Report> {
    let (img_a, img_b) = (load_image(&a.a)?, load_image(&a.b)?);
    let g = geometry(a.patch_size)?;
    let f = compute_knn(&img_a, &img_b, &g, a.k, &a.search.params(), a.seed)?;
    let mut w = create(&a.output)?;
    write_knn(&f, g.size(), &mut w)?;
    w.flush().map_err(io_err(&a.output))?;
    Ok(report(json!({
        "k": f.k(),
        "entries": f.len(),
        "meanDist": f.mean_distance(),
    })))
}

pub fn gnnf(a: &GnnfArgs) -> Result<Report> {
    let (img_a, img_b) = (load_image(&a.a)?, load_image(&a.b)?);
    let g = geometry(a.patch_size)?;
    let params = GnnfParams {
        search: a.search.params(),
        theta_range: (a.theta_min, a.theta_max),
        scale_range: (a.scale_min, a.scale_max),
        filter: if a.nearest { Filter::Nearest } else { Filter::Bilinear },
        metric: if a.normalized {
            PatchMetric::Normalized
        } else {
            PatchMetric::Ssd
        },
    };
    let f = compute_gnnf(&img_a, &img_b, &g, &params, a.seed)?;
    let mut w = create(&a.output)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "x,y,tx,ty,theta,scale,dist")?;
        for (p, e) in f.iter() {
            let s = e.xf;
            writeln!(w, "{},{},{},{},{},{},{}", p.x, p.y, s.x, s.y, s.theta, s.scale, e.dist)?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(&a.output))?;
    Ok(report(json!({
        "entries": f.entries().len(),
        "meanDist": f.mean_distance(),
    })))
}

pub fn denoise(a: &DenoiseArgs) -> Result<Report> {
    let img = load_image(&a.input)?;
    let params = DenoiseParams {
        k: a.k,
        h: a.h,
        include_self: !a.exclude_self,
        search: a.search.params(),
        seed: a.seed,
    };
    let out = nlm_denoise(&img, &geometry(a.patch_size)?, &params)?;
    save_png(&out, &a.output)?;
    Ok(report(json!({ "width": out.width(), "height": out.height() })))
}

pub fn forgery(a: &ForgeryArgs) -> Result<Report> {
    let img = load_image(&a.input)?;
    let params = ForgeryParams {
        k: a.k,
        offset_agreement: a.offset_agreement,
        max_patch_dist: a.max_patch_dist,
        min_region: a.min_region,
        self_exclusion: a.self_exclusion,
        search: a.search.params(),
        seed: a.seed,
    };
    let masks = detect_copy_move(&img, &geometry(a.patch_size)?, &params)?;
    let mut union = Mask::filled(img.width(), img.height(), false);
    for m in &masks {
        for (u, &v) in union.data.iter_mut().zip(&m.data) {
            *u |= v;
        }
    }
    if let Some(out) = &a.output {
        save_png(&mask_image(&union), out)?;
    }
    Ok(report(json!({
        "regions": masks.len(),
        "regionPixels": masks.iter().map(|m| m.count()).collect::<Vec<_>>(),
        "maskedPixels": union.count(),
    })))
}

pub fn lattice(a: &LatticeArgs) -> Result<Report> {
    let img = load_image(&a.input)?;
    let params = LatticeParams {
        k: a.k,
        max_patch_dist: a.max_patch_dist,
        max_coeff: a.max_coeff,
        residual: a.residual,
        min_inliers: a.min_inliers,
        iterations: a.ransac_iterations,
        center: if a.median { Center::Median } else { Center::Mean },
        search: a.search.params(),
        seed: a.seed,
    };
    let r = detect_lattice(&img, &geometry(a.patch_size)?, &params)?;
    if let Some(out) = &a.output {
        save_png(&mask_image(&r.inlier_mask), out)?;
    }
    Ok(report(json!({
        "v1": [r.v1.0, r.v1.1],
        "v2": [r.v2.0, r.v2.1],
        "inliers": r.inliers,
    })))
}

pub fn detect(a: &DetectArgs) -> Result<Report> {
    let (template, scene) = (load_image(&a.template)?, load_image(&a.scene)?);
    let params = DetectParams {
        theta_range: (a.theta_min, a.theta_max),
        scale_range: (a.scale_min, a.scale_max),
        search: a.search.params(),
        restarts: a.restarts,
        ransac_iterations: a.ransac_iterations,
        inlier_threshold: a.inlier_threshold,
        min_confidence: a.min_confidence,
        min_texture: a.min_texture,
        seed: a.seed,
    };
    let d = detect_object(&template, &scene, &geometry(a.patch_size)?, &params)?;
    Ok(report(serde_json::to_value(d).expect("detection serializes")))
}

pub fn retarget_cmd(a: &RetargetArgs) -> Result<Report> {
    let img = load_image(&a.input)?;
    let dims = (a.width.unwrap_or(img.width()), a.height.unwrap_or(img.height()));
    let c = annotations(a.annotations.as_deref())?;
    let out = retarget(&img, dims, &c, &a.em.schedule())?;
    save_png(&out, &a.output)?;
    Ok(report(json!({ "width": out.width(), "height": out.height() })))
}

pub fn complete_cmd(a: &CompleteArgs) -> Result<Report> {
    let img = load_image(&a.input)?;
    let hole = Mask::from_image(&load_image(&a.mask)?);
    let labels = match &a.labels {
        Some(p) => Some(LabelMap::from_image(&load_image(p)?)),
        None => None,
    };
    let out = complete(&img, &hole, labels.as_ref(), &a.em.schedule())?;
    save_png(&out, &a.output)?;
    Ok(report(json!({ "holePixels": hole.count() })))
}

pub fn reshuffle_cmd(a: &ReshuffleArgs) -> Result<Report> {
    let img = load_image(&a.input)?;
    let [x0, y0, x1, y1] = ints::<4>(&a.region, "--region")?;
    let [dx, dy] = ints::<2>(&a.offset, "--offset")?;
    let mode = match a.mode {
        ShuffleMode::Swap => InitMode::Swap,
        ShuffleMode::Interpolate => InitMode::Interpolate,
        ShuffleMode::Clone => InitMode::Clone,
    };
    let c = annotations(a.annotations.as_deref())?;
    let out = reshuffle(
        &img,
        Rect::new(x0, y0, x1, y1),
        Pos::new(dx, dy),
        mode,
        &c,
        &a.em.schedule(),
    )?;
    save_png(&out, &a.output)?;
    Ok(report(json!({ "width": out.width(), "height": out.height() })))
}

pub fn web_build(a: &WebBuildArgs) -> Result<Report> {
    let manifest = patchmatch::patchweb::Manifest::from_paths(&a.images)?;
    let params = WebParams {
        patch_size: a.patch_size,
        capacity: a.capacity,
        rounds: a.rounds,
        sweeps_per_round: a.sweeps,
        policy: Policy {
            keep: a.keep,
            fresh: a.fresh,
            enrich: a.enrich,
        },
        ops: ops(&a.ops),
        alpha: a.alpha,
        seed: a.seed,
        workers: a.workers,
        trace: true,
        ..WebParams::default()
    };
    let r = build_web(&a.dir, &manifest, &params)?;
    Ok(report(json!({
        "images": manifest.len(),
        "rounds": r.rounds.len(),
        "evaluated": r.evaluated,
        "improved": r.improved,
        "meanDist": r.rounds.last().map(|t| t.mean_distance),
        "trace": r.rounds,
    })))
}

pub fn web_query(a: &WebQueryArgs) -> Result<Report> {
    let query = load_image(&a.query)?;
    let params = QueryParams {
        capacity: a.capacity,
        rounds: a.rounds,
        sweeps_per_round: a.sweeps,
        ops: ops(&a.ops),
        alpha: a.alpha,
        seed: a.seed,
        workers: a.workers,
        ..QueryParams::default()
    };
    let f = query_web(&a.dir, &query, &params)?;
    if let Some(out) = &a.output {
        let mut w = create(out)?;
        f.write_to(&mut w)?;
        w.flush().map_err(io_err(out))?;
    }
    let web = Web::open(&a.dir)?;
    let q = Quantizer::for_patch(web.geom.size(), 3);
    Ok(report(json!({
        "entries": f.entries.len(),
        "meanDist": field_mean(&f, &q),
    })))
}

pub fn bench(a: &BenchArgs) -> Result<Report> {
    let (img_a, img_b) = match (&a.a, &a.b) {
        (Some(pa), Some(pb)) => (load_image(pa)?, load_image(pb)?),
        _ => similar_pair(a.width, a.height, (5, 3), a.seed),
    };
    let r = run_bench(
        &img_a,
        &img_b,
        &geometry(a.patch_size)?,
        &a.search.params(),
        a.seed,
        a.oracle,
    )?;
    let value = serde_json::to_value(&r).expect("report serializes");
    if let Some(out) = &a.output {
        std::fs::write(out, r.to_json()).map_err(io_err(out))?;
    }
    Ok(report(value))
}

pub fn stats(a: &StatsArgs) -> Result<Report> {
    let mut file = std::io::BufReader::new(File::open(&a.input).map_err(io_err(&a.input))?);
    let dump = read_nnf(&mut file)?;
    let g = geometry(dump.patch_size as usize)?;
    let src = dump.source_rect();
    // the dump does not record the target size; the smallest one holding
    // every target is enough for offset statistics
    let (mut tw, mut th) = (g.size(), g.size());
    for (i, (off, _)) in dump.entries.iter().enumerate() {
        let t = src.pos(i).add(*off);
        if t.x < 0 || t.y < 0 {
            return Err(Error::Format(format!("target {t} has negative coordinates")));
        }
        tw = tw.max((t.x + g.half() + 1) as usize);
        th = th.max((t.y + g.half() + 1) as usize);
    }
    let mut dists: Vec<f64> = dump.entries.iter().map(|e| e.1 as f64).collect();
    let f = dump.into_nnf(tw, th)?;
    let h = coherence_histogram(&f, a.bins);
    dists.sort_by(f64::total_cmp);
    let median = dists.get(dists.len() / 2).copied().unwrap_or(0.0);
    let coherent = h.counts.first().copied().unwrap_or(0) as f64 / h.total().max(1) as f64;
    Ok(report(json!({
        "entries": f.len(),
        "meanDist": f.mean_distance(),
        "medianDist": median,
        "coherentFraction": coherent,
        "coherence": h.counts,
    })))
}
