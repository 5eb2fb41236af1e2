use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::rngs::SmallRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::entry::{is_sentinel, rank, unpack_web_entry, Quantizer, MAX_IMAGE};
use super::relax::{relax, select_working_set, BinCache, LoadedImage, LoadedSet, Policy, RelaxOps, WorkingSet};
use super::store::{
    check_side, field_path, load_collection_image, merge_save, read_field, write_field, Manifest, WebNnf, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::patch::PatchGeometry;
use crate::search_ops::BinParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WebParams {
    pub patch_size: usize,
    /// Images resident per working set.
    pub capacity: usize,
    pub rounds: usize,
    pub sweeps_per_round: usize,
    pub policy: Policy,
    pub ops: RelaxOps,
    pub bins: BinParams,
    pub alpha: f64,
    pub seed: u64,
    /// Concurrent workers, each with its own working set.
    pub workers: usize,
    /// Record the web-wide mean distance after every round.
    pub trace: bool,
}

impl Default for WebParams {
    fn default() -> Self {
        WebParams {
            patch_size: 7,
            capacity: 8,
            rounds: 10,
            sweeps_per_round: 2,
            policy: Policy::default(),
            ops: RelaxOps::default(),
            bins: BinParams::default(),
            alpha: 0.5,
            seed: 0,
            workers: 1,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Relaxation time since the start of the build, excluding tracing.
    pub elapsed_s: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub rounds: Vec<RoundTrace>,
    pub evaluated: usize,
    pub improved: usize,
}

/// A web directory.
#[derive(Debug, Clone)]
pub struct Web {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub geom: PatchGeometry,
}

impl Web {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = Manifest::read(&dir.join(MANIFEST_FILE))?;
        if manifest.is_empty() {
            return Err(Error::Format("empty web manifest".into()));
        }
        let first = read_field(&field_path(&dir, 0))?;
        let geom = PatchGeometry::new(first.patch_size as usize)?;
        Ok(Web { dir, manifest, geom })
    }

    pub fn field(&self, index: usize) -> Result<WebNnf> {
        read_field(&field_path(&self.dir, index))
    }

    pub fn quantizer(&self) -> Quantizer {
        Quantizer::for_patch(self.geom.size(), 3)
    }

    /// Mean dequantized distance over all entries; unassigned entries count
    /// as the largest representable distance.
    pub fn mean_distance(&self) -> Result<f64> {
        let q = self.quantizer();
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.manifest.len() {
            for &w in &self.field(i)?.entries {
                sum += field_value(&q, w);
                n += 1;
            }
        }
        Ok(sum / n.max(1) as f64)
    }

    /// Checks that no entry targets its own image and every assigned target
    /// is a valid coordinate of a collection image.
    pub fn validate(&self) -> Result<()> {
        let rects: Vec<_> = self
            .manifest
            .images
            .iter()
            .map(|e| self.geom.valid_rect(e.width, e.height))
            .collect();
        for i in 0..self.manifest.len() {
            for (k, &w) in self.field(i)?.entries.iter().enumerate() {
                if is_sentinel(w) {
                    continue;
                }
                let e = unpack_web_entry(w);
                let j = e.image as usize;
                let ok = j != i && j < rects.len() && rects[j].contains(crate::patch::Pos::new(e.x as i32, e.y as i32));
                if !ok {
                    return Err(Error::Format(format!("image {i} entry {k} has invalid target {e:?}")));
                }
            }
        }
        Ok(())
    }
}

fn field_value(q: &Quantizer, w: u64) -> f64 {
    if is_sentinel(w) {
        q.d_max
    } else {
        q.dequantize(rank(w) as u32)
    }
}

/// Mean dequantized distance of one field; unassigned entries count as the
/// largest representable distance.
pub fn field_mean(f: &WebNnf, q: &Quantizer) -> f64 {
    f.entries.iter().map(|&w| field_value(q, w)).sum::<f64>() / f.entries.len().max(1) as f64
}

fn load_members(web: &Web, ws: &WorkingSet, writable: bool) -> Result<Vec<LoadedImage>> {
    ws.members
        .iter()
        .map(|&i| {
            Ok(LoadedImage {
                id: i,
                image: load_collection_image(&web.manifest.images[i])?,
                field: web.field(i)?,
                writable,
            })
        })
        .collect()
}

/// Creates or resumes a web in `dir` and relaxes it for `params.rounds`
/// rounds. Existing field files are kept, so a build can be continued.
pub fn build_web(dir: impl AsRef<Path>, manifest: &Manifest, params: &WebParams) -> Result<BuildReport> {
    let dir = dir.as_ref();
    manifest.validate()?;
    if manifest.len() < 2 {
        return Err(Error::param("a web needs at least two images"));
    }
    let geom = PatchGeometry::new(params.patch_size)?;
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    manifest.write(&dir.join(MANIFEST_FILE))?;
    for (i, e) in manifest.images.iter().enumerate() {
        let p = field_path(dir, i);
        if geom.valid_rect(e.width, e.height).is_empty() {
            return Err(Error::ImageTooSmall {
                width: e.width,
                height: e.height,
                required: geom.size(),
            });
        }
        if !p.exists() {
            write_field(&p, &WebNnf::unassigned(e.width, e.height, &geom))?;
        }
    }
    let web = Web::open(dir)?;
    if web.geom != geom {
        return Err(Error::param(format!(
            "existing web uses {}x{} patches",
            web.geom.size(),
            web.geom.size()
        )));
    }

    let workers = params.workers.max(1);
    let mut report = BuildReport::default();
    let mut previous: Vec<Option<(WorkingSet, Vec<(usize, WebNnf)>)>> = vec![None; workers];
    let mut elapsed = 0.0;
    let cache = BinCache::default();
    for round in 0..params.rounds {
        let start = Instant::now();
        let results: Vec<Result<_>> = std::thread::scope(|scope| {
            let handles: Vec<_> = previous
                .iter()
                .enumerate()
                .map(|(w, prev)| {
                    let (web, cache) = (&web, &cache);
                    scope.spawn(move || worker_round(web, params, cache, prev.as_ref(), round, w))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("web worker panicked"))
                .collect()
        });
        for (w, r) in results.into_iter().enumerate() {
            let (ws, fields, stats) = r?;
            report.evaluated += stats.evaluated;
            report.improved += stats.improved;
            previous[w] = Some((ws, fields));
        }
        elapsed += start.elapsed().as_secs_f64();
        if params.trace {
            report.rounds.push(RoundTrace {
                elapsed_s: elapsed,
                mean_distance: web.mean_distance()?,
            });
        }
    }
    Ok(report)
}

type RoundOutput = (WorkingSet, Vec<(usize, WebNnf)>, super::relax::RelaxStats);

fn worker_round(
    web: &Web,
    params: &WebParams,
    cache: &BinCache,
    prev: Option<&(WorkingSet, Vec<(usize, WebNnf)>)>,
    round: usize,
    worker: usize,
) -> Result<RoundOutput> {
    let seed = crate::rng::key(params.seed, round as u64, worker as u64, 0x77eb);
    let mut rng = SmallRng::seed_from_u64(seed);
    let links = |i: usize| prev.and_then(|(_, f)| f.iter().find(|(k, _)| *k == i).map(|(_, f)| f));
    let ws = select_working_set(
        web.manifest.len(),
        params.capacity,
        prev.map(|p| &p.0),
        &[],
        &links,
        &params.policy,
        &mut rng,
    )?;
    let members = load_members(web, &ws, true)?;
    let bins = params.ops.binning.then_some(&params.bins);
    let mut set = LoadedSet::new_cached(web.geom, members, bins, Some(cache))?;
    let stats = relax(&mut set, params.sweeps_per_round, &params.ops, params.alpha, seed);
    let mut saved = Vec::new();
    for (i, f, _) in set.into_fields() {
        saved.push((i, merge_save(&field_path(&web.dir, i), &f)?));
    }
    Ok((ws, saved, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryParams {
    pub capacity: usize,
    pub rounds: usize,
    pub sweeps_per_round: usize,
    pub ops: RelaxOps,
    pub bins: BinParams,
    pub alpha: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams {
            capacity: 8,
            rounds: 6,
            sweeps_per_round: 2,
            ops: RelaxOps::default(),
            bins: BinParams::default(),
            alpha: 0.5,
            seed: 0,
            workers: 1,
        }
    }
}

/// Matches `query` against a built web without modifying it. Every working
/// set contains the query; only the query's field is updated. With several
/// workers, their fields are merged by pointwise minimum.
pub fn query_web(dir: impl AsRef<Path>, query: &ImageBuffer, params: &QueryParams) -> Result<WebNnf> {
    let web = Web::open(dir)?;
    check_side(query.width(), query.height(), Path::new("query image"))?;
    let query = query.to_rgb();
    web.geom.require_fits(&query)?;
    let qid = web.manifest.len();
    if qid > MAX_IMAGE as usize {
        return Err(Error::param("collection too large to add a query"));
    }
    let workers = params.workers.max(1);
    let fields: Vec<Result<WebNnf>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (web, query) = (&web, &query);
                scope.spawn(move || query_worker(web, query, qid, params, w))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("query worker panicked"))
            .collect()
    });
    let mut out: Option<WebNnf> = None;
    for f in fields {
        let f = f?;
        match &mut out {
            None => out = Some(f),
            Some(o) => o.merge_min(&f)?,
        }
    }
    Ok(out.expect("at least one worker"))
}

fn query_worker(web: &Web, query: &ImageBuffer, qid: usize, params: &QueryParams, worker: usize) -> Result<WebNnf> {
    let mut field = WebNnf::unassigned(query.width(), query.height(), &web.geom);
    let mut prev: Option<WorkingSet> = None;
    let cache = BinCache::default();
    for round in 0..params.rounds {
        let seed = crate::rng::key(params.seed, round as u64, worker as u64, 0x9e7);
        let mut rng = SmallRng::seed_from_u64(seed);
        let own = field.clone();
        let links = |i: usize| (i == qid).then_some(&own);
        let ws = select_working_set(
            web.manifest.len(),
            params.capacity,
            prev.as_ref(),
            &[qid],
            &links,
            &Policy::default(),
            &mut rng,
        )?;
        let collection = WorkingSet {
            members: ws.members.iter().copied().filter(|&m| m != qid).collect(),
            capacity: ws.capacity,
        };
        let mut members = vec![LoadedImage {
            id: qid,
            image: query.clone(),
            field,
            writable: true,
        }];
        members.extend(load_members(web, &collection, false)?);
        let bins = params.ops.binning.then_some(&params.bins);
        let mut set = LoadedSet::new_cached(web.geom, members, bins, Some(&cache))?;
        relax(&mut set, params.sweeps_per_round, &params.ops, params.alpha, seed);
        field = set
            .into_fields()
            .into_iter()
            .find(|(i, _, _)| *i == qid)
            .map(|(_, f, _)| f)
            .expect("query is loaded");
        prev = Some(ws);
    }
    Ok(field)
}
