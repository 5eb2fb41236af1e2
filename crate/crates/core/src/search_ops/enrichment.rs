use crate::annf::{MatchSpace, NnfEntry};
use crate::error::{Error, Result};
use crate::gpm::{contains_target, heap_offer, KnnField};
use crate::patch::Pos;

fn offer_target(space: &(impl MatchSpace + ?Sized), z: Pos, h: &mut [NnfEntry], t: Pos) -> bool {
    if contains_target(h, t) || !space.allowed(z, t) {
        return false;
    }
    let d = space.distance(z, t, h[0].dist);
    heap_offer(h, NnfEntry { target: t, dist: d })
}

/// `min(f, f²)`: every coordinate also considers the stored neighbors of
/// its stored neighbors and keeps the best `k`. Returns the number of
/// coordinates whose heap changed.
pub fn forward_enrichment(f: &mut KnnField, space: &(impl MatchSpace + ?Sized)) -> Result<usize> {
    if !f.is_self_matching() || f.source_rect() != f.target_rect() {
        return Err(Error::param("forward enrichment needs a self-matching field"));
    }
    check_rects(f, space)?;
    let old = f.clone();
    let src = f.source_rect();
    let mut changed = 0;
    for i in 0..f.len() {
        let z = src.pos(i);
        let h = f.heap_at_mut(i);
        let mut any = false;
        for e in old.heap_at(i) {
            for n in old.heap(e.target) {
                any |= offer_target(space, z, h, n.target);
            }
        }
        changed += any as usize;
    }
    Ok(changed)
}

/// `min(f, f⁻¹)`: every coordinate also considers the coordinates that
/// currently store it as a neighbor. Distances are reused when the space is
/// symmetric and recomputed otherwise.
pub fn inverse_enrichment(f: &mut KnnField, space: &(impl MatchSpace + ?Sized)) -> Result<usize> {
    if f.source_rect() != f.target_rect() {
        return Err(Error::DimensionMismatch(
            "inverse enrichment needs a field whose source and target domains coincide".into(),
        ));
    }
    check_rects(f, space)?;
    let src = f.source_rect();
    let inverse = inverse_lists(f);
    let symmetric = space.symmetric();
    let mut changed = 0;
    for (i, list) in inverse.iter().enumerate() {
        let z = src.pos(i);
        let h = f.heap_at_mut(i);
        let mut any = false;
        for &(from, d) in list {
            if symmetric {
                if space.allowed(z, from) {
                    any |= heap_offer(h, NnfEntry { target: from, dist: d });
                }
            } else {
                any |= offer_target(space, z, h, from);
            }
        }
        changed += any as usize;
    }
    Ok(changed)
}

/// Multi-valued inverse of a field over its own domain: for each
/// coordinate, the `(source, dist)` pairs that point at it.
pub fn inverse_lists(f: &KnnField) -> Vec<Vec<(Pos, f64)>> {
    let src = f.source_rect();
    let mut out = vec![Vec::new(); src.area()];
    for (z, h) in f.iter() {
        for e in h {
            if src.contains(e.target) {
                out[src.index(e.target)].push((z, e.dist));
            }
        }
    }
    out
}

fn check_rects(f: &KnnField, space: &(impl MatchSpace + ?Sized)) -> Result<()> {
    if f.source_rect() != space.source_rect() || f.target_rect() != space.target_rect() {
        return Err(Error::DimensionMismatch(
            "field rectangles do not match the matching space".into(),
        ));
    }
    Ok(())
}
