//! Strip-parallel sweep driver.
//!
//! A field with `rows` rows of `row_len` items is cut into equal horizontal
//! strips, one worker per strip. Every worker sees its own rows mutably and
//! the adjacent strips' boundary rows as they were when the sweep started.
//! Joining all workers is the barrier between sweeps.

/// Calls `work(strip, first_row, above, below)` for each strip and sums the
/// returned counts. With one strip the call runs on the current thread.
pub(crate) fn run_strips<E, F>(items: &mut [E], row_len: usize, threads: usize, work: F) -> usize
where
    E: Clone + Send + Sync,
    F: Fn(&mut [E], usize, Option<&[E]>, Option<&[E]>) -> usize + Sync,
{
    if row_len == 0 || items.is_empty() {
        return 0;
    }
    let rows = items.len() / row_len;
    let strips = threads.clamp(1, rows.max(1));
    if strips == 1 {
        return work(items, 0, None, None);
    }
    let rows_per = rows.div_ceil(strips);
    let bounds: Vec<(usize, usize)> = (0..strips)
        .map(|s| (s * rows_per, ((s + 1) * rows_per).min(rows)))
        .filter(|(a, b)| a < b)
        .collect();
    let firsts: Vec<Vec<E>> = bounds
        .iter()
        .map(|&(a, _)| items[a * row_len..(a + 1) * row_len].to_vec())
        .collect();
    let lasts: Vec<Vec<E>> = bounds
        .iter()
        .map(|&(_, b)| items[(b - 1) * row_len..b * row_len].to_vec())
        .collect();
    let mut parts = Vec::with_capacity(bounds.len());
    let mut rest = items;
    for &(a, b) in &bounds {
        let (head, tail) = rest.split_at_mut((b - a) * row_len);
        parts.push(head);
        rest = tail;
    }
    let work = &work;
    std::thread::scope(|scope| {
        let handles: Vec<_> = parts
            .into_iter()
            .enumerate()
            .map(|(s, part)| {
                let first_row = bounds[s].0;
                let above = (s > 0).then(|| lasts[s - 1].as_slice());
                let below = (s + 1 < bounds.len()).then(|| firsts[s + 1].as_slice());
                scope.spawn(move || work(part, first_row, above, below))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .sum()
    })
}
