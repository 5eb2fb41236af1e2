use std::cell::RefCell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// Counts EM iterations planned and completed by synthesis calls made inside
/// [`with_progress`] on the current thread.
#[derive(Debug, Default)]
pub struct Progress {
    planned: AtomicUsize,
    done: AtomicUsize,
}

impl Progress {
    pub fn planned(&self) -> usize {
        self.planned.load(Ordering::Relaxed)
    }
    pub fn done(&self) -> usize {
        self.done.load(Ordering::Relaxed)
    }
    /// Completed share of the iterations planned so far, in [0, 1].
    pub fn fraction(&self) -> f64 {
        let p = self.planned();
        if p == 0 {
            0.0
        } else {
            (self.done() as f64 / p as f64).min(1.0)
        }
    }
}

thread_local! {
    static CURRENT: RefCell<Option<Arc<Progress>>> = const { RefCell::new(None) };
}

/// Runs `f` with `progress` receiving the iteration counts of every EM run
/// it starts on this thread.
pub fn with_progress<T>(progress: Arc<Progress>, f: impl FnOnce() -> T) -> T {
    let prev = CURRENT.with(|c| c.replace(Some(progress)));
    let out = f();
    CURRENT.with(|c| *c.borrow_mut() = prev);
    out
}

pub(crate) fn plan(iters: usize) {
    CURRENT.with(|c| {
        if let Some(p) = c.borrow().as_ref() {
            p.planned.fetch_add(iters, Ordering::Relaxed);
        }
    });
}

pub(crate) fn tick() {
    CURRENT.with(|c| {
        if let Some(p) = c.borrow().as_ref() {
            p.done.fetch_add(1, Ordering::Relaxed);
        }
    });
}
