//! Replicate-parallel folding with results independent of the worker count.
//!
//! Replicates are cut into fixed-size blocks. Each block is folded sequentially
//! from a fresh accumulator, blocks run in parallel, and block results are merged
//! in block order. Since every replicate draws from its own indexed stream, the
//! merged result is the same for one thread or many.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_BLOCK: u64 = 4096;

#[derive(Clone)]
pub struct Driver {
    pool: Arc<rayon::ThreadPool>,
    block: u64,
}

impl std::fmt::Debug for Driver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Driver").field("threads", &self.threads()).field("block", &self.block).finish()
    }
}

impl Driver {
    /// `threads = 0` uses every available core.
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self { pool: Arc::new(pool), block: DEFAULT_BLOCK })
    }

    pub fn with_block(mut self, block: u64) -> Self {
        self.block = block.max(1);
        self
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn blocks(&self, range: Range<u64>) -> Vec<Range<u64>> {
        let mut out = Vec::new();
        let mut start = range.start;
        while start < range.end {
            let end = range.end.min(start + self.block);
            out.push(start..end);
            start = end;
        }
        out
    }

    fn run_blocks<A, I, S>(&self, blocks: &[Range<u64>], init: &I, step: &S) -> Vec<A>
    where
        A: Send,
        I: Fn() -> A + Sync,
        S: Fn(&mut A, u64) + Sync,
    {
        self.pool.install(|| {
            blocks
                .par_iter()
                .map(|b| {
                    let mut acc = init();
                    for i in b.clone() {
                        step(&mut acc, i);
                    }
                    acc
                })
                .collect()
        })
    }

    /// Folds replicates `range` with `step(acc, replicate_index)`.
    pub fn fold<A, I, S, M>(&self, range: Range<u64>, init: I, step: S, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync,
        S: Fn(&mut A, u64) + Sync,
        M: Fn(&mut A, A),
    {
        let mut total = init();
        for part in self.run_blocks(&self.blocks(range), &init, &step) {
            merge(&mut total, part);
        }
        total
    }

    /// Folds blocks of replicates in order until `done(acc)` holds after a block or
    /// `max_replicates` are used; returns the accumulator and the replicates consumed.
    ///
    /// Blocks computed past the stopping block are discarded, so the stopping point
    /// does not depend on how many blocks ran concurrently.
    pub fn fold_until<A, I, S, M, D>(&self, max_replicates: u64, init: I, step: S, merge: M, done: D) -> (A, u64)
    where
        A: Send,
        I: Fn() -> A + Sync,
        S: Fn(&mut A, u64) + Sync,
        M: Fn(&mut A, A),
        D: Fn(&A) -> bool,
    {
        let all = self.blocks(0..max_replicates);
        let wave = 4 * self.threads().max(1);
        let mut total = init();
        let mut used = 0;
        for chunk in all.chunks(wave) {
            let parts = self.run_blocks(chunk, &init, &step);
            for (range, part) in chunk.iter().zip(parts) {
                merge(&mut total, part);
                used = range.end;
                if done(&total) {
                    return (total, used);
                }
            }
        }
        (total, used)
    }
}
