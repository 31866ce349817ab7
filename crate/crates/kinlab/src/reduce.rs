//! Deterministic chunked reductions.
//!
//! Floating-point sums here are computed per index chunk and the chunk sums
//! are combined in a fixed pairwise tree. Chunks may be evaluated on any
//! number of threads; the combination order depends only on the chunk size,
//! so results are bit-identical for 1 or 64 threads.

use rayon::prelude::*;

/// Default index chunk for reductions when no strategy overrides it.
pub const DEFAULT_CHUNK: usize = 2048;

/// A mergeable partial sum.
pub trait Merge: Clone + Send {
    fn merge(&mut self, other: &Self);
}

impl Merge for f64 {
    fn merge(&mut self, other: &Self) {
        *self += *other;
    }
}

impl<const K: usize> Merge for [f64; K] {
    fn merge(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += *b;
        }
    }
}

impl Merge for Vec<f64> {
    fn merge(&mut self, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.iter_mut().zip(other) {
            *a += *b;
        }
    }
}

/// Combine partial sums pairwise until one remains. Left-to-right pairing is
/// part of the determinism contract.
fn tree_combine<A: Merge>(mut parts: Vec<A>, zero: impl Fn() -> A) -> A {
    if parts.is_empty() {
        return zero();
    }
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|pair| {
                let mut head = pair[0].clone();
                if let Some(tail) = pair.get(1) {
                    head.merge(tail);
                }
                head
            })
            .collect();
    }
    parts.pop().unwrap()
}

fn chunk_ranges(n: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| (c * chunk)..((c + 1) * chunk).min(n))
        .collect()
}

/// Deterministic reduction over indices `0..n`.
pub fn fold_indices<A, Z, F>(n: usize, chunk: usize, zero: Z, body: F) -> A
where
    A: Merge,
    Z: Fn() -> A + Sync,
    F: Fn(&mut A, usize) + Sync,
{
    let parts: Vec<A> = chunk_ranges(n, chunk)
        .into_par_iter()
        .map(|range| {
            let mut acc = zero();
            for i in range {
                body(&mut acc, i);
            }
            acc
        })
        .collect();
    tree_combine(parts, zero)
}

/// Deterministic reduction over the strict upper triangle `i < j` of the
/// `n x n` pair grid. Blocks are (chunk x chunk) tiles of the triangle,
/// enumerated in fixed lexicographic order.
pub fn fold_pairs<A, Z, F>(n: usize, chunk: usize, zero: Z, body: F) -> A
where
    A: Merge,
    Z: Fn() -> A + Sync,
    F: Fn(&mut A, usize, usize) + Sync,
{
    let ranges = chunk_ranges(n, chunk);
    let mut blocks = Vec::new();
    for a in 0..ranges.len() {
        for b in a..ranges.len() {
            blocks.push((ranges[a].clone(), ranges[b].clone()));
        }
    }
    let parts: Vec<A> = blocks
        .into_par_iter()
        .map(|(ri, rj)| {
            let mut acc = zero();
            if ri == rj {
                for i in ri.clone() {
                    for j in (i + 1)..ri.end {
                        body(&mut acc, i, j);
                    }
                }
            } else {
                for i in ri {
                    for j in rj.clone() {
                        body(&mut acc, i, j);
                    }
                }
            }
            acc
        })
        .collect();
    tree_combine(parts, zero)
}
