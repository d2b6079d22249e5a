//! Deterministic parallel reductions.
//!
//! Sums are split into fixed-size chunks that are reduced in parallel and then
//! combined in chunk order, so results do not depend on the thread count.

use rayon::prelude::*;

const CHUNK: usize = 4096;

pub fn sum_by(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    if n <= CHUNK {
        return (0..n).map(&f).sum();
    }
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * CHUNK).min(n);
            (c * CHUNK..end).map(&f).sum()
        })
        .collect();
    partial.iter().sum()
}

pub fn max_by(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    (0..n).into_par_iter().map(f).reduce(|| f64::NEG_INFINITY, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum_by(a.len(), |i| a[i] * b[i])
}

pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    sum_by(a.len(), |i| w[i] * a[i] * b[i])
}
