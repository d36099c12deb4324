use super::pool::Pool;
use super::rank::{top1, top_k, SimilarityMatrix};
use crate::{Error, Result};

fn percentage(hits: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    100.0 * hits as f64 / total as f64
}

/// Rounds to two decimals, as printed in result tables.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// R@1 from precomputed top-1 decisions.
pub fn recall_from_top1(top: &[u32], pool: &Pool) -> f64 {
    let hits = top
        .iter()
        .enumerate()
        .filter(|&(q, &g)| g != u32::MAX && pool.is_positive(q, g))
        .count();
    percentage(hits, pool.queries.len())
}

/// FR@1 from precomputed top-1 decisions.
pub fn false_recall_from_top1(top: &[u32], pool: &Pool) -> f64 {
    let hits = top
        .iter()
        .filter(|&&g| g != u32::MAX && pool.is_fooling(g))
        .count();
    percentage(hits, pool.queries.len())
}

fn check(sim: &SimilarityMatrix, pool: &Pool) {
    assert_eq!((sim.rows, sim.cols), pool.shape(), "similarity matrix does not match the pool");
}

/// Percentage of queries whose top-1 item (lowest index on ties) is a positive.
pub fn recall_at_1(sim: &SimilarityMatrix, pool: &Pool) -> f64 {
    check(sim, pool);
    recall_from_top1(&top1(sim), pool)
}

/// Percentage of queries with a positive among the top `k` items.
pub fn recall_at_k(sim: &SimilarityMatrix, pool: &Pool, k: usize) -> f64 {
    check(sim, pool);
    let hits = (0..sim.rows)
        .filter(|&q| top_k(sim.row(q), k).into_iter().any(|g| pool.is_positive(q, g)))
        .count();
    percentage(hits, sim.rows)
}

/// Percentage of queries whose top-1 item is a fooling item.
pub fn false_recall_at_1(sim: &SimilarityMatrix, pool: &Pool) -> f64 {
    check(sim, pool);
    false_recall_from_top1(&top1(sim), pool)
}

/// Relative R@1 loss in percent, rounded to two decimals.
pub fn drop_rate(base_r1: f64, new_r1: f64) -> Result<f64> {
    if base_r1 <= 0.0 || !base_r1.is_finite() {
        return Err(Error::UndefinedDropRate);
    }
    Ok(round2(100.0 * (base_r1 - new_r1) / base_r1))
}
