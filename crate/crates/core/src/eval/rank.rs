use rayon::prelude::*;

use crate::embedding::EmbeddingMatrix;
use crate::{Error, Result};

/// Query rows per parallel task in the streaming kernel.
const QUERY_BLOCK: usize = 16;
/// Gallery rows scanned per tile.
const GALLERY_BLOCK: usize = 512;

/// Dense query × gallery scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} matrix with {} entries", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDegeneracy("non-finite similarity".into()));
        }
        Ok(SimilarityMatrix { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scaled(&self, factor: f32) -> Self {
        SimilarityMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Dot product with a fixed summation order, shared by every kernel so
/// dense and streaming scores agree bit for bit.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for k in 0..8 {
            acc[k] += a[i * 8 + k] * b[i * 8 + k];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn check_pair(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix) -> Result<()> {
    if queries.dim() != gallery.dim() {
        return Err(Error::Shape(format!(
            "query dim {} vs gallery dim {}",
            queries.dim(),
            gallery.dim()
        )));
    }
    Ok(())
}

/// Full similarity matrix (cosine for unit rows), computed in tiles.
pub fn similarity(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    check_pair(queries, gallery)?;
    let cols = gallery.len();
    let mut data = vec![0.0f32; queries.len() * cols];
    if cols > 0 {
        data.par_chunks_mut(cols * QUERY_BLOCK)
            .enumerate()
            .for_each(|(b, block)| {
                let q0 = b * QUERY_BLOCK;
                for g0 in (0..cols).step_by(GALLERY_BLOCK) {
                    let g1 = (g0 + GALLERY_BLOCK).min(cols);
                    for (qi, out) in block.chunks_mut(cols).enumerate() {
                        let q = queries.row(q0 + qi);
                        for (g, slot) in out.iter_mut().enumerate().take(g1).skip(g0) {
                            *slot = dot(q, gallery.row(g));
                        }
                    }
                }
            });
    }
    SimilarityMatrix::new(queries.len(), cols, data)
}

/// Index of the first maximum of `scores`.
#[inline]
pub fn argmax_first(scores: &[f32]) -> Option<u32> {
    let mut best: Option<(u32, f32)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i as u32, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Top-1 gallery index per query row; ties go to the lowest index.
pub fn top1(sim: &SimilarityMatrix) -> Vec<u32> {
    (0..sim.rows)
        .into_par_iter()
        .map(|r| argmax_first(sim.row(r)).unwrap_or(u32::MAX))
        .collect()
}

/// Top-1 per query without materializing the similarity matrix. Each
/// worker keeps a running maximum over gallery tiles.
pub fn top1_streaming(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix) -> Result<Vec<u32>> {
    check_pair(queries, gallery)?;
    if gallery.is_empty() {
        return Ok(vec![u32::MAX; queries.len()]);
    }
    let n = queries.len();
    let blocks: Vec<Vec<u32>> = (0..n.div_ceil(QUERY_BLOCK))
        .into_par_iter()
        .map(|b| {
            let q0 = b * QUERY_BLOCK;
            let q1 = (q0 + QUERY_BLOCK).min(n);
            let mut best = vec![(0u32, f32::NEG_INFINITY); q1 - q0];
            let mut seen = vec![false; q1 - q0];
            for g0 in (0..gallery.len()).step_by(GALLERY_BLOCK) {
                let g1 = (g0 + GALLERY_BLOCK).min(gallery.len());
                for (k, q) in (q0..q1).enumerate() {
                    let qrow = queries.row(q);
                    for g in g0..g1 {
                        let s = dot(qrow, gallery.row(g));
                        if !seen[k] || s > best[k].1 {
                            best[k] = (g as u32, s);
                            seen[k] = true;
                        }
                    }
                }
            }
            best.into_iter().map(|(i, _)| i).collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Gallery indices of the `k` best scores of a row, by descending score
/// and ascending index on ties.
pub fn top_k(scores: &[f32], k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..scores.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}
