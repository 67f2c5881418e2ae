//! Regional memory propagation.
//!
//! Per query cell, affinity against the memory bank uses L2 similarity
//! (negative squared Euclidean distance) as the softmax logit; only the
//! top-k matches are retained and the softmax is taken over exactly those
//! k entries. Retrieved values are the affinity-weighted average of the
//! memory values.
//!
//! # Numerical contract
//!
//! Results are reproducible to the bit, independent of thread count, so
//! that an optimized regional path can be checked for exact equality
//! against a plain dense implementation:
//!
//! - similarities accumulate in `f32` over four interleaved lanes
//!   (`lane = dim % 4`), combined as `(s0 + s1) + (s2 + s3)`;
//! - the top-k set is defined by the total order "higher similarity first,
//!   lower memory index first" (`f32::total_cmp` on the similarity);
//! - softmax weights are computed in `f64` as `exp(sim - max_sim)` with
//!   the subtraction performed in `f64`, normalized by a sum taken in
//!   ascending memory-index order;
//! - value retrieval accumulates `weight * value` in `f64`, again in
//!   ascending memory-index order.

use num_traits::Float;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::GridRect;
use crate::memory::MemoryBank;

/// Per-frame grid of key vectors (and optional per-cell value vectors) at
/// a fixed stride.
#[derive(Clone, Debug)]
pub struct FeatureGrid {
    pub h: usize,
    pub w: usize,
    /// Input pixels per cell.
    pub stride: usize,
    pub key_dim: usize,
    /// `h * w * key_dim`, row-major cells.
    pub keys: Vec<f32>,
    pub value_dim: usize,
    /// `h * w * value_dim` when present, else empty.
    pub values: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(h: usize, w: usize, stride: usize, key_dim: usize) -> Self {
        assert!(h >= 1 && w >= 1 && key_dim >= 1);
        FeatureGrid {
            h,
            w,
            stride,
            key_dim,
            keys: vec![0.0; h * w * key_dim],
            value_dim: 0,
            values: Vec::new(),
        }
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn key(&self, row: usize, col: usize) -> &[f32] {
        let cell = row * self.w + col;
        &self.keys[cell * self.key_dim..(cell + 1) * self.key_dim]
    }

    pub fn key_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let cell = row * self.w + col;
        &mut self.keys[cell * self.key_dim..(cell + 1) * self.key_dim]
    }
}

/// Retained matches for one query cell: `(memory_index, weight)` pairs in
/// ascending index order, weights summing to 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffinityRow {
    pub entries: Vec<(u32, f64)>,
}

impl AffinityRow {
    pub fn weight_sum(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }
}

/// Query cropped to an object ROI: key rows in row-major ROI order plus
/// the absolute grid coordinates each row came from.
#[derive(Clone, Debug)]
pub struct ObjectQuery {
    pub rect: GridRect,
    pub key_dim: usize,
    pub keys: Vec<f32>,
    pub cells: Vec<(u16, u16)>,
}

impl ObjectQuery {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn key_row(&self, i: usize) -> &[f32] {
        &self.keys[i * self.key_dim..(i + 1) * self.key_dim]
    }
}

/// L2 similarity: negative squared Euclidean distance. Zero (maximal) for
/// identical vectors, increasingly negative with distance.
pub fn l2_similarity<T: Float>(q: &[T], k: &[T]) -> Result<T> {
    if q.len() != k.len() {
        return Err(Error::DimMismatch {
            left: q.len(),
            right: k.len(),
        });
    }
    Ok(l2_similarity_unchecked(q, k))
}

/// Hot-path similarity; lengths must already match. Four-lane accumulation
/// per the module's numerical contract.
#[inline]
pub(crate) fn l2_similarity_unchecked<T: Float>(q: &[T], k: &[T]) -> T {
    debug_assert_eq!(q.len(), k.len());
    let mut acc = [T::zero(); 4];
    let q_chunks = q.chunks_exact(4);
    let k_chunks = k.chunks_exact(4);
    let q_rem = q_chunks.remainder();
    let k_rem = k_chunks.remainder();
    for (qs, ks) in q_chunks.zip(k_chunks) {
        for lane in 0..4 {
            let d = qs[lane] - ks[lane];
            acc[lane] = acc[lane] + d * d;
        }
    }
    for (lane, (&a, &b)) in q_rem.iter().zip(k_rem).enumerate() {
        let d = a - b;
        acc[lane] = acc[lane] + d * d;
    }
    -((acc[0] + acc[1]) + (acc[2] + acc[3]))
}

/// Extract the key vectors inside `roi`, keeping the map back to absolute
/// cell coordinates.
pub fn crop_query(grid: &FeatureGrid, roi: GridRect) -> Result<ObjectQuery> {
    if !roi.fits(grid.h, grid.w) {
        return Err(Error::RoiOutOfBounds {
            roi,
            h: grid.h,
            w: grid.w,
        });
    }
    let mut keys = Vec::with_capacity(roi.cells() * grid.key_dim);
    let mut cells = Vec::with_capacity(roi.cells());
    for (row, col) in roi.iter_cells() {
        keys.extend_from_slice(grid.key(row, col));
        cells.push((row as u16, col as u16));
    }
    Ok(ObjectQuery {
        rect: roi,
        key_dim: grid.key_dim,
        keys,
        cells,
    })
}

struct RowScratch {
    sims: Vec<f32>,
    kept: Vec<(f32, u32)>,
}

/// Priority order for retention: higher similarity first, then lower
/// memory index. A strict total order since indices are distinct.
#[inline]
fn outranks(a: &(f32, u32), b: &(f32, u32)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.1 < b.1,
    }
}

/// Top-k retained entries for one query key: similarity to every bank key,
/// the k best kept (ties at the cutoff go to the lower memory index),
/// softmax over exactly those k.
fn row_topk(query_key: &[f32], bank: &MemoryBank, k: usize, scratch: &mut RowScratch) -> AffinityRow {
    let n = bank.len();
    let sims = &mut scratch.sims;
    sims.clear();
    sims.reserve(n);
    let key_dim = bank.key_dim();
    let keys = bank.keys_flat();
    for key in keys.chunks_exact(key_dim) {
        sims.push(l2_similarity_unchecked(query_key, key));
    }

    // Selection: a scan against the current cutoff, keeping `kept` sorted
    // best-first. Most candidates fail the cutoff comparison immediately.
    let kept = &mut scratch.kept;
    kept.clear();
    if k >= n {
        kept.extend(sims.iter().enumerate().map(|(j, &s)| (s, j as u32)));
    } else {
        for (j, &s) in sims.iter().enumerate() {
            let cand = (s, j as u32);
            if kept.len() == k {
                if !outranks(&cand, kept.last().unwrap()) {
                    continue;
                }
                kept.pop();
            }
            let pos = kept.partition_point(|e| outranks(e, &cand));
            kept.insert(pos, cand);
        }
    }
    let retained = &mut *kept;
    retained.sort_unstable_by_key(|&(_, j)| j);

    let max_sim = retained
        .iter()
        .map(|&(s, _)| s)
        .fold(f32::NEG_INFINITY, f32::max);
    let mut exps = Vec::with_capacity(retained.len());
    let mut total = 0.0f64;
    for &(s, _) in retained.iter() {
        let e = (f64::from(s) - f64::from(max_sim)).exp();
        exps.push(e);
        total += e;
    }
    AffinityRow {
        entries: retained
            .iter()
            .zip(&exps)
            .map(|(&(_, j), &e)| (j, e / total))
            .collect(),
    }
}

fn validate_match_inputs(query: &ObjectQuery, bank: &MemoryBank, k: usize) -> Result<()> {
    assert!(k >= 1, "top-k needs k >= 1");
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    if query.key_dim != bank.key_dim() {
        return Err(Error::DimMismatch {
            left: query.key_dim,
            right: bank.key_dim(),
        });
    }
    Ok(())
}

/// Affinity rows for every query cell. Rows are independent and computed
/// on the rayon pool; output order follows the query's row-major order.
pub fn affinity_topk(query: &ObjectQuery, bank: &MemoryBank, k: usize) -> Result<Vec<AffinityRow>> {
    validate_match_inputs(query, bank, k)?;
    let rows = (0..query.len())
        .into_par_iter()
        .map_init(
            || RowScratch { sims: Vec::new(), kept: Vec::new() },
            |scratch, i| row_topk(query.key_row(i), bank, k, scratch),
        )
        .collect();
    Ok(rows)
}

/// Retrieve values for precomputed affinity rows: per row, the weighted
/// average of the referenced memory values. Output is row-major,
/// `bank.value_dim()` scalars per row.
pub fn propagate(rows: &[AffinityRow], bank: &MemoryBank) -> Result<Vec<f64>> {
    let dim = bank.value_dim();
    for row in rows {
        for &(j, _) in &row.entries {
            if j as usize >= bank.len() {
                return Err(Error::IndexOutOfRange {
                    index: j as usize,
                    len: bank.len(),
                });
            }
        }
    }
    let mut out = vec![0.0f64; rows.len() * dim];
    out.par_chunks_mut(dim).zip(rows.par_iter()).for_each(|(cell, row)| {
        accumulate_values(row, bank, cell);
    });
    Ok(out)
}

#[inline]
fn accumulate_values(row: &AffinityRow, bank: &MemoryBank, out: &mut [f64]) {
    for &(j, weight) in &row.entries {
        for (o, &v) in out.iter_mut().zip(bank.value(j as usize)) {
            *o += weight * f64::from(v);
        }
    }
}

/// Fused affinity + retrieval: exactly `propagate(&affinity_topk(...), ...)`
/// without materializing the rows. This is the pipeline's hot path.
pub fn read_memory(query: &ObjectQuery, bank: &MemoryBank, k: usize) -> Result<Vec<f64>> {
    validate_match_inputs(query, bank, k)?;
    let dim = bank.value_dim();
    let mut out = vec![0.0f64; query.len() * dim];
    out.par_chunks_mut(dim)
        .enumerate()
        .for_each_init(
            || RowScratch { sims: Vec::new(), kept: Vec::new() },
            |scratch, (i, cell)| {
                let row = row_topk(query.key_row(i), bank, k, scratch);
                accumulate_values(&row, bank, cell);
            },
        );
    Ok(out)
}
