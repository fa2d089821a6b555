//! Co-occurrence-based collision steering.
//!
//! Collisions are unavoidable once `m < d`. This module rewrites a
//! [`HashMatrix`] so that item pairs which co-occur more often than the mean
//! item frequency share one embedding bit:
//!
//! 1. count pairwise co-occurrences `C = XᵀX` over the instances;
//! 2. keep strict-lower-triangle pairs whose count exceeds the average item
//!    frequency (non-zeros of `X` divided by `d`);
//! 3. visit survivors by ascending count; for each pair `(a, b)` draw a bit
//!    `r` not already used by either row, draw one slot in each row and set
//!    both to `r`.
//!
//! Higher-count pairs are visited last, so their shared bit survives when two
//! pairs touch the same row. Rows stay duplicate-free because `r` is drawn
//! outside both rows.

use std::collections::HashMap;

use crate::codec::SparseInstance;
use crate::error::{Error, Result};
use crate::hashing::HashMatrix;
use crate::rng;

/// Symmetric pairwise co-occurrence counts in coordinate form.
///
/// Off-diagonal entries are stored once, for `row > col`, sorted by
/// `(row, col)`. The diagonal holds per-item frequencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CooccurrenceTable {
    d: usize,
    frequencies: Vec<u64>,
    rows: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<u64>,
}

impl CooccurrenceTable {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    /// `(values, rows, cols)` of the strict lower triangle.
    pub fn coordinates(&self) -> (&[u64], &[u32], &[u32]) {
        (&self.vals, &self.rows, &self.cols)
    }

    /// Number of stored (non-zero) off-diagonal pairs.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `C[a][b]` for any `a`, `b` (symmetric).
    pub fn get(&self, a: usize, b: usize) -> u64 {
        if a == b {
            return self.frequencies[a];
        }
        let key = if a > b {
            (a as u32, b as u32)
        } else {
            (b as u32, a as u32)
        };
        let mut lo = 0;
        let mut hi = self.vals.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match (self.rows[mid], self.cols[mid]).cmp(&key) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return self.vals[mid],
            }
        }
        0
    }

    /// Mean item frequency: non-zeros of the instance matrix divided by `d`.
    pub fn average_frequency(&self) -> f64 {
        self.frequencies.iter().sum::<u64>() as f64 / self.d as f64
    }

    /// Adds the counts of another table over the same items.
    pub fn merge(&self, other: &CooccurrenceTable) -> Result<CooccurrenceTable> {
        if self.d != other.d {
            return Err(Error::mismatch("co-occurrence table size", self.d, other.d));
        }
        let mut acc = PairCounter::default();
        for t in [self, other] {
            for i in 0..t.vals.len() {
                *acc.0.entry(pair_key(t.rows[i], t.cols[i])).or_default() += t.vals[i];
            }
        }
        let frequencies = self
            .frequencies
            .iter()
            .zip(&other.frequencies)
            .map(|(a, b)| a + b)
            .collect();
        Ok(acc.into_table(self.d, frequencies))
    }
}

#[derive(Default)]
struct PairCounter(HashMap<u64, u64>);

#[inline]
fn pair_key(row: u32, col: u32) -> u64 {
    ((row as u64) << 32) | col as u64
}

impl PairCounter {
    fn into_table(self, d: usize, frequencies: Vec<u64>) -> CooccurrenceTable {
        let mut entries: Vec<(u64, u64)> = self.0.into_iter().filter(|&(_, v)| v > 0).collect();
        entries.sort_unstable_by_key(|&(k, _)| k);
        let mut table = CooccurrenceTable {
            d,
            frequencies,
            rows: Vec::with_capacity(entries.len()),
            cols: Vec::with_capacity(entries.len()),
            vals: Vec::with_capacity(entries.len()),
        };
        for (key, val) in entries {
            table.rows.push((key >> 32) as u32);
            table.cols.push(key as u32);
            table.vals.push(val);
        }
        table
    }
}

/// Counts `XᵀX` over `instances`. An empty list gives an empty table over
/// zero items.
pub fn count_cooccurrences(instances: &[SparseInstance]) -> Result<CooccurrenceTable> {
    let d = instances.first().map_or(0, |i| i.d());
    let mut frequencies = vec![0u64; d];
    let mut counter = PairCounter::default();
    for inst in instances {
        if inst.d() != d {
            return Err(Error::mismatch("instance dimensionality", d, inst.d()));
        }
        let p = inst.positions();
        for (i, &row) in p.iter().enumerate() {
            frequencies[row as usize] += 1;
            // positions are sorted, so every earlier entry is a smaller column
            for &col in &p[..i] {
                *counter.0.entry(pair_key(row, col)).or_default() += 1;
            }
        }
    }
    Ok(counter.into_table(d, frequencies))
}

/// A surviving pair, `a > b` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CooccurringPair {
    pub a: u32,
    pub b: u32,
    pub count: u64,
}

/// Pairs whose count is strictly above the average item frequency, ordered
/// by ascending count and then `(a, b)`.
pub fn threshold_and_order(table: &CooccurrenceTable) -> Vec<CooccurringPair> {
    if table.d == 0 {
        return Vec::new();
    }
    let threshold = table.average_frequency();
    let mut pairs: Vec<CooccurringPair> = (0..table.vals.len())
        .filter(|&i| table.vals[i] as f64 > threshold)
        .map(|i| CooccurringPair {
            a: table.rows[i],
            b: table.cols[i],
            count: table.vals[i],
        })
        .collect();
    pairs.sort_by_key(|p| (p.count, p.a, p.b));
    pairs
}

/// Rewrites `h` so each listed pair shares one bit, processing pairs in the
/// given order. Pairs whose rows already cover all `m` bits are skipped with
/// a warning.
pub fn rebuild_hash_matrix(h: &HashMatrix, pairs: &[CooccurringPair], seed: u64) -> Result<HashMatrix> {
    let mut out = h.clone();
    let (d, m, k) = (h.d(), h.m(), h.k());
    let mut r = rng::seeded(seed);
    let mut used: Vec<u32> = Vec::with_capacity(2 * k);
    let mut free: Vec<u32> = Vec::new();
    let mut skipped = 0usize;
    for pair in pairs {
        let (a, b) = (pair.a as usize, pair.b as usize);
        for item in [a, b] {
            if item >= d {
                return Err(Error::OutOfRange {
                    what: "pair item",
                    value: item,
                    low: 0,
                    high: d - 1,
                });
            }
        }
        used.clear();
        used.extend_from_slice(out.row(a));
        used.extend_from_slice(out.row(b));
        used.sort_unstable();
        used.dedup();
        if used.len() >= m {
            skipped += 1;
            log::warn!("no free bit for pair ({}, {}); skipped", a + 1, b + 1);
            continue;
        }
        let bit = if used.len() * 2 <= m {
            loop {
                let cand = rng::below(&mut r, m as u32);
                if used.binary_search(&cand).is_err() {
                    break cand;
                }
            }
        } else {
            free.clear();
            free.extend((0..m as u32).filter(|c| used.binary_search(c).is_err()));
            free[rng::below(&mut r, free.len() as u32) as usize]
        };
        let ja = rng::below(&mut r, k as u32) as usize;
        let jb = rng::below(&mut r, k as u32) as usize;
        out.row_mut(a)[ja] = bit;
        out.row_mut(b)[jb] = bit;
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} pairs skipped", pairs.len());
    }
    Ok(out)
}

/// Summary of how much pairwise co-occurrence a dataset carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CooccurrenceStats {
    /// Percentage of all `d(d−1)/2` pairs with a non-zero count.
    pub percent_cooccurring_pairs: f64,
    /// Mean over co-occurring pairs of `count / n`.
    pub mean_ratio_rho: f64,
}

pub fn cooccurrence_stats(table: &CooccurrenceTable, n: usize) -> Result<CooccurrenceStats> {
    if table.d < 2 {
        return Err(Error::invalid("co-occurrence statistics need at least two items"));
    }
    if n < 1 {
        return Err(Error::invalid("instance count must be at least 1"));
    }
    let total_pairs = table.d as f64 * (table.d as f64 - 1.0) / 2.0;
    let nnz = table.nnz();
    let rho = if nnz == 0 {
        0.0
    } else {
        table.vals.iter().map(|&v| v as f64 / n as f64).sum::<f64>() / nnz as f64
    };
    Ok(CooccurrenceStats {
        percent_cooccurring_pairs: 100.0 * nnz as f64 / total_pairs,
        mean_ratio_rho: rho,
    })
}

/// Runs the whole procedure: count, threshold, rebuild.
pub fn steer_collisions(instances: &[SparseInstance], h: &HashMatrix, seed: u64) -> Result<HashMatrix> {
    let table = count_cooccurrences(instances)?;
    if table.d() != h.d() && !instances.is_empty() {
        return Err(Error::mismatch("instance dimensionality", h.d(), table.d()));
    }
    rebuild_hash_matrix(h, &threshold_and_order(&table), seed)
}
