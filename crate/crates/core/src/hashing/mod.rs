//! Projection families mapping each of `d` items onto `k` of `m` embedding bits.
//!
//! Two families are provided:
//!
//! * [`HashMatrix`]: a pre-computed `d × k` table. Each row holds `k` distinct
//!   indices drawn uniformly without replacement from the `m` bits. This is the
//!   canonical family: it guarantees an exactly uniform, collision-free row and
//!   can be rewritten by co-occurrence steering (see [`crate::cbe`]).
//! * [`DoubleHashing`]: evaluates enhanced double hashing on demand with no
//!   stored table. Projections of one item may coincide.
//!
//! Positions are 0-based throughout the Rust API. Serialized files and the
//! command line use 1-based indices; conversion happens in [`io`].

mod double;
pub mod io;

pub use double::DoubleHashing;

use crate::error::{Error, Result};
use crate::rng;

/// Anything that maps an item to its `k` embedding positions.
pub trait Projector {
    /// Original dimensionality `d`.
    fn item_count(&self) -> usize;
    /// Embedding dimensionality `m`.
    fn embed_dim(&self) -> usize;
    /// Projections per item `k`.
    fn projections_per_item(&self) -> usize;
    /// Position of the `j`-th projection of `item`, in `0..m`.
    ///
    /// Callers guarantee `item < d` and `j < k`.
    fn projection(&self, item: usize, j: usize) -> usize;
}

/// Pre-computed `d × k` projection table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashMatrix {
    d: usize,
    m: usize,
    k: usize,
    seed: u64,
    // row-major, 0-based
    indices: Vec<u32>,
}

fn check_dims(d: usize, m: usize, k: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::invalid("item count d must be at least 1"));
    }
    if m < 1 {
        return Err(Error::invalid("embedding dimension m must be at least 1"));
    }
    if k < 1 {
        return Err(Error::invalid("projection count k must be at least 1"));
    }
    if k > m {
        return Err(Error::invalid(format!(
            "cannot draw k={k} distinct indices from m={m} bits"
        )));
    }
    if m > u32::MAX as usize || d > u32::MAX as usize {
        return Err(Error::invalid("dimensions must fit in 32 bits"));
    }
    Ok(())
}

impl HashMatrix {
    /// Draws a fresh matrix: every row is a partial Fisher-Yates draw of `k`
    /// indices from `0..m`.
    ///
    /// The result is a pure function of `(d, m, k, seed)`.
    pub fn build(d: usize, m: usize, k: usize, seed: u64) -> Result<Self> {
        check_dims(d, m, k)?;
        let mut rng = rng::seeded(seed);
        let mut pool: Vec<u32> = (0..m as u32).collect();
        let mut swaps = Vec::with_capacity(k);
        let mut indices = Vec::with_capacity(d * k);
        for _ in 0..d {
            for i in 0..k {
                let j = i + rng::below(&mut rng, (m - i) as u32) as usize;
                pool.swap(i, j);
                swaps.push(j);
            }
            indices.extend_from_slice(&pool[..k]);
            // undo so the pool is the identity again; keeps each row O(k)
            for (i, &j) in swaps.iter().enumerate().rev() {
                pool.swap(i, j);
            }
            swaps.clear();
        }
        Ok(HashMatrix { d, m, k, seed, indices })
    }

    /// Builds a matrix from explicit 0-based rows, validating every invariant.
    pub fn from_rows<R: AsRef<[u32]>>(m: usize, seed: u64, rows: &[R]) -> Result<Self> {
        let d = rows.len();
        let k = rows.first().map_or(0, |r| r.as_ref().len());
        check_dims(d, m, k)?;
        let mut indices = Vec::with_capacity(d * k);
        for (item, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != k {
                return Err(Error::mismatch("row length", k, row.len()));
            }
            validate_row(item, row, m)?;
            indices.extend_from_slice(row);
        }
        Ok(HashMatrix { d, m, k, seed, indices })
    }

    /// The `k = 1`, `m = d` matrix mapping every item onto its own bit.
    pub fn identity(d: usize) -> Result<Self> {
        check_dims(d, d, 1)?;
        Ok(HashMatrix {
            d,
            m: d,
            k: 1,
            seed: 0,
            indices: (0..d as u32).collect(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The `k` projections of `item`.
    ///
    /// # Panics
    ///
    /// If `item >= d`.
    pub fn row(&self, item: usize) -> &[u32] {
        &self.indices[item * self.k..(item + 1) * self.k]
    }

    pub(crate) fn row_mut(&mut self, item: usize) -> &mut [u32] {
        &mut self.indices[item * self.k..(item + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.indices.chunks_exact(self.k)
    }

    /// Range-checked lookup of the `j`-th projection of `item`.
    pub fn project(&self, item: usize, j: usize) -> Result<usize> {
        check_item(item, j, self.d, self.k)?;
        Ok(self.row(item)[j] as usize)
    }
}

impl Projector for HashMatrix {
    fn item_count(&self) -> usize {
        self.d
    }

    fn embed_dim(&self) -> usize {
        self.m
    }

    fn projections_per_item(&self) -> usize {
        self.k
    }

    #[inline]
    fn projection(&self, item: usize, j: usize) -> usize {
        self.indices[item * self.k + j] as usize
    }
}

pub(crate) fn check_item(item: usize, j: usize, d: usize, k: usize) -> Result<()> {
    if item >= d {
        return Err(Error::OutOfRange {
            what: "item",
            value: item,
            low: 0,
            high: d - 1,
        });
    }
    if j >= k {
        return Err(Error::OutOfRange {
            what: "projection index",
            value: j,
            low: 0,
            high: k - 1,
        });
    }
    Ok(())
}

pub(crate) fn validate_row(item: usize, row: &[u32], m: usize) -> Result<()> {
    for (j, &idx) in row.iter().enumerate() {
        if idx as usize >= m {
            return Err(Error::Format(format!(
                "row {} holds index {} outside 1..={m}",
                item + 1,
                idx as u64 + 1
            )));
        }
        if row[..j].contains(&idx) {
            return Err(Error::Format(format!(
                "row {} repeats index {}",
                item + 1,
                idx as u64 + 1
            )));
        }
    }
    Ok(())
}

/// Which projection family to construct.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashMode {
    Matrix,
    DoubleHashing,
}

impl std::str::FromStr for HashMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix" | "precomputed" | "precomputed-matrix" => Ok(HashMode::Matrix),
            "double" | "double-hashing" => Ok(HashMode::DoubleHashing),
            other => Err(Error::invalid(format!("unknown hash mode '{other}'"))),
        }
    }
}

/// Parameters of a projection family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashFamilySpec {
    pub mode: HashMode,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub seed: u64,
}

impl HashFamilySpec {
    pub fn build(&self) -> Result<HashFamily> {
        match self.mode {
            HashMode::Matrix => HashMatrix::build(self.d, self.m, self.k, self.seed).map(HashFamily::Matrix),
            HashMode::DoubleHashing => {
                DoubleHashing::new(self.d, self.m, self.k, self.seed).map(HashFamily::DoubleHashing)
            }
        }
    }
}

/// A constructed projection family of either mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HashFamily {
    Matrix(HashMatrix),
    DoubleHashing(DoubleHashing),
}

impl HashFamily {
    /// Range-checked projection lookup.
    pub fn project(&self, item: usize, j: usize) -> Result<usize> {
        match self {
            HashFamily::Matrix(h) => h.project(item, j),
            HashFamily::DoubleHashing(h) => h.project(item, j),
        }
    }

    /// Evaluates every projection into a table. For double hashing the rows
    /// may contain repeats, so they are not validated.
    pub fn to_matrix(&self) -> HashMatrix {
        match self {
            HashFamily::Matrix(h) => h.clone(),
            HashFamily::DoubleHashing(h) => {
                let mut indices = Vec::with_capacity(h.d() * h.k());
                for item in 0..h.d() {
                    for j in 0..h.k() {
                        indices.push(h.projection(item, j) as u32);
                    }
                }
                HashMatrix {
                    d: h.d(),
                    m: h.m(),
                    k: h.k(),
                    seed: h.seed(),
                    indices,
                }
            }
        }
    }
}

impl Projector for HashFamily {
    fn item_count(&self) -> usize {
        match self {
            HashFamily::Matrix(h) => h.item_count(),
            HashFamily::DoubleHashing(h) => h.item_count(),
        }
    }

    fn embed_dim(&self) -> usize {
        match self {
            HashFamily::Matrix(h) => h.embed_dim(),
            HashFamily::DoubleHashing(h) => h.embed_dim(),
        }
    }

    fn projections_per_item(&self) -> usize {
        match self {
            HashFamily::Matrix(h) => h.projections_per_item(),
            HashFamily::DoubleHashing(h) => h.projections_per_item(),
        }
    }

    fn projection(&self, item: usize, j: usize) -> usize {
        match self {
            HashFamily::Matrix(h) => h.projection(item, j),
            HashFamily::DoubleHashing(h) => h.projection(item, j),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// Pearson chi-squared goodness-of-fit against the uniform distribution;
    /// returns `(statistic, critical value at significance alpha)`.
    pub(crate) fn chi_squared_uniform(counts: &[u64], alpha: f64) -> (f64, f64) {
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / counts.len() as f64;
        let stat = counts
            .iter()
            .map(|&c| {
                let diff = c as f64 - expected;
                diff * diff / expected
            })
            .sum();
        let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
        (stat, dist.inverse_cdf(1.0 - alpha))
    }

    #[test]
    fn k_equal_m_forces_every_index() {
        let h = HashMatrix::build(6, 4, 4, 11).unwrap();
        for row in h.rows() {
            let mut r = row.to_vec();
            r.sort_unstable();
            assert_eq!(r, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = HashMatrix::build(1000, 100, 1, 7).unwrap();
        let b = HashMatrix::build(1000, 100, 1, 7).unwrap();
        assert_eq!(a, b);
        let c = HashMatrix::build(1000, 100, 1, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rows_have_distinct_in_range_indices() {
        let h = HashMatrix::build(500, 20, 7, 1).unwrap();
        for (item, row) in h.rows().enumerate() {
            validate_row(item, row, 20).unwrap();
        }
    }

    #[test]
    fn matrix_indices_are_uniform() {
        let h = HashMatrix::build(10_000, 1000, 4, 3).unwrap();
        let mut counts = vec![0u64; 1000];
        for row in h.rows() {
            for &i in row {
                counts[i as usize] += 1;
            }
        }
        let (stat, critical) = chi_squared_uniform(&counts, 0.01);
        assert!(stat < critical, "chi2 {stat} >= {critical}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(HashMatrix::build(10, 4, 5, 0).is_err());
        assert!(HashMatrix::build(10, 0, 0, 0).is_err());
        assert!(HashMatrix::build(0, 4, 2, 0).is_err());
        assert!(HashMatrix::build(10, 4, 0, 0).is_err());
    }

    #[test]
    fn project_is_table_lookup() {
        // item 5 (1-based) has row [2, 7] (1-based)
        let rows: Vec<Vec<u32>> = vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![0, 2], vec![1, 6], vec![3, 7]];
        let h = HashMatrix::from_rows(8, 0, &rows).unwrap();
        assert_eq!(h.project(4, 1).unwrap() + 1, 7);
        assert!(h.project(6, 0).is_err());
        assert!(h.project(0, 2).is_err());
    }

    #[test]
    fn from_rows_validates() {
        assert!(HashMatrix::from_rows(4, 0, &[vec![0u32, 0]]).is_err());
        assert!(HashMatrix::from_rows(4, 0, &[vec![0u32, 4]]).is_err());
        assert!(HashMatrix::from_rows(4, 0, &[vec![0u32, 1], vec![2]]).is_err());
    }

    #[test]
    fn family_spec_builds_both_modes() {
        let spec = HashFamilySpec {
            mode: HashMode::Matrix,
            d: 50,
            m: 10,
            k: 3,
            seed: 4,
        };
        let fam = spec.build().unwrap();
        assert_eq!(fam.to_matrix(), HashMatrix::build(50, 10, 3, 4).unwrap());

        let dh = HashFamilySpec {
            mode: HashMode::DoubleHashing,
            ..spec
        }
        .build()
        .unwrap();
        let table = dh.to_matrix();
        for item in 0..50 {
            for j in 0..3 {
                assert_eq!(dh.project(item, j).unwrap(), table.row(item)[j] as usize);
            }
        }
    }
}
