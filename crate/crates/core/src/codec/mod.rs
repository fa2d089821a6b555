//! Encoding sparse binary instances into Bloom embeddings and recovering
//! ranked item scores from probability outputs.
//!
//! An instance with active items `p` is embedded by setting bit
//! `H_j(p_i)` for every item and projection. A probability vector `v̂`
//! produced by a softmax over the `m` bits is mapped back to every one of the
//! `d` items either as a likelihood
//!
//! ```text
//! L(i) = Π_j v̂[H_j(i)]
//! ```
//!
//! or as the negative log-likelihood `−Σ_j ln v̂[H_j(i)]`. Both induce the same
//! ranking when all probabilities are positive. With `k = 1` the scheme is the
//! hashing trick.

pub mod io;

use bitvec::prelude::*;

use crate::error::{Error, Result};
use crate::hashing::Projector;

/// Default floor applied to probabilities before taking logarithms.
pub const DEFAULT_NLL_EPSILON: f64 = 1e-12;

/// A sparse binary vector of dimensionality `d`, stored as its sorted active
/// positions (0-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SparseInstance {
    d: usize,
    positions: Vec<u32>,
}

impl SparseInstance {
    /// Sorts `positions` and validates range and distinctness.
    pub fn new(d: usize, mut positions: Vec<u32>) -> Result<Self> {
        positions.sort_unstable();
        if let Some(&last) = positions.last() {
            if last as usize >= d {
                return Err(Error::OutOfRange {
                    what: "position",
                    value: last as usize,
                    low: 0,
                    high: d.saturating_sub(1),
                });
            }
        }
        if let Some(w) = positions.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate position {}", w[0] as u64 + 1)));
        }
        Ok(SparseInstance { d, positions })
    }

    pub fn empty(d: usize) -> Self {
        SparseInstance {
            d,
            positions: Vec::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.positions.binary_search(&(item as u32)).is_ok()
    }

    pub fn union(&self, other: &SparseInstance) -> Result<SparseInstance> {
        if self.d != other.d {
            return Err(Error::mismatch("instance dimensionality", self.d, other.d));
        }
        let mut positions: Vec<u32> = self.positions.iter().chain(&other.positions).copied().collect();
        positions.sort_unstable();
        positions.dedup();
        Ok(SparseInstance { d: self.d, positions })
    }
}

/// An `m`-bit embedding.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BloomVector {
    bits: BitVec<u64, Lsb0>,
}

impl BloomVector {
    pub fn zeros(m: usize) -> Self {
        BloomVector {
            bits: bitvec![u64, Lsb0; 0; m],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        BloomVector {
            bits: bits.iter().copied().collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, r: usize) -> bool {
        self.bits[r]
    }

    pub fn set(&mut self, r: usize) {
        self.bits.set(r, true);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    /// Positions of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn or(&self, other: &BloomVector) -> Result<BloomVector> {
        if self.m() != other.m() {
            return Err(Error::mismatch("embedding dimensionality", self.m(), other.m()));
        }
        Ok(BloomVector {
            bits: self.bits.clone() | other.bits.as_bitslice(),
        })
    }

    /// Whether every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BloomVector) -> bool {
        self.m() == other.m() && self.ones().all(|r| other.get(r))
    }
}

/// Output of a probability layer over `m` bits; every component finite and
/// in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(ProbabilityVector { probs })
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

impl From<&BloomVector> for ProbabilityVector {
    fn from(u: &BloomVector) -> Self {
        ProbabilityVector {
            probs: u.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Which direction of [`ItemScores`] is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreOrdering {
    /// Larger is better (likelihood).
    Descending,
    /// Smaller is better (negative log-likelihood).
    Ascending,
}

/// A score for each of the `d` original items.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemScores {
    scores: Vec<f64>,
    ordering: ScoreOrdering,
}

impl ItemScores {
    pub fn new(scores: Vec<f64>, ordering: ScoreOrdering) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("item scores".into()));
        }
        Ok(ItemScores { scores, ordering })
    }

    pub fn d(&self) -> usize {
        self.scores.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn ordering(&self) -> ScoreOrdering {
        self.ordering
    }

    /// Overwrites the scores of `items` with the worst possible value, so they
    /// rank after every other item.
    pub fn suppress(&mut self, items: &[u32]) {
        let worst = match self.ordering {
            ScoreOrdering::Descending => f64::MIN,
            ScoreOrdering::Ascending => f64::MAX,
        };
        for &i in items {
            self.scores[i as usize] = worst;
        }
    }
}

/// Embeds `instance`: bit `r` is set iff some active item projects onto `r`.
pub fn encode<P: Projector + ?Sized>(instance: &SparseInstance, h: &P) -> Result<BloomVector> {
    if instance.d() != h.item_count() {
        return Err(Error::mismatch("instance dimensionality", h.item_count(), instance.d()));
    }
    let mut u = BloomVector::zeros(h.embed_dim());
    for &p in instance.positions() {
        for j in 0..h.projections_per_item() {
            u.set(h.projection(p as usize, j));
        }
    }
    Ok(u)
}

fn check_probs<P: Projector + ?Sized>(probs: &ProbabilityVector, h: &P) -> Result<()> {
    if probs.m() != h.embed_dim() {
        return Err(Error::mismatch("probability vector length", h.embed_dim(), probs.m()));
    }
    Ok(())
}

/// Projections of `item` in ascending order, so that items hashed to the same
/// bits accumulate identical floating-point scores.
fn sorted_projections<'a, P: Projector + ?Sized>(h: &P, item: usize, buf: &'a mut Vec<usize>) -> &'a [usize] {
    buf.clear();
    buf.extend((0..h.projections_per_item()).map(|j| h.projection(item, j)));
    buf.sort_unstable();
    buf
}

/// Scores every item by the product of the probabilities at its projections.
///
/// Exact zeros are preserved: an item with any projected probability of zero
/// scores exactly zero. The product underflows for large `k` with small
/// probabilities; prefer [`decode_nll`] beyond roughly `k = 30`.
pub fn decode_likelihood<P: Projector + ?Sized>(probs: &ProbabilityVector, h: &P) -> Result<ItemScores> {
    check_probs(probs, h)?;
    let v = probs.as_slice();
    let mut bits = Vec::with_capacity(h.projections_per_item());
    let scores = (0..h.item_count())
        .map(|i| sorted_projections(h, i, &mut bits).iter().map(|&b| v[b]).product())
        .collect();
    Ok(ItemScores {
        scores,
        ordering: ScoreOrdering::Descending,
    })
}

/// Scores every item by `−Σ_j ln max(v̂[H_j(i)], epsilon)`.
pub fn decode_nll<P: Projector + ?Sized>(probs: &ProbabilityVector, h: &P, epsilon: f64) -> Result<ItemScores> {
    check_probs(probs, h)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let logs: Vec<f64> = probs.as_slice().iter().map(|&p| -p.max(epsilon).ln()).collect();
    let mut bits = Vec::with_capacity(h.projections_per_item());
    let scores = (0..h.item_count())
        .map(|i| sorted_projections(h, i, &mut bits).iter().map(|&b| logs[b]).sum())
        .collect();
    Ok(ItemScores {
        scores,
        ordering: ScoreOrdering::Ascending,
    })
}

/// Decoder selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecodeMode {
    Likelihood,
    Nll { epsilon: f64 },
}

impl DecodeMode {
    pub fn nll() -> Self {
        DecodeMode::Nll {
            epsilon: DEFAULT_NLL_EPSILON,
        }
    }

    pub fn decode<P: Projector + ?Sized>(&self, probs: &ProbabilityVector, h: &P) -> Result<ItemScores> {
        match *self {
            DecodeMode::Likelihood => decode_likelihood(probs, h),
            DecodeMode::Nll { epsilon } => decode_nll(probs, h, epsilon),
        }
    }
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeMode::Likelihood => f.write_str("likelihood"),
            DecodeMode::Nll { .. } => f.write_str("nll"),
        }
    }
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "likelihood" => Ok(DecodeMode::Likelihood),
            "nll" => Ok(DecodeMode::nll()),
            other => Err(Error::invalid(format!("unknown decode mode '{other}'"))),
        }
    }
}

/// The `top_n` best items, best first; ties go to the lower item index.
pub fn rank(scores: &ItemScores, top_n: usize) -> Result<Vec<usize>> {
    let d = scores.d();
    if top_n < 1 || top_n > d {
        return Err(Error::OutOfRange {
            what: "top_n",
            value: top_n,
            low: 1,
            high: d,
        });
    }
    let s = scores.as_slice();
    let better = |a: &usize, b: &usize| {
        let by_score = match scores.ordering {
            ScoreOrdering::Descending => s[*b].total_cmp(&s[*a]),
            ScoreOrdering::Ascending => s[*a].total_cmp(&s[*b]),
        };
        by_score.then(a.cmp(b))
    };
    let mut order: Vec<usize> = (0..d).collect();
    if top_n < d {
        order.select_nth_unstable_by(top_n - 1, better);
        order.truncate(top_n);
    }
    order.sort_unstable_by(better);
    Ok(order)
}

/// Rescales likelihood scores into a distribution over the `d` items.
pub fn renormalize(scores: &ItemScores) -> Result<Vec<f64>> {
    if scores.ordering != ScoreOrdering::Descending {
        return Err(Error::invalid("renormalisation needs likelihood scores"));
    }
    let total: f64 = scores.as_slice().iter().sum();
    if total <= 0.0 {
        return Err(Error::Empty("all item scores are zero".into()));
    }
    Ok(scores.as_slice().iter().map(|s| s / total).collect())
}
