use crate::error::{Error, Result};
use crate::rng::mix64;

use super::{check_item, Projector};

/// On-the-fly enhanced double hashing.
///
/// For item `p` and projection `j` in `0..k`:
///
/// ```text
/// h1(p) = mix64(seed ^ mix64(p))
/// h2(p) = mix64(h1(p) ^ 0xD6E8_FEB8_6659_FD93) | 1
/// H_j(p) = (h1 + j·h2 + (j³ − j)/6) mod m
/// ```
///
/// evaluated exactly in 128-bit arithmetic. The cubic term is the closed form
/// of the incremental update `x += y; y += i`. `h2` is forced odd, which makes
/// it coprime to power-of-two `m`; for other `m` the step may share a factor
/// with `m` and projections of a single item can repeat.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DoubleHashing {
    d: usize,
    m: usize,
    k: usize,
    seed: u64,
}

const H2_SALT: u64 = 0xD6E8_FEB8_6659_FD93;

impl DoubleHashing {
    pub fn new(d: usize, m: usize, k: usize, seed: u64) -> Result<Self> {
        if d < 1 || m < 1 || k < 1 {
            return Err(Error::invalid("d, m and k must all be at least 1"));
        }
        if k > m {
            return Err(Error::invalid(format!("k={k} exceeds m={m}")));
        }
        Ok(DoubleHashing { d, m, k, seed })
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

    pub fn project(&self, item: usize, j: usize) -> Result<usize> {
        check_item(item, j, self.d, self.k)?;
        Ok(self.projection(item, j))
    }

    fn base_hashes(&self, item: usize) -> (u64, u64) {
        let h1 = mix64(self.seed ^ mix64(item as u64));
        let h2 = mix64(h1 ^ H2_SALT) | 1;
        (h1, h2)
    }
}

impl Projector for DoubleHashing {
    fn item_count(&self) -> usize {
        self.d
    }

    fn embed_dim(&self) -> usize {
        self.m
    }

    fn projections_per_item(&self) -> usize {
        self.k
    }

    fn projection(&self, item: usize, j: usize) -> usize {
        let (h1, h2) = self.base_hashes(item);
        let m = self.m as u128;
        let j = j as u128;
        let cubic = (j * j * j - j) / 6;
        ((h1 as u128 % m + (j * (h2 as u128 % m)) % m + cubic % m) % m) as usize
    }
}
