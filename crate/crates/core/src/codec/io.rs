//! Line-oriented files for instances, embeddings, probabilities and scores.
//!
//! * Instance file: one instance per line, space-separated 1-based positions.
//!   An empty line is an empty instance.
//! * Embedding file: one line per vector, `m` characters each `0` or `1`.
//! * Probability file: one line per vector, `m` whitespace-separated reals.
//!   Lines in embedding-file form are accepted as 0/1 probabilities.
//! * Score dump: TSV with header `instance item score`, 1-based instance and
//!   item numbers, best item first within each instance.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::{BloomVector, ItemScores, ProbabilityVector, SparseInstance};

pub fn read_instances<R: BufRead>(r: R, d: usize) -> Result<Vec<SparseInstance>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let mut positions = Vec::new();
        for tok in line.split_whitespace() {
            let v: u64 = tok.parse().map_err(|e| Error::parse(n + 1, format!("{tok}: {e}")))?;
            if v == 0 || v > d as u64 {
                return Err(Error::parse(n + 1, format!("position {v} outside 1..={d}")));
            }
            positions.push((v - 1) as u32);
        }
        out.push(SparseInstance::new(d, positions).map_err(|e| Error::parse(n + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Writes instances as 1-based position lists.
pub fn write_instances<'a, W: Write>(mut w: W, instances: impl IntoIterator<Item = &'a SparseInstance>) -> Result<()> {
    for inst in instances {
        let line: Vec<String> = inst.positions().iter().map(|p| (p + 1).to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bloom_vectors<'a, W: Write>(mut w: W, vectors: impl IntoIterator<Item = &'a BloomVector>) -> Result<()> {
    let mut line = Vec::new();
    for u in vectors {
        line.clear();
        line.extend((0..u.m()).map(|r| if u.get(r) { b'1' } else { b'0' }));
        line.push(b'\n');
        w.write_all(&line)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_bits(line: &str, n: usize, m: usize) -> Result<BloomVector> {
    let line = line.trim();
    if line.len() != m {
        return Err(Error::parse(n, format!("expected {m} bits, found {}", line.len())));
    }
    let mut u = BloomVector::zeros(m);
    for (r, c) in line.bytes().enumerate() {
        match c {
            b'1' => u.set(r),
            b'0' => {}
            other => return Err(Error::parse(n, format!("unexpected character '{}'", other as char))),
        }
    }
    Ok(u)
}

pub fn read_bloom_vectors<R: BufRead>(r: R, m: usize) -> Result<Vec<BloomVector>> {
    r.lines()
        .enumerate()
        .map(|(n, line)| parse_bits(&line?, n + 1, m))
        .collect()
}

/// Reads probability vectors; blank lines are skipped.
pub fn read_probability_vectors<R: BufRead>(r: R, m: usize) -> Result<Vec<ProbabilityVector>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let bit_string =
            m > 1 && !trimmed.contains(char::is_whitespace) && trimmed.bytes().all(|c| c == b'0' || c == b'1');
        if bit_string {
            out.push(ProbabilityVector::from(&parse_bits(trimmed, n + 1, m)?));
            continue;
        }
        let probs = trimmed
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::parse(n + 1, format!("{t}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if probs.len() != m {
            return Err(Error::parse(
                n + 1,
                format!("expected {m} probabilities, found {}", probs.len()),
            ));
        }
        out.push(ProbabilityVector::new(probs).map_err(|e| Error::parse(n + 1, e.to_string()))?);
    }
    Ok(out)
}

pub const SCORE_HEADER: &str = "instance\titem\tscore";

/// Appends the score rows of one instance (`instance` is 0-based).
pub fn write_score_rows<W: Write>(mut w: W, instance: usize, ranked: &[usize], scores: &ItemScores) -> Result<()> {
    for &item in ranked {
        writeln!(w, "{}\t{}\t{}", instance + 1, item + 1, scores.as_slice()[item])?;
    }
    Ok(())
}
