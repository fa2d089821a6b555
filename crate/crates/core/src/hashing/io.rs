//! Hash-matrix files.
//!
//! Text layout (all integers decimal, indices 1-based):
//!
//! ```text
//! d m k seed
//! h_1_1 h_1_2 ... h_1_k
//! ...
//! h_d_1 h_d_2 ... h_d_k
//! ```
//!
//! Binary layout (little-endian):
//!
//! | offset | size  | content                          |
//! |--------|-------|----------------------------------|
//! | 0      | 4     | magic `BEHM`                     |
//! | 4      | 4     | `d` as u32                       |
//! | 8      | 4     | `m` as u32                       |
//! | 12     | 4     | `k` as u32                       |
//! | 16     | 8     | `seed` as u64                    |
//! | 24     | 4·d·k | row-major indices, u32, 1-based  |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{validate_row, HashMatrix};

pub const BINARY_MAGIC: &[u8; 4] = b"BEHM";
const BINARY_HEADER_LEN: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashFileFormat {
    Text,
    Binary,
}

impl std::str::FromStr for HashFileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(HashFileFormat::Text),
            "binary" | "bin" => Ok(HashFileFormat::Binary),
            other => Err(Error::invalid(format!("unknown hash file format '{other}'"))),
        }
    }
}

impl HashMatrix {
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {} {}", self.d, self.m, self.k, self.seed)?;
        let mut line = String::new();
        for row in self.rows() {
            line.clear();
            for (j, &idx) in row.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&(idx as u64 + 1).to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (d, m, k, seed) = loop {
            let Some((n, line)) = lines.next() else {
                return Err(Error::Format("missing header line".into()));
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(n + 1, "header must be `d m k seed`"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|e| Error::parse(n + 1, format!("{s}: {e}")));
            break (
                num(fields[0])? as usize,
                num(fields[1])? as usize,
                num(fields[2])? as usize,
                num(fields[3])?,
            );
        };
        super::check_dims(d, m, k).map_err(|e| Error::Format(format!("bad header: {e}")))?;

        let mut indices = Vec::with_capacity(d.saturating_mul(k).min(1 << 26));
        let mut rows = 0usize;
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if rows == d {
                return Err(Error::Format(format!("more than d={d} rows (line {})", n + 1)));
            }
            let start = indices.len();
            for tok in line.split_whitespace() {
                let v: u64 = tok.parse().map_err(|e| Error::parse(n + 1, format!("{tok}: {e}")))?;
                if v == 0 || v > m as u64 {
                    return Err(Error::Format(format!("line {}: index {v} outside 1..={m}", n + 1)));
                }
                indices.push((v - 1) as u32);
            }
            let got = indices.len() - start;
            if got != k {
                return Err(Error::Format(format!(
                    "line {}: expected {k} indices, found {got}",
                    n + 1
                )));
            }
            validate_row(rows, &indices[start..], m)?;
            rows += 1;
        }
        if rows != d {
            return Err(Error::Format(format!("header declares d={d} rows, found {rows}")));
        }
        Ok(HashMatrix { d, m, k, seed, indices })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.m as u32).to_le_bytes())?;
        w.write_all(&(self.k as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for &idx in &self.indices {
            w.write_all(&(idx + 1).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; BINARY_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("truncated binary header".into()))?;
        if &header[..4] != BINARY_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap()) as usize;
        let (d, m, k) = (word(4), word(8), word(12));
        let seed = u64::from_le_bytes(header[16..24].try_into().unwrap());
        super::check_dims(d, m, k).map_err(|e| Error::Format(format!("bad header: {e}")))?;

        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let expected = d
            .checked_mul(k)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
        if body.len() != expected {
            return Err(Error::Format(format!(
                "body holds {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let mut indices = Vec::with_capacity(d * k);
        for chunk in body.chunks_exact(4) {
            let v = u32::from_le_bytes(chunk.try_into().unwrap());
            if v == 0 || v as usize > m {
                return Err(Error::Format(format!("index {v} outside 1..={m}")));
            }
            indices.push(v - 1);
        }
        for (item, row) in indices.chunks_exact(k).enumerate() {
            validate_row(item, row, m)?;
        }
        Ok(HashMatrix { d, m, k, seed, indices })
    }

    pub fn save(&self, path: impl AsRef<Path>, format: HashFileFormat) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        match format {
            HashFileFormat::Text => self.write_text(w),
            HashFileFormat::Binary => self.write_binary(w),
        }
    }

    /// Loads either layout, detected by the binary magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let is_binary = r.fill_buf()?.starts_with(BINARY_MAGIC);
        if is_binary {
            Self::read_binary(r)
        } else {
            Self::read_text(r)
        }
    }
}
