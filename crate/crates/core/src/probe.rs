//! The shared training matrix.
//!
//! Column `i` of the matrix is the probe sequence of transmitter `i`. Each
//! column is drawn from its own keyed stream, so a node can compute its
//! column from `(seed, i)` alone and extending the matrix with more columns
//! never changes existing ones.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Symbol alphabet of the training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    /// i.i.d. ±1 with equal probability.
    Rademacher,
    /// i.i.d. {0, −1, +1} with probability {1/2, 1/4, 1/4}.
    Ternary,
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alphabet::Rademacher => "rademacher",
            Alphabet::Ternary => "ternary",
        })
    }
}

impl FromStr for Alphabet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => Ok(Alphabet::Rademacher),
            "ternary" => Ok(Alphabet::Ternary),
            other => Err(Error::InvalidParameter(format!("unknown alphabet {other:?}"))),
        }
    }
}

impl Alphabet {
    fn symbols_per_word(self) -> usize {
        match self {
            Alphabet::Rademacher => 32,
            Alphabet::Ternary => 16,
        }
    }

    fn symbol(self, word: u32, slot: usize) -> i8 {
        match self {
            Alphabet::Rademacher => {
                if (word >> slot) & 1 == 1 {
                    1
                } else {
                    -1
                }
            }
            // 00, 01 -> 0; 10 -> -1; 11 -> +1
            Alphabet::Ternary => match (word >> (2 * slot)) & 0b11 {
                0b10 => -1,
                0b11 => 1,
                _ => 0,
            },
        }
    }
}

/// Probe sequence of transmitter `index` (zero-based column), `rows` long.
pub fn generate_column(seed: u64, rows: usize, index: usize, alphabet: Alphabet) -> Vec<i8> {
    let mut stream = rng::stream(seed, Domain::Probe, index as u64);
    let per_word = alphabet.symbols_per_word();
    let mut out = Vec::with_capacity(rows);
    while out.len() < rows {
        let word = stream.next_u32();
        let take = per_word.min(rows - out.len());
        out.extend((0..take).map(|slot| alphabet.symbol(word, slot)));
    }
    out
}

/// `N × n` training matrix with entries in the chosen alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeMatrix {
    rows: usize,
    cols: usize,
    alphabet: Alphabet,
    seed: u64,
    /// Column-major entries.
    entries: Vec<i8>,
}

impl ProbeMatrix {
    pub fn generate(seed: u64, rows: usize, cols: usize, alphabet: Alphabet) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!(
                "probe matrix needs N >= 1 and n >= 1 (got {rows} x {cols})"
            )));
        }
        let mut entries = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            entries.extend(generate_column(seed, rows, c, alphabet));
        }
        Ok(Self {
            rows,
            cols,
            alphabet,
            seed,
            entries,
        })
    }

    /// Slot capacity `N`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Transmitter count `n`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Entry at zero-based `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[col * self.rows + row]
    }

    /// Column of transmitter `i`, numbered `1..=n`.
    pub fn column(&self, i: usize) -> Result<&[i8]> {
        if i == 0 || i > self.cols {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.cols,
            });
        }
        let start = (i - 1) * self.rows;
        Ok(&self.entries[start..start + self.rows])
    }

    /// The first `m` rows as a real matrix.
    pub fn row_slice(&self, m: usize) -> Result<DMatrix<f64>> {
        if m > self.rows {
            return Err(Error::SliceOverflow {
                requested: m,
                capacity: self.rows,
            });
        }
        Ok(DMatrix::from_fn(m, self.cols, |r, c| self.get(r, c) as f64))
    }

    /// Rows with the given zero-based indices, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DMatrix<f64>> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows) {
            return Err(Error::SliceOverflow {
                requested: bad + 1,
                capacity: self.rows,
            });
        }
        Ok(DMatrix::from_fn(rows.len(), self.cols, |r, c| {
            self.get(rows[r], c) as f64
        }))
    }

    pub fn metadata_line(&self) -> String {
        format!(
            "# seed={} alphabet={} rows={} cols={} generator={}",
            self.seed,
            self.alphabet,
            self.rows,
            self.cols,
            rng::GENERATOR_NAME
        )
    }

    /// Integer CSV, one matrix row per line, preceded by a metadata comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.metadata_line())?;
        let mut line = String::new();
        for r in 0..self.rows {
            line.clear();
            for c in 0..self.cols {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&self.get(r, c).to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}
