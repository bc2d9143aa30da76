//! Observed samples and their domains.

use ndarray::Array2;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Domain of an observation space: real vectors or categorical vectors
/// over a finite alphabet `{0, …, L−1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Continuous,
    Discrete { vocab_size: u32 },
}

/// A sample of n observations, one per row.
///
/// Discrete observations are stored as f64 with integer values; the
/// constructor validates integrality and range, so downstream code can
/// rely on exact equality comparisons.
#[derive(Clone, Debug)]
pub struct Dataset {
    values: Array2<f64>,
    domain: Domain,
}

impl Dataset {
    pub fn continuous(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset entry".into()));
        }
        Ok(Self {
            values,
            domain: Domain::Continuous,
        })
    }

    pub fn discrete(values: Array2<f64>, vocab_size: u32) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "vocab size must exceed 1, got {vocab_size}"
            )));
        }
        for (idx, &v) in values.iter().enumerate() {
            if v.fract() != 0.0 || v < 0.0 || v >= vocab_size as f64 {
                return Err(Error::OutOfRangeSymbol {
                    value: v,
                    coord: idx % values.ncols(),
                    vocab: vocab_size,
                });
            }
        }
        Ok(Self {
            values,
            domain: Domain::Discrete { vocab_size },
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Row i as a contiguous slice (rows of a standard-layout matrix).
    pub fn row(&self, i: usize) -> &[f64] {
        self.values
            .row(i)
            .to_slice()
            .expect("dataset is standard layout")
    }

    /// Read a headerless CSV of observations, one row per observation.
    pub fn read_csv(path: &Path, domain: Domain) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let row: Vec<f64> = trimmed
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        Error::MalformedData(format!(
                            "line {}: cannot parse `{}` as a number",
                            lineno + 1,
                            tok
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::MalformedData(format!(
                        "line {}: expected {} columns, got {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::MalformedData("empty data file".into()));
        }
        let ncols = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let nrows = flat.len() / ncols;
        let values = Array2::from_shape_vec((nrows, ncols), flat)
            .map_err(|e| Error::MalformedData(e.to_string()))?;
        match domain {
            Domain::Continuous => Self::continuous(values),
            Domain::Discrete { vocab_size } => Self::discrete(values, vocab_size),
        }
    }

    /// Write as headerless CSV; discrete entries print as integers.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let discrete = matches!(self.domain, Domain::Discrete { .. });
        for i in 0..self.n() {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    write!(file, ",")?;
                }
                if discrete {
                    write!(file, "{}", *v as i64)?;
                } else {
                    write!(file, "{v}")?;
                }
            }
            writeln!(file)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn discrete_rejects_fractional_and_out_of_range() {
        assert!(Dataset::discrete(array![[0.0, 1.5]], 3).is_err());
        assert!(Dataset::discrete(array![[0.0, 3.0]], 3).is_err());
        assert!(Dataset::discrete(array![[0.0, 2.0]], 3).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join("steincmp_data_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        let ds = Dataset::discrete(array![[0.0, 1.0], [2.0, 2.0]], 3).unwrap();
        ds.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path, Domain::Discrete { vocab_size: 3 }).unwrap();
        assert_eq!(back.values(), ds.values());
    }
}
