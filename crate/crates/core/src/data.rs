use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix with its response vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n_features: usize,
}

impl Dataset {
    /// Builds a dataset from a flat row-major feature buffer.
    ///
    /// Rejects ragged input and non-finite values.
    pub fn from_flat(x: Vec<f64>, n_features: usize, y: Vec<f64>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidArgument("at least one feature is required".into()));
        }
        if x.len() != y.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: y.len() * n_features,
                got: x.len(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature",
                row: pos / n_features,
            });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "response", row });
        }
        Ok(Dataset { x, y, n_features })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: y.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        Self::from_flat(rows.concat(), p, y)
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.n_features + j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.n_features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert_eq!(
            Dataset::from_flat(vec![0.0, f64::NAN], 1, vec![1.0, 2.0]).unwrap_err(),
            Error::NonFinite {
                what: "feature",
                row: 1
            }
        );
        assert_eq!(
            Dataset::from_flat(vec![0.0, 1.0], 1, vec![1.0, f64::INFINITY]).unwrap_err(),
            Error::NonFinite {
                what: "response",
                row: 1
            }
        );
        assert!(Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0]], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn row_access() {
        let d = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], vec![5.0, 6.0]).unwrap();
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.value(0, 1), 2.0);
        assert_eq!((d.n_samples(), d.n_features()), (2, 2));
        assert_eq!(d.rows().count(), 2);
    }
}
