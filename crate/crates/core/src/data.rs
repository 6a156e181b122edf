//! Dense row-major containers for input data and embedding state.

use crate::error::{Result, TsneError};
use crate::scalar::Scalar;

/// Dense row-major `n x d` matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    n: usize,
    d: usize,
    values: Vec<T>,
}

impl<T: Scalar> DataMatrix<T> {
    /// Wraps `values` (row-major, length `n * d`) after validating the shape
    /// and that every entry is finite.
    pub fn new(n: usize, d: usize, values: Vec<T>) -> Result<Self> {
        if n < 2 {
            return Err(TsneError::InvalidParameter(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if d == 0 {
            return Err(TsneError::InvalidParameter(
                "need at least 1 column".into(),
            ));
        }
        if values.len() != n * d {
            return Err(TsneError::InvalidParameter(format!(
                "value buffer holds {} entries, expected {n} x {d} = {}",
                values.len(),
                n * d
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(TsneError::NonFinite {
                context: format!("data matrix row {}", bad / d),
                index: bad,
            });
        }
        Ok(DataMatrix { n, d, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Optimizer state for one embedding: `n x 2` coordinates plus the matching
/// velocity and per-coordinate gain buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub coords: Vec<T>,
    pub velocity: Vec<T>,
    pub gains: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    /// Zero-velocity, unit-gain state around the given coordinates.
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.len() < 4 || !coords.len().is_multiple_of(2) {
            return Err(TsneError::InvalidParameter(format!(
                "embedding needs an even coordinate count covering >= 2 points, got {}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|v| !v.is_finite()) {
            return Err(TsneError::NonFinite {
                context: "embedding coordinates".into(),
                index: bad,
            });
        }
        let n2 = coords.len();
        Ok(Embedding {
            coords,
            velocity: vec![T::zero(); n2],
            gains: vec![T::one(); n2],
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn point(&self, i: usize) -> [T; 2] {
        [self.coords[2 * i], self.coords[2 * i + 1]]
    }
}

/// A dataset as loaded from disk: `f32` features plus optional integer labels
/// (one per row).
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub data: DataMatrix<f32>,
    pub labels: Option<Vec<i32>>,
}

impl LabeledDataset {
    pub fn new(data: DataMatrix<f32>, labels: Option<Vec<i32>>) -> Result<Self> {
        if let Some(ref l) = labels {
            if l.len() != data.n() {
                return Err(TsneError::InvalidParameter(format!(
                    "{} labels for {} rows",
                    l.len(),
                    data.n()
                )));
            }
        }
        Ok(LabeledDataset { data, labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(DataMatrix::<f32>::new(1, 3, vec![0.0; 3]).is_err());
        assert!(DataMatrix::<f32>::new(2, 0, vec![]).is_err());
        assert!(DataMatrix::<f32>::new(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = DataMatrix::new(2, 2, vec![0.0, 1.0, f32::NAN, 2.0]).unwrap_err();
        match err {
            TsneError::NonFinite { index, .. } => assert_eq!(index, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn row_access() {
        let m = DataMatrix::new(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(m.n(), 2);
        assert_eq!(m.d(), 3);
    }

    #[test]
    fn label_count_must_match() {
        let m = DataMatrix::new(2, 1, vec![0.0f32, 1.0]).unwrap();
        assert!(LabeledDataset::new(m.clone(), Some(vec![1])).is_err());
        assert!(LabeledDataset::new(m, Some(vec![1, 2])).is_ok());
    }
}
