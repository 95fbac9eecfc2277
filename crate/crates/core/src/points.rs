use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered set of points in `R^dim`, stored contiguously row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<T>>", try_from = "Vec<Vec<T>>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct PointSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_rows<R: AsRef<[T]>>(dim: usize, rows: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r.as_ref())?;
        }
        Ok(set)
    }

    /// Builds a 1-D point set from scalar coordinates.
    pub fn from_scalars(xs: &[T]) -> Self {
        Self {
            dim: 1,
            data: xs.to_vec(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, x: &[T]) -> Result<()> {
        check_dim(self.dim, x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("point has non-finite coordinates".into()));
        }
        self.data.extend_from_slice(x);
        Ok(())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.iter().map(<[T]>::to_vec).collect()
    }

    /// First `n` points as a new set.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
        }
    }
}

#[inline]
pub(crate) fn check_dim<T>(expected: usize, x: &[T]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

impl<T: Scalar> From<PointSet<T>> for Vec<Vec<T>> {
    fn from(p: PointSet<T>) -> Self {
        p.to_rows()
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for PointSet<T> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        Self::from_rows(dim, rows)
    }
}
