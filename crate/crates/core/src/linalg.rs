//! Dense matrices and a row-packed Cholesky factor with jitter escalation.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Relative diagonal regularization schedule.
///
/// The jitter added to the diagonal is `rel * scale`, where `scale` is the
/// kernel variance. On failure `rel` is multiplied by `factor` until it would
/// exceed `cap`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JitterPolicy {
    pub base: f64,
    pub cap: f64,
    pub factor: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            base: 1e-10,
            cap: 1e-4,
            factor: 10.0,
        }
    }
}

impl JitterPolicy {
    pub fn with_base(self, base: f64) -> Self {
        Self { base, ..self }
    }

    /// The escalation ladder starting at `from`, inclusive, up to the cap.
    pub fn ladder(&self, from: f64) -> impl Iterator<Item = f64> + '_ {
        let cap = self.cap * (1.0 + 1e-9);
        std::iter::successors(Some(from), move |&j| Some(j * self.factor))
            .take_while(move |&j| j <= cap)
    }
}

/// A failed pivot: the index and the offending squared diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub pivot: usize,
    pub diag: f64,
}

/// Lower-triangular Cholesky factor stored row by row (row `i` holds `i + 1`
/// entries), so appending a row never moves existing data.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    n: usize,
    packed: Vec<T>,
    jitter_rel: f64,
    scale: T,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl<T: Scalar> Cholesky<T> {
    /// An empty factor that will add `jitter_rel * scale` to each new diagonal.
    pub fn empty(scale: T, jitter_rel: f64) -> Self {
        Self {
            n: 0,
            packed: Vec::new(),
            jitter_rel,
            scale,
        }
    }

    /// Factor `a + jitter_rel * scale * I` at a single jitter level.
    pub fn factor(a: &Matrix<T>, scale: T, jitter_rel: f64) -> std::result::Result<Self, PivotFailure> {
        assert_eq!(a.rows(), a.cols(), "Cholesky of a non-square matrix");
        let mut c = Self::empty(scale, jitter_rel);
        c.packed.reserve(row_start(a.rows()));
        for i in 0..a.rows() {
            let row = a.row(i);
            c.push_row(&row[..i], row[i])?;
        }
        Ok(c)
    }

    /// Factor with escalating jitter; fails only once the cap is exhausted.
    pub fn factor_escalating(a: &Matrix<T>, scale: T, policy: &JitterPolicy) -> Result<Self> {
        Self::factor_escalating_from(a, scale, policy, policy.base)
    }

    pub fn factor_escalating_from(
        a: &Matrix<T>,
        scale: T,
        policy: &JitterPolicy,
        from: f64,
    ) -> Result<Self> {
        let mut last = None;
        for j in policy.ladder(from) {
            match Self::factor(a, scale, j) {
                Ok(c) => return Ok(c),
                Err(f) => last = Some((j, f)),
            }
        }
        let (jitter, f) = last.unwrap_or((from, PivotFailure { pivot: 0, diag: f64::NAN }));
        Err(Error::IllConditioned {
            size: a.rows(),
            jitter,
            pivot: f.pivot,
            diag: f.diag,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn jitter_rel(&self) -> f64 {
        self.jitter_rel
    }

    /// Absolute value added to each diagonal entry.
    #[inline]
    pub fn jitter_abs(&self) -> T {
        T::lit(self.jitter_rel) * self.scale
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.packed[row_start(i)..row_start(i + 1)]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> T {
        self.packed[row_start(i + 1) - 1]
    }

    /// Appends one row given the new point's covariances with the existing
    /// points (`cov.len() == self.len()`) and its unjittered variance.
    /// On failure the factor is left unchanged.
    pub fn push_row(&mut self, cov: &[T], var: T) -> std::result::Result<(), PivotFailure> {
        debug_assert_eq!(cov.len(), self.n);
        let start = self.packed.len();
        self.packed.extend_from_slice(cov);
        self.forward_in_place(start);
        let l = &self.packed[start..start + self.n];
        let a = var + self.jitter_abs();
        let d2 = a - dot(l, l);
        let tol = a * T::lit(8.0 * T::EPS);
        if !(d2 > tol) || !d2.is_finite() {
            let failure = PivotFailure {
                pivot: self.n,
                diag: d2.to_f64_lossy(),
            };
            self.packed.truncate(start);
            return Err(failure);
        }
        self.packed.push(d2.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Forward substitution on the tail `packed[start..start + n]`, in place.
    fn forward_in_place(&mut self, start: usize) {
        let (head, tail) = self.packed.split_at_mut(start);
        for i in 0..self.n {
            let r = &head[row_start(i)..row_start(i + 1)];
            let s = dot(&r[..i], &tail[..i]);
            tail[i] = (tail[i] - s) / r[i];
        }
    }

    /// Solves `L v = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [T]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let r = self.row(i);
            let s = dot(&r[..i], &b[..i]);
            b[i] = (b[i] - s) / r[i];
        }
    }

    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let mut v = b.to_vec();
        self.solve_lower_in_place(&mut v);
        v
    }

    /// Solves `L v_k = b_k` for several right-hand sides with a single pass
    /// over the factor.
    pub fn solve_lower_many(&self, bs: &mut [Vec<T>]) {
        for i in 0..self.n {
            let r = self.row(i);
            for b in bs.iter_mut() {
                let s = dot(&r[..i], &b[..i]);
                b[i] = (b[i] - s) / r[i];
            }
        }
    }

    /// Solves `L^T x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [T]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let r = self.row(i);
            let xi = b[i] / r[i];
            b[i] = xi;
            for (bj, &lij) in b[..i].iter_mut().zip(&r[..i]) {
                *bj -= lij * xi;
            }
        }
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = self.solve_lower(b);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[T]) -> Vec<T> {
        debug_assert_eq!(z.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), &z[..=i])).collect()
    }

    /// `log det(L L^T)`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.n).map(|i| two * self.diag(i).ln()).sum()
    }
}
