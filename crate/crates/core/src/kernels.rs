//! Half-integer Matérn covariance functions.
//!
//! The kernel is parameterized exactly as
//!
//! ```text
//! k_nu(x, x'; theta) = sigma2 / (Gamma(nu) 2^(nu-1)) * z^nu * K_nu(z),   z = |x - x'| / lengthscale
//! ```
//!
//! i.e. the argument of the Bessel function is the plain scaled distance. The
//! widely used machine-learning convention rescales the argument by
//! `sqrt(2 nu)`; that factor is deliberately absent here, so a lengthscale of
//! `1` with `nu = 3/2` gives `(1 + r) e^(-r)` rather than
//! `(1 + sqrt(3) r) e^(-sqrt(3) r)`.
//!
//! For `nu = m + 1/2` the Bessel form collapses to `sigma2 * p_m(z) * e^(-z)`
//! with a degree-`m` polynomial `p_m`; only `m <= 3` is supported.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::points::{check_dim, PointSet};
use crate::scalar::{distance, Scalar};

/// Distances below this are treated as exactly zero.
pub const ZERO_DISTANCE: f64 = 1e-15;

/// Largest supported `m` in `nu = m + 1/2`.
pub const MAX_HALF_INTEGER_ORDER: u8 = 3;

/// Marginal variance and lengthscale, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHyperParams<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct HyperParams<T> {
    sigma2: T,
    lengthscale: T,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RawHyperParams<T> {
    sigma2: T,
    lengthscale: T,
}

impl<T: Scalar> TryFrom<RawHyperParams<T>> for HyperParams<T> {
    type Error = Error;

    fn try_from(raw: RawHyperParams<T>) -> Result<Self> {
        Self::new(raw.sigma2, raw.lengthscale)
    }
}

impl<T: Scalar> HyperParams<T> {
    pub fn new(sigma2: T, lengthscale: T) -> Result<Self> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !ok(sigma2) || !ok(lengthscale) {
            return Err(Error::InvalidHyperParams {
                sigma2: sigma2.to_f64_lossy(),
                lengthscale: lengthscale.to_f64_lossy(),
            });
        }
        Ok(Self {
            sigma2,
            lengthscale,
        })
    }

    #[inline]
    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    /// Marginal standard deviation `sqrt(sigma2)`.
    #[inline]
    pub fn sigma(&self) -> T {
        self.sigma2.sqrt()
    }

    #[inline]
    pub fn lengthscale(&self) -> T {
        self.lengthscale
    }
}

/// Matérn smoothness `nu = m + 1/2`, stored as the integer `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Smoothness {
    m: u8,
}

impl Smoothness {
    pub const HALF: Smoothness = Smoothness { m: 0 };
    pub const THREE_HALVES: Smoothness = Smoothness { m: 1 };
    pub const FIVE_HALVES: Smoothness = Smoothness { m: 2 };
    pub const SEVEN_HALVES: Smoothness = Smoothness { m: 3 };

    pub fn from_order(m: u8) -> Result<Self> {
        if m > MAX_HALF_INTEGER_ORDER {
            return Err(Error::UnsupportedSmoothness(format!("nu = {m}.5")));
        }
        Ok(Self { m })
    }

    /// Parses a real `nu`; only `m + 1/2` with `m <= 3` is accepted.
    pub fn from_nu(nu: f64) -> Result<Self> {
        let m = nu - 0.5;
        if !(0.0..=MAX_HALF_INTEGER_ORDER as f64).contains(&m) || m.fract() != 0.0 {
            return Err(Error::UnsupportedSmoothness(format!(
                "nu = {nu} (supported: 0.5, 1.5, 2.5, 3.5)"
            )));
        }
        Ok(Self { m: m as u8 })
    }

    #[inline]
    pub fn order(self) -> u8 {
        self.m
    }

    #[inline]
    pub fn nu(self) -> f64 {
        self.m as f64 + 0.5
    }

    /// Coefficients of `p_m(z) = sum_j c_j z^j`, lowest degree first.
    ///
    /// `c_{m-k} = 2^m m! / (2m)! * (m+k)! / (k! (m-k)! 2^k)`.
    pub fn polynomial(self) -> Vec<f64> {
        let m = self.m as u64;
        let fact = |n: u64| (1..=n).product::<u64>() as f64;
        let lead = 2f64.powi(m as i32) * fact(m) / fact(2 * m);
        let mut coeffs = vec![0.0; m as usize + 1];
        for k in 0..=m {
            coeffs[(m - k) as usize] =
                lead * fact(m + k) / (fact(k) * fact(m - k) * 2f64.powi(k as i32));
        }
        coeffs
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2", 2 * self.m as u32 + 1)
    }
}

impl Serialize for Smoothness {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.nu())
    }
}

impl<'de> Deserialize<'de> for Smoothness {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let nu = f64::deserialize(d)?;
        Smoothness::from_nu(nu).map_err(serde::de::Error::custom)
    }
}

/// A Matérn kernel: smoothness plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SpecRepr<T>", into = "SpecRepr<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MaternSpec<T> {
    pub nu: Smoothness,
    pub params: HyperParams<T>,
    poly: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct SpecRepr<T> {
    nu: Smoothness,
    params: HyperParams<T>,
}

impl<T: Scalar> From<SpecRepr<T>> for MaternSpec<T> {
    fn from(r: SpecRepr<T>) -> Self {
        MaternSpec::new(r.nu, r.params)
    }
}

impl<T: Scalar> From<MaternSpec<T>> for SpecRepr<T> {
    fn from(s: MaternSpec<T>) -> Self {
        SpecRepr {
            nu: s.nu,
            params: s.params,
        }
    }
}

impl<T: Scalar> MaternSpec<T> {
    pub fn new(nu: Smoothness, params: HyperParams<T>) -> Self {
        Self {
            nu,
            params,
            poly: nu.polynomial().into_iter().map(T::lit).collect(),
        }
    }

    pub fn with_params(&self, params: HyperParams<T>) -> Self {
        Self::new(self.nu, params)
    }

    #[inline]
    pub fn sigma2(&self) -> T {
        self.params.sigma2
    }

    /// Kernel value at distance `r`; callers guarantee `r >= 0`.
    #[inline]
    pub fn eval(&self, r: T) -> T {
        if r < T::lit(ZERO_DISTANCE) {
            return self.params.sigma2;
        }
        let z = r / self.params.lengthscale;
        let mut p = T::zero();
        for &cj in self.poly.iter().rev() {
            p = p * z + cj;
        }
        self.params.sigma2 * p * (-z).exp()
    }

    /// Derivative of the kernel with respect to distance (one-sided at 0).
    pub fn eval_dr(&self, r: T) -> T {
        // d/dz [p(z) e^-z] = (p'(z) - p(z)) e^-z
        let z = r.max(T::zero()) / self.params.lengthscale;
        let mut p = T::zero();
        let mut dp = T::zero();
        for (j, &cj) in self.poly.iter().enumerate().rev() {
            p = p * z + cj;
            if j > 0 {
                dp = dp * z + cj * T::lit(j as f64);
            }
        }
        self.params.sigma2 * (dp - p) * (-z).exp() / self.params.lengthscale
    }

    #[inline]
    pub fn between(&self, a: &[T], b: &[T]) -> T {
        self.eval(distance(a, b))
    }
}

/// Kernel value at distance `r`.
pub fn matern_eval<T: Scalar>(spec: &MaternSpec<T>, r: T) -> Result<T> {
    if r.is_nan() || r < T::zero() {
        return Err(Error::Precondition(format!(
            "kernel distance must be nonnegative, got {r}"
        )));
    }
    Ok(spec.eval(r))
}

/// Gram matrix over `points`; the upper triangle is computed and mirrored.
pub fn gram_matrix<T: Scalar>(spec: &MaternSpec<T>, points: &PointSet<T>) -> Matrix<T> {
    let n = points.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.sigma2();
        for j in (i + 1)..n {
            let v = spec.between(points.row(i), points.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance vector `(k(x_1, x), ..., k(x_n, x))`.
pub fn cross_cov<T: Scalar>(spec: &MaternSpec<T>, points: &PointSet<T>, x: &[T]) -> Result<Vec<T>> {
    check_dim(points.dim(), x)?;
    Ok(cross_cov_unchecked(spec, points, x))
}

#[inline]
pub(crate) fn cross_cov_unchecked<T: Scalar>(
    spec: &MaternSpec<T>,
    points: &PointSet<T>,
    x: &[T],
) -> Vec<T> {
    points.iter().map(|p| spec.between(p, x)).collect()
}
