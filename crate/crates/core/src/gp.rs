//! Noise-free Gaussian-process conditioning.
//!
//! [`Posterior`] holds the Cholesky factor of `K + jitter * sigma2 * I` for the
//! stored observations together with the whitened targets `L^-1 y`, which
//! is all that is needed for means, variances, covariances and joint draws.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::domain::BallDomain;
use crate::error::{Error, Result};
use crate::kernels::{cross_cov_unchecked, gram_matrix, MaternSpec};
use crate::linalg::{Cholesky, JitterPolicy, Matrix};
use crate::points::{check_dim, PointSet};
use crate::scalar::{distance, dot, Scalar};

/// Points closer than this to a stored point are rejected.
pub const DEFAULT_DUPLICATE_THRESHOLD: f64 = 1e-9;

/// Default cap on the size of a joint draw.
pub const DEFAULT_JOINT_SAMPLE_CAP: usize = 4096;

/// Append-only record of noise-free observations.
#[derive(Debug, Clone, PartialEq)]
pub struct History<T> {
    points: PointSet<T>,
    values: Vec<T>,
    duplicate_threshold: f64,
    domain: Option<BallDomain>,
}

impl<T: Scalar> History<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            points: PointSet::new(dim),
            values: Vec::new(),
            duplicate_threshold: DEFAULT_DUPLICATE_THRESHOLD,
            domain: None,
        }
    }

    /// A history whose points must lie in `domain`.
    pub fn in_domain(domain: BallDomain) -> Self {
        Self {
            domain: Some(domain),
            ..Self::new(domain.dim())
        }
    }

    pub fn with_duplicate_threshold(mut self, threshold: f64) -> Self {
        self.duplicate_threshold = threshold;
        self
    }

    pub fn from_observations<R: AsRef<[T]>>(
        dim: usize,
        observations: impl IntoIterator<Item = (R, T)>,
    ) -> Result<Self> {
        let mut h = Self::new(dim);
        for (x, y) in observations {
            h.push(x.as_ref(), y)?;
        }
        Ok(h)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &PointSet<T> {
        &self.points
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn duplicate_threshold(&self) -> f64 {
        self.duplicate_threshold
    }

    /// Index of a stored point within the duplicate threshold of `x`.
    pub fn find_duplicate(&self, x: &[T]) -> Option<(usize, f64)> {
        let thr = T::lit(self.duplicate_threshold);
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, distance(p, x)))
            .find(|&(_, d)| d < thr)
            .map(|(i, d)| (i, d.to_f64_lossy()))
    }

    pub fn is_duplicate(&self, x: &[T]) -> bool {
        self.find_duplicate(x).is_some()
    }

    /// Validates an observation without storing it.
    pub fn check(&self, x: &[T], y: T) -> Result<()> {
        check_dim(self.dim(), x)?;
        if !y.is_finite() {
            return Err(Error::Precondition(format!("non-finite observation {y}")));
        }
        if let Some(d) = &self.domain {
            d.check(x)?;
        }
        if let Some((index, distance)) = self.find_duplicate(x) {
            return Err(Error::DuplicatePoint {
                index,
                distance,
                threshold: self.duplicate_threshold,
            });
        }
        Ok(())
    }

    pub fn push(&mut self, x: &[T], y: T) -> Result<()> {
        self.check(x, y)?;
        self.points.push(x)?;
        self.values.push(y);
        Ok(())
    }

    fn pop(&mut self) {
        if let Some(n) = self.len().checked_sub(1) {
            *self = self.prefix(n);
        }
    }

    /// The first `n` observations.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            points: self.points.prefix(n),
            values: self.values[..n].to_vec(),
            duplicate_threshold: self.duplicate_threshold,
            domain: self.domain,
        }
    }
}

/// A GP conditioned on a [`History`] of exact observations.
///
/// With an empty history this is the zero-mean prior.
#[derive(Debug)]
pub struct Posterior<T> {
    spec: MaternSpec<T>,
    history: History<T>,
    chol: Cholesky<T>,
    /// `L^-1 y`
    white: Vec<T>,
    jitter: JitterPolicy,
    generation: u64,
    clamps: AtomicU64,
}

impl<T: Scalar> Clone for Posterior<T> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            history: self.history.clone(),
            chol: self.chol.clone(),
            white: self.white.clone(),
            jitter: self.jitter,
            generation: self.generation,
            clamps: AtomicU64::new(self.clamps.load(Ordering::Relaxed)),
        }
    }
}

impl<T: Scalar> Posterior<T> {
    /// The prior `GP(0, k)` over `R^dim`.
    pub fn prior(spec: MaternSpec<T>, dim: usize) -> Self {
        Self::prior_with(spec, History::new(dim), JitterPolicy::default())
    }

    fn prior_with(spec: MaternSpec<T>, history: History<T>, jitter: JitterPolicy) -> Self {
        debug_assert!(history.is_empty());
        Self {
            chol: Cholesky::empty(spec.sigma2(), jitter.base),
            spec,
            history,
            white: Vec::new(),
            jitter,
            generation: 0,
            clamps: AtomicU64::new(0),
        }
    }

    /// The prior when `history` is empty, the conditioned posterior otherwise.
    pub fn new(spec: MaternSpec<T>, history: History<T>, jitter: JitterPolicy) -> Result<Self> {
        if history.is_empty() {
            Ok(Self::prior_with(spec, history, jitter))
        } else {
            Self::condition_with(spec, history, jitter)
        }
    }

    /// Conditions on a non-empty history, factoring `K + jitter_rel * sigma2 * I`
    /// and escalating the jitter tenfold on failure up to the default cap.
    pub fn condition(spec: MaternSpec<T>, history: History<T>, jitter_rel: f64) -> Result<Self> {
        Self::condition_with(spec, history, JitterPolicy::default().with_base(jitter_rel))
    }

    pub fn condition_with(spec: MaternSpec<T>, history: History<T>, jitter: JitterPolicy) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::EmptyHistory);
        }
        if !(jitter.base > 0.0) {
            return Err(Error::Precondition("jitter must be positive".into()));
        }
        let mut post = Self::prior_with(spec, History::new(history.dim()), jitter);
        post.history = history;
        post.refactor(jitter.base)?;
        Ok(post)
    }

    /// Rebuilds the factor from scratch starting at jitter `from`.
    fn refactor(&mut self, from: f64) -> Result<()> {
        let k = gram_matrix(&self.spec, self.history.points());
        self.chol = Cholesky::factor_escalating_from(&k, self.spec.sigma2(), &self.jitter, from)?;
        self.white = self.chol.solve_lower(self.history.values());
        self.generation += 1;
        Ok(())
    }

    /// Appends one observation, updating the factor in `O(t^2)`. If the
    /// appended pivot fails, the whole factor is rebuilt at escalated jitter.
    pub fn push(&mut self, x: &[T], y: T) -> Result<()> {
        self.history.check(x, y)?;
        let cov = cross_cov_unchecked(&self.spec, self.history.points(), x);
        let appended = self.chol.push_row(&cov, self.spec.sigma2()).is_ok();
        self.history.push(x, y)?;
        if appended {
            let n = self.chol.len() - 1;
            let r = self.chol.row(n);
            let w = (y - dot(&r[..n], &self.white)) / r[n];
            self.white.push(w);
            Ok(())
        } else {
            let from = self.chol.jitter_rel() * self.jitter.factor;
            let res = self.refactor(from);
            if res.is_err() {
                self.history.pop();
            }
            res
        }
    }

    pub fn spec(&self) -> &MaternSpec<T> {
        &self.spec
    }

    pub fn history(&self) -> &History<T> {
        &self.history
    }

    pub fn dim(&self) -> usize {
        self.history.dim()
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    /// `L^-1 y`.
    pub fn whitened_targets(&self) -> &[T] {
        &self.white
    }

    /// Relative jitter of the current factor.
    pub fn jitter_rel(&self) -> f64 {
        self.chol.jitter_rel()
    }

    /// Incremented whenever the factor is rebuilt rather than extended.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Number of negative variances clamped to zero so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    /// `(K + jitter)^-1 y`.
    pub fn alpha(&self) -> Vec<T> {
        let mut a = self.white.clone();
        self.chol.solve_upper_in_place(&mut a);
        a
    }

    /// `L^-1 k(X, x)` without dimension checks.
    pub fn whiten(&self, x: &[T]) -> Vec<T> {
        let mut v = cross_cov_unchecked(&self.spec, self.history.points(), x);
        self.chol.solve_lower_in_place(&mut v);
        v
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        check_dim(self.dim(), x)
    }

    pub fn clamp_variance(&self, var: T) -> T {
        if var < T::zero() {
            self.clamps.fetch_add(1, Ordering::Relaxed);
            T::zero()
        } else {
            var
        }
    }

    pub fn mean(&self, x: &[T]) -> Result<T> {
        self.check_point(x)?;
        let v = self.whiten(x);
        Ok(dot(&v, &self.white))
    }

    pub fn sd(&self, x: &[T]) -> Result<T> {
        Ok(self.mean_sd(x)?.1)
    }

    pub fn variance(&self, x: &[T]) -> Result<T> {
        self.check_point(x)?;
        let v = self.whiten(x);
        Ok(self.clamp_variance(self.spec.sigma2() - dot(&v, &v)))
    }

    /// Mean and standard deviation sharing one triangular solve.
    pub fn mean_sd(&self, x: &[T]) -> Result<(T, T)> {
        self.check_point(x)?;
        let v = self.whiten(x);
        let var = self.clamp_variance(self.spec.sigma2() - dot(&v, &v));
        Ok((dot(&v, &self.white), var.sqrt()))
    }

    /// Means and standard deviations for a batch, with one pass over the factor.
    pub fn mean_sd_batch(&self, xs: &[Vec<T>]) -> Result<Vec<(T, T)>> {
        for x in xs {
            self.check_point(x)?;
        }
        let mut vs: Vec<Vec<T>> = xs
            .iter()
            .map(|x| cross_cov_unchecked(&self.spec, self.history.points(), x))
            .collect();
        self.chol.solve_lower_many(&mut vs);
        Ok(vs
            .iter()
            .map(|v| {
                let var = self.clamp_variance(self.spec.sigma2() - dot(v, v));
                (dot(v, &self.white), var.sqrt())
            })
            .collect())
    }

    /// Posterior covariance `k(x, x') - v(x)^T v(x')` (unclamped).
    pub fn cov(&self, x: &[T], x2: &[T]) -> Result<T> {
        self.check_point(x)?;
        self.check_point(x2)?;
        let a = self.whiten(x);
        let b = self.whiten(x2);
        Ok(self.spec.between(x, x2) - dot(&a, &b))
    }

    /// Posterior mean vector and covariance matrix over `d`.
    pub fn mean_cov(&self, d: &PointSet<T>) -> Result<(Vec<T>, Matrix<T>)> {
        if d.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: d.dim(),
            });
        }
        let mut vs: Vec<Vec<T>> = d
            .iter()
            .map(|x| cross_cov_unchecked(&self.spec, self.history.points(), x))
            .collect();
        self.chol.solve_lower_many(&mut vs);
        let mean = vs.iter().map(|v| dot(v, &self.white)).collect();
        let prior = gram_matrix(&self.spec, d);
        let n = d.len();
        let mut cov = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let c = prior[(i, j)] - dot(&vs[i], &vs[j]);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        Ok((mean, cov))
    }

    /// One joint draw from `GP(mu_t, scale2 * k_t)` over the finite set `d`:
    /// `mu + sqrt(scale2) L_D z` with `L_D` the jittered Cholesky factor of the
    /// posterior covariance over `d`.
    pub fn joint_sample<R: Rng + ?Sized>(
        &self,
        d: &PointSet<T>,
        scale2: T,
        rng: &mut R,
    ) -> Result<Vec<T>> {
        Ok(self.joint_sampler(d, DEFAULT_JOINT_SAMPLE_CAP)?.draw(scale2, rng))
    }

    /// Factors the posterior covariance over `d` once so that repeated draws
    /// cost `O(|d|^2)` each.
    pub fn joint_sampler(&self, d: &PointSet<T>, cap: usize) -> Result<JointSampler<T>> {
        if d.is_empty() {
            return Err(Error::Precondition("joint sample over an empty set".into()));
        }
        if d.len() > cap {
            return Err(Error::Precondition(format!(
                "joint sample over {} points exceeds cap {cap}",
                d.len()
            )));
        }
        let (mean, cov) = self.mean_cov(d)?;
        let chol = Cholesky::factor_escalating(&cov, self.spec.sigma2(), &self.jitter)?;
        Ok(JointSampler { mean, chol })
    }
}

/// Mean vector and covariance factor for repeated joint draws.
#[derive(Debug, Clone)]
pub struct JointSampler<T> {
    mean: Vec<T>,
    chol: Cholesky<T>,
}

impl<T: Scalar> JointSampler<T> {
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn jitter_rel(&self) -> f64 {
        self.chol.jitter_rel()
    }

    pub fn draw<R: Rng + ?Sized>(&self, scale2: T, rng: &mut R) -> Vec<T> {
        let z: Vec<T> = (0..self.mean.len()).map(|_| T::standard_normal(rng)).collect();
        let lz = self.chol.mul_lower(&z);
        let s = scale2.sqrt();
        self.mean.iter().zip(lz).map(|(&m, e)| m + s * e).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{HyperParams, Smoothness};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(m: u8) -> MaternSpec<f64> {
        MaternSpec::new(
            Smoothness::from_order(m).unwrap(),
            HyperParams::new(1.0, 1.0).unwrap(),
        )
    }

    fn one_point(m: u8, x0: f64, y0: f64, jitter: f64) -> Posterior<f64> {
        let h = History::from_observations(1, [([x0], y0)]).unwrap();
        Posterior::condition(spec(m), h, jitter).unwrap()
    }

    #[test]
    fn single_observation_alpha() {
        let jit = 1e-10;
        let p = one_point(0, 0.2, 3.0, jit);
        assert_relative_eq!(p.alpha()[0], 3.0 / (1.0 + jit), max_relative = 1e-14);
    }

    #[test]
    fn one_point_closed_forms() {
        let p = one_point(0, 0.0, 1.0, 1e-14);
        let e1 = (-1.0f64).exp();
        assert_relative_eq!(p.mean(&[1.0]).unwrap(), e1, max_relative = 1e-10);
        assert_relative_eq!(p.sd(&[1.0]).unwrap(), (1.0 - e1 * e1).sqrt(), max_relative = 1e-10);
        let c = p.cov(&[0.5], &[1.0]).unwrap();
        assert_relative_eq!(c, (-0.5f64).exp() - (-0.5f64).exp() * e1, max_relative = 1e-10);
        assert_relative_eq!(c, 0.3834, epsilon = 1e-4);
    }

    #[test]
    fn prior_conventions() {
        let p = Posterior::prior(spec(1), 2);
        assert_eq!(p.mean(&[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(p.sd(&[0.1, 0.2]).unwrap(), 1.0);
        assert!(matches!(p.mean(&[0.1]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_history_is_rejected_by_condition() {
        assert!(matches!(
            Posterior::condition(spec(0), History::<f64>::new(1), 1e-10),
            Err(Error::EmptyHistory)
        ));
    }

    #[test]
    fn history_rejects_near_duplicates_and_outside_points() {
        let mut h = History::in_domain(BallDomain::new(1).unwrap());
        h.push(&[0.1], 1.0).unwrap();
        let err = h.push(&[0.1 + 1e-12], 1.0).unwrap_err();
        assert!(matches!(err, Error::DuplicatePoint { index: 0, .. }));
        assert!(matches!(h.push(&[0.7], 0.0), Err(Error::OutOfDomain { .. })));
        assert!(h.push(&[0.3], f64::NAN).is_err());
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn interpolates_ten_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (7.0 * x).sin()).collect();
        let h = History::from_observations(1, xs.iter().zip(&ys).map(|(x, y)| ([*x], *y))).unwrap();
        let p = Posterior::condition(spec(1), h, 1e-10).unwrap();
        assert_eq!(p.jitter_rel(), 1e-10);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((p.mean(&[*x]).unwrap() - y).abs() <= 1e-6 * 1.0f64.max(y.abs()));
            assert!(p.sd(&[*x]).unwrap() <= 1e-4);
        }
    }

    #[test]
    fn push_matches_condition_from_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs: Vec<(Vec<f64>, f64)> = (0..12)
            .map(|_| {
                let x = vec![rng.random::<f64>() - 0.5, rng.random::<f64>() * 0.5 - 0.25];
                let y = x[0] * 3.0 - x[1];
                (x, y)
            })
            .collect();
        let mut inc = Posterior::prior(spec(2), 2);
        for (x, y) in &obs {
            inc.push(x, *y).unwrap();
        }
        let full = Posterior::condition(
            spec(2),
            History::from_observations(2, obs.iter().map(|(x, y)| (x.clone(), *y))).unwrap(),
            inc.jitter_rel(),
        )
        .unwrap();
        for probe in [[0.0, 0.0], [0.3, -0.1], [-0.2, 0.2]] {
            let (m1, s1) = inc.mean_sd(&probe).unwrap();
            let (m2, s2) = full.mean_sd(&probe).unwrap();
            assert_relative_eq!(m1, m2, epsilon = 1e-9);
            assert_relative_eq!(s1, s2, epsilon = 1e-9);
        }
        let batch = inc.mean_sd_batch(&[vec![0.0, 0.0], vec![0.3, -0.1]]).unwrap();
        assert_relative_eq!(batch[1].0, full.mean(&[0.3, -0.1]).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn cov_is_symmetric_and_consistent_with_variance() {
        let p = one_point(1, 0.1, -0.4, 1e-10);
        let c12 = p.cov(&[0.3], &[-0.2]).unwrap();
        let c21 = p.cov(&[-0.2], &[0.3]).unwrap();
        assert_relative_eq!(c12, c21, max_relative = 1e-14);
        let v = p.cov(&[0.3], &[0.3]).unwrap();
        assert_relative_eq!(v.sqrt(), p.sd(&[0.3]).unwrap(), max_relative = 1e-12);
        assert!(p.cov(&[0.1], &[0.4]).unwrap().abs() < 1e-9);
    }

    #[test]
    fn joint_sample_edge_cases() {
        let p = one_point(0, 0.1, 2.0, 1e-10);
        let d = PointSet::from_scalars(&[0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = p.joint_sample(&d, 1.0, &mut rng).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-3);

        let d = PointSet::from_scalars(&[-0.3, 0.4]);
        let mean = p.mean_cov(&d).unwrap().0;
        let s = p.joint_sample(&d, 1e-30, &mut rng).unwrap();
        for (a, b) in s.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }

        let a = p.joint_sample(&d, 4.0, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = p.joint_sample(&d, 4.0, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);

        assert!(p.joint_sample(&PointSet::new(1), 1.0, &mut rng).is_err());
        assert!(p.joint_sampler(&d, 1).is_err());
    }

    #[test]
    fn joint_sample_moments() {
        let h = History::from_observations(1, [([-0.3], 0.5), ([0.2], -1.0)]).unwrap();
        let p = Posterior::condition(spec(1), h, 1e-10).unwrap();
        let x = 0.45;
        let (mu, sd) = p.mean_sd(&[x]).unwrap();
        let b2 = 2.25;
        let sampler = p.joint_sampler(&PointSet::from_scalars(&[x]), 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| sampler.draw(b2, &mut rng)[0]).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target_sd = b2.sqrt() * sd;
        assert!((m - mu).abs() < 3.0 * target_sd / (n as f64).sqrt());
        // sd of the sample sd is about sd / sqrt(2n)
        assert!((var.sqrt() - target_sd).abs() < 3.0 * target_sd / (2.0 * n as f64).sqrt());
    }

    #[test]
    fn near_singular_gram_escalates_jitter() {
        // nearly collinear, nearly coincident points under a smooth kernel
        let h = History::from_observations(1, [([0.0], 0.0), ([1e-6], 0.0), ([2e-6], 0.0)]).unwrap();
        let policy = JitterPolicy::default().with_base(1e-18);
        let p = Posterior::condition_with(spec(3), h, policy).unwrap();
        assert!(p.jitter_rel() > 1e-18);
        assert!(p.jitter_rel() <= 1e-4);
        assert!(p.mean(&[0.3]).unwrap().is_finite());

        let mut q = Posterior::prior_with(spec(3), History::new(1), policy);
        q.push(&[0.0], 0.0).unwrap();
        q.push(&[1e-6], 0.0).unwrap();
        q.push(&[2e-6], 0.0).unwrap();
        assert!(q.jitter_rel() > 1e-18);
        assert!(q.generation() >= 1);
    }
}
