//! Ground-truth objectives with known RKHS norm, prior draws on a lattice,
//! and a scan-plus-refinement optimum oracle.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BallDomain, HaltonBall};
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, MaternSpec};
use crate::linalg::{Cholesky, JitterPolicy};
use crate::points::{check_dim, PointSet};
use crate::scalar::{dot, Scalar};
use crate::search::PatternSearch;

/// A deterministic objective on the ball.
pub trait Objective<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[T]) -> T;

    /// The exact maximizer when it is known without search.
    fn exact_optimum(&self) -> Option<(Vec<T>, T)> {
        None
    }

    /// Extra starting points for the optimum search (e.g. kernel centers,
    /// where non-differentiable maxima sit).
    fn seed_points(&self) -> Vec<Vec<T>> {
        Vec::new()
    }
}

/// Result of [`find_optimum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Optimum<T> {
    pub x: Vec<T>,
    pub value: T,
    /// Best value seen during the scan, before refinement.
    pub scan_value: T,
    pub scan_budget: usize,
}

/// Default scan size: `10^5` points for `d <= 2`, `10^6` above.
pub fn default_scan_budget(dim: usize) -> usize {
    if dim <= 2 {
        100_000
    } else {
        1_000_000
    }
}

const REFINE_STARTS: usize = 10;

/// Dense low-discrepancy scan followed by pattern search from the ten best
/// scan points and from any seed points the objective offers.
pub fn find_optimum<T: Scalar>(f: &dyn Objective<T>, domain: &BallDomain, budget: usize) -> Result<Optimum<T>> {
    if budget < 1000 {
        return Err(Error::Precondition(format!("optimum scan budget {budget} < 1000")));
    }
    check_dim(domain.dim(), &vec![T::zero(); f.dim()])?;
    if let Some((x, value)) = f.exact_optimum() {
        return Ok(Optimum {
            x,
            value,
            scan_value: value,
            scan_budget: 0,
        });
    }

    let mut halton = HaltonBall::unshifted(*domain);
    // (value, point) of the best scan points, kept sorted descending
    let mut top: Vec<(T, Vec<T>)> = Vec::with_capacity(REFINE_STARTS + 1);
    let consider = |x: Vec<T>, v: T, top: &mut Vec<(T, Vec<T>)>| {
        if top.len() < REFINE_STARTS || v > top[top.len() - 1].0 {
            let pos = top.iter().position(|(tv, _)| v > *tv).unwrap_or(top.len());
            top.insert(pos, (v, x));
            top.truncate(REFINE_STARTS);
        }
    };
    let mut origin = vec![T::zero(); domain.dim()];
    let v0 = f.eval(&origin);
    consider(std::mem::take(&mut origin), v0, &mut top);
    for _ in 1..budget {
        let x = halton.next_point::<T>();
        let v = f.eval(&x);
        consider(x, v, &mut top);
    }
    let scan_value = top[0].0;

    let mut starts: Vec<(T, Vec<T>)> = top;
    for s in f.seed_points() {
        if domain.contains(&s) {
            let v = f.eval(&s);
            starts.push((v, s));
        }
    }

    let h = (domain.volume() / budget as f64).powf(1.0 / domain.dim() as f64);
    let search = PatternSearch {
        initial_step: 2.0 * h,
        min_step: 1e-13,
        max_evals: 200,
    };
    let (mut best_v, mut best_x) = starts[0].clone();
    for (v, x) in starts {
        let trail = search.maximize(domain, &x, v, |batch| batch.iter().map(|p| f.eval(p)).collect());
        if trail.best_value > best_v {
            best_v = trail.best_value;
            best_x = trail.best;
        }
    }
    Ok(Optimum {
        x: best_x,
        value: best_v,
        scan_value,
        scan_budget: budget,
    })
}

/// `f = sum_i alpha_i k(., c_i)`, an element of the kernel's RKHS with norm
/// `sqrt(alpha^T K alpha)`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(from = "RkhsRepr<T>", into = "RkhsRepr<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct RkhsFunction<T: Scalar> {
    spec: MaternSpec<T>,
    centers: PointSet<T>,
    coeffs: Vec<T>,
    norm: T,
    optimum: OnceLock<Optimum<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct RkhsRepr<T: Scalar> {
    spec: MaternSpec<T>,
    centers: PointSet<T>,
    coeffs: Vec<T>,
}

impl<T: Scalar> From<RkhsRepr<T>> for RkhsFunction<T> {
    fn from(r: RkhsRepr<T>) -> Self {
        let norm = quadratic_norm(&r.spec, &r.centers, &r.coeffs);
        Self {
            spec: r.spec,
            centers: r.centers,
            coeffs: r.coeffs,
            norm,
            optimum: OnceLock::new(),
        }
    }
}

impl<T: Scalar> From<RkhsFunction<T>> for RkhsRepr<T> {
    fn from(f: RkhsFunction<T>) -> Self {
        RkhsRepr {
            spec: f.spec,
            centers: f.centers,
            coeffs: f.coeffs,
        }
    }
}

impl<T: Scalar> Clone for RkhsFunction<T> {
    fn clone(&self) -> Self {
        let optimum = OnceLock::new();
        if let Some(o) = self.optimum.get() {
            let _ = optimum.set(o.clone());
        }
        Self {
            spec: self.spec.clone(),
            centers: self.centers.clone(),
            coeffs: self.coeffs.clone(),
            norm: self.norm,
            optimum,
        }
    }
}

fn quadratic_norm<T: Scalar>(spec: &MaternSpec<T>, centers: &PointSet<T>, coeffs: &[T]) -> T {
    if coeffs.is_empty() {
        return T::zero();
    }
    let k = gram_matrix(spec, centers);
    let ka = k.mul_vec(coeffs);
    dot(coeffs, &ka).max(T::zero()).sqrt()
}

const MAX_CENTER_RETRIES: usize = 16;

impl<T: Scalar> RkhsFunction<T> {
    pub fn new(spec: MaternSpec<T>, centers: PointSet<T>, coeffs: Vec<T>) -> Result<Self> {
        if centers.len() != coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                found: coeffs.len(),
            });
        }
        if centers.is_empty() {
            return Err(Error::Precondition("an RKHS function needs at least one center".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Precondition("coefficients must be finite".into()));
        }
        Ok(Self::from(RkhsRepr { spec, centers, coeffs }))
    }

    /// Random expansion: centers uniform in the ball, coefficients
    /// `N(0, coeff_scale^2)`. With `target_norm` the coefficients are
    /// rescaled so the norm equals it.
    pub fn random<R: Rng + ?Sized>(
        spec: MaternSpec<T>,
        domain: &BallDomain,
        n_centers: usize,
        coeff_scale: T,
        target_norm: Option<T>,
        rng: &mut R,
    ) -> Result<Self> {
        if n_centers == 0 {
            return Err(Error::Precondition("n_centers must be >= 1".into()));
        }
        if let Some(b) = target_norm {
            if !(b >= T::zero() && b.is_finite()) {
                return Err(Error::Precondition(format!("target norm {b} must be finite and >= 0")));
            }
        }
        for _ in 0..MAX_CENTER_RETRIES {
            let mut centers = PointSet::with_capacity(domain.dim(), n_centers);
            for _ in 0..n_centers {
                centers.push(&domain.sample_uniform::<T, _>(rng))?;
            }
            let coeffs: Vec<T> = (0..n_centers).map(|_| T::standard_normal(rng) * coeff_scale).collect();
            let k = gram_matrix(&spec, &centers);
            if Cholesky::factor_escalating(&k, spec.sigma2(), &JitterPolicy::default()).is_err() {
                continue;
            }
            let f = Self::new(spec.clone(), centers, coeffs)?;
            match target_norm {
                None => return Ok(f),
                Some(b) if b == T::zero() => return Ok(f.scaled(T::zero())),
                Some(b) if f.norm > T::zero() => {
                    let s = b / f.norm;
                    return Ok(f.scaled(s));
                }
                Some(_) => continue,
            }
        }
        Err(Error::Precondition(format!(
            "could not draw a well-conditioned expansion in {MAX_CENTER_RETRIES} attempts"
        )))
    }

    /// The same expansion with every coefficient multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        let coeffs = self.coeffs.iter().map(|&a| a * s).collect();
        Self {
            spec: self.spec.clone(),
            centers: self.centers.clone(),
            coeffs,
            norm: self.norm * s.abs(),
            optimum: OnceLock::new(),
        }
    }

    pub fn spec(&self) -> &MaternSpec<T> {
        &self.spec
    }

    pub fn centers(&self) -> &PointSet<T> {
        &self.centers
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Cached `sqrt(alpha^T K alpha)`.
    pub fn norm(&self) -> T {
        self.norm
    }

    pub fn domain(&self) -> BallDomain {
        BallDomain::new(self.centers.dim()).expect("centers have dimension >= 1")
    }

    /// Maximizer found with the default scan budget, computed once.
    pub fn optimum(&self) -> &Optimum<T> {
        self.optimum.get_or_init(|| {
            let d = self.domain();
            find_optimum(self, &d, default_scan_budget(d.dim())).expect("default budget is valid")
        })
    }

    /// Lipschitz constant bound `sum |alpha_i| * max_r |k'(r)|`.
    pub fn lipschitz_bound(&self) -> T {
        let total: T = self.coeffs.iter().map(|a| a.abs()).sum();
        total * kernel_slope_bound(&self.spec)
    }
}

impl<T: Scalar> Objective<T> for RkhsFunction<T> {
    fn dim(&self) -> usize {
        self.centers.dim()
    }

    fn eval(&self, x: &[T]) -> T {
        self.centers
            .iter()
            .zip(&self.coeffs)
            .map(|(c, &a)| a * self.spec.between(x, c))
            .sum()
    }

    fn seed_points(&self) -> Vec<Vec<T>> {
        self.centers.to_rows()
    }
}

/// `sqrt(alpha^T K alpha)`.
pub fn rkhs_norm<T: Scalar>(f: &RkhsFunction<T>) -> T {
    f.norm()
}

/// `max_r |k'(r)|`, slightly inflated so it stays an upper bound.
pub fn kernel_slope_bound<T: Scalar>(spec: &MaternSpec<T>) -> T {
    if spec.nu.order() == 0 {
        return spec.sigma2() / spec.params.lengthscale();
    }
    // |k'| vanishes at 0 and decays exponentially; the maximum sits at a few
    // lengthscales at most
    let l = spec.params.lengthscale().to_f64_lossy();
    let slope = |r: f64| spec.eval_dr(T::lit(r)).abs().to_f64_lossy();
    let n = 20_000;
    let hi = 20.0 * l;
    let (mut best_r, mut best) = (0.0, 0.0);
    for i in 0..=n {
        let r = hi * i as f64 / n as f64;
        let s = slope(r);
        if s > best {
            best = s;
            best_r = r;
        }
    }
    let (mut a, mut b) = ((best_r - hi / n as f64).max(0.0), best_r + hi / n as f64);
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if slope(m1) < slope(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    T::lit(best.max(slope(0.5 * (a + b))) * (1.0 + 1e-9))
}

/// One joint prior draw on a cubic lattice clipped to the ball, evaluated by
/// nearest-lattice-point lookup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GridFunction<T> {
    spec: MaternSpec<T>,
    resolution: usize,
    grid: PointSet<T>,
    values: Vec<T>,
    /// Lattice multi-index (flattened) to grid row, `usize::MAX` outside the ball.
    lookup: Vec<usize>,
    jitter_rel: f64,
}

/// Largest lattice a prior draw may use.
pub const MAX_GRID_POINTS: usize = 10_000;

impl<T: Scalar> GridFunction<T> {
    pub fn spec(&self) -> &MaternSpec<T> {
        &self.spec
    }

    pub fn grid(&self) -> &PointSet<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn jitter_rel(&self) -> f64 {
        self.jitter_rel
    }

    /// Heuristic RKHS-norm stand-in `3 sigma sqrt(max_i |f_i| / sigma)`; a
    /// prior draw has no finite norm in the kernel's own RKHS.
    pub fn heuristic_bound(&self) -> T {
        let sigma = self.spec.params.sigma();
        let zmax = self.values.iter().fold(T::zero(), |m, v| m.max(v.abs() / sigma));
        T::lit(3.0) * sigma * zmax.sqrt()
    }

    fn lattice_coord(&self, v: T) -> usize {
        let h = 1.0 / (self.resolution - 1) as f64;
        let i = ((v.to_f64_lossy() + 0.5) / h).round();
        i.clamp(0.0, (self.resolution - 1) as f64) as usize
    }

    fn nearest(&self, x: &[T]) -> usize {
        let mut flat = 0;
        for &v in x {
            flat = flat * self.resolution + self.lattice_coord(v);
        }
        let idx = self.lookup[flat];
        if idx != usize::MAX {
            return idx;
        }
        // the rounded lattice point lies outside the ball: search directly
        let mut best = (T::infinity(), 0);
        for (i, g) in self.grid.iter().enumerate() {
            let d2: T = g.iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum();
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        best.1
    }
}

impl<T: Scalar> Objective<T> for GridFunction<T> {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn eval(&self, x: &[T]) -> T {
        self.values[self.nearest(x)]
    }

    fn exact_optimum(&self) -> Option<(Vec<T>, T)> {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        Some((self.grid.row(best).to_vec(), self.values[best]))
    }
}

/// Draws `f ~ GP(0, k)` jointly over the lattice with `resolution` points
/// per axis spanning `[-1/2, 1/2]`, keeping the points inside the ball.
pub fn draw_prior_function<T: Scalar, R: Rng + ?Sized>(
    spec: MaternSpec<T>,
    domain: &BallDomain,
    resolution: usize,
    rng: &mut R,
) -> Result<GridFunction<T>> {
    if resolution < 2 {
        return Err(Error::Precondition("grid resolution must be >= 2".into()));
    }
    let d = domain.dim();
    let cells = (resolution as f64).powi(d as i32);
    if cells > 1e8 {
        return Err(Error::Precondition(format!("lattice {resolution}^{d} is too large")));
    }
    let cells = cells as usize;
    let h = 1.0 / (resolution - 1) as f64;
    let mut grid = PointSet::new(d);
    let mut lookup = vec![usize::MAX; cells];
    let mut idx = vec![0usize; d];
    for (flat, slot) in lookup.iter_mut().enumerate() {
        let mut rem = flat;
        for k in (0..d).rev() {
            idx[k] = rem % resolution;
            rem /= resolution;
        }
        let x: Vec<T> = idx.iter().map(|&i| T::lit(i as f64 * h - 0.5)).collect();
        if domain.contains(&x) {
            *slot = grid.len();
            grid.push(&x)?;
        }
    }
    if grid.len() > MAX_GRID_POINTS {
        return Err(Error::Precondition(format!(
            "lattice has {} points inside the ball, more than {MAX_GRID_POINTS}",
            grid.len()
        )));
    }
    let k = gram_matrix(&spec, &grid);
    let chol = Cholesky::factor_escalating(&k, spec.sigma2(), &JitterPolicy::default())?;
    let z: Vec<T> = (0..grid.len()).map(|_| T::standard_normal(rng)).collect();
    let values = chol.mul_lower(&z);
    Ok(GridFunction {
        spec,
        resolution,
        grid,
        values,
        lookup,
        jitter_rel: chol.jitter_rel(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{HyperParams, Smoothness};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(nu: Smoothness, s2: f64, l: f64) -> MaternSpec<f64> {
        MaternSpec::new(nu, HyperParams::new(s2, l).unwrap())
    }

    fn dom(d: usize) -> BallDomain {
        BallDomain::new(d).unwrap()
    }

    #[test]
    fn single_center_norm_is_coefficient_times_sigma() {
        let s = spec(Smoothness::THREE_HALVES, 1.0, 0.3);
        let f = RkhsFunction::new(s.clone(), PointSet::from_scalars(&[0.1]), vec![1.0]).unwrap();
        assert_relative_eq!(rkhs_norm(&f), 1.0, max_relative = 1e-15);
        let s4 = spec(Smoothness::HALF, 4.0, 0.3);
        let g = RkhsFunction::new(s4, PointSet::from_scalars(&[0.1]), vec![-2.5]).unwrap();
        assert_relative_eq!(g.norm(), 5.0, max_relative = 1e-15);
    }

    #[test]
    fn norm_edge_cases() {
        let s = spec(Smoothness::HALF, 1.0, 0.01);
        let far = RkhsFunction::new(s.clone(), PointSet::from_scalars(&[-0.5, 0.5]), vec![1.0, 1.0]).unwrap();
        // k(c1, c2) = e^-100
        assert_relative_eq!(far.norm(), 2f64.sqrt(), max_relative = 1e-12);
        let zero = RkhsFunction::new(s.clone(), PointSet::from_scalars(&[0.2, 0.2]), vec![1.0, -1.0]).unwrap();
        assert_eq!(zero.norm(), 0.0);
        assert_eq!(zero.eval(&[0.4]), 0.0);
        let z = RkhsFunction::new(s, PointSet::from_scalars(&[0.1, 0.3]), vec![0.0, 0.0]).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn target_norm_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = spec(Smoothness::FIVE_HALVES, 1.0, 0.2);
        for d in 1..=3 {
            let f = RkhsFunction::random(s.clone(), &dom(d), 12, 1.0, Some(5.0), &mut rng).unwrap();
            let recomputed = quadratic_norm(f.spec(), f.centers(), f.coeffs());
            assert_relative_eq!(f.norm(), 5.0, max_relative = 1e-12);
            assert_relative_eq!(recomputed, 5.0, max_relative = 1e-12);
            assert!(f.centers().iter().all(|c| dom(d).contains(c)));
        }
    }

    #[test]
    fn evaluation_matches_expansion() {
        let s = spec(Smoothness::HALF, 2.0, 0.5);
        let f = RkhsFunction::new(s, PointSet::from_scalars(&[-0.2, 0.3]), vec![1.5, -0.5]).unwrap();
        let x = 0.05;
        let expect = 1.5 * 2.0 * (-(0.25f64) / 0.5).exp() - 0.5 * 2.0 * (-(0.25f64) / 0.5).exp();
        assert_relative_eq!(f.eval(&[x]), expect, max_relative = 1e-14);
    }

    #[test]
    fn optimum_of_single_positive_center_is_the_center() {
        let s = spec(Smoothness::THREE_HALVES, 1.5, 0.2);
        let c = [0.1, -0.2];
        let f = RkhsFunction::new(s, PointSet::from_rows(2, [c]).unwrap(), vec![2.0]).unwrap();
        let o = f.optimum();
        assert_relative_eq!(o.value, 3.0, max_relative = 1e-12);
        assert!((o.x[0] - c[0]).abs() < 1e-6 && (o.x[1] - c[1]).abs() < 1e-6);
        assert!(o.value >= o.scan_value);
    }

    #[test]
    fn symmetric_two_center_optimum() {
        let s = spec(Smoothness::HALF, 1.0, 1.0);
        let f = RkhsFunction::new(s, PointSet::from_scalars(&[-0.25, 0.25]), vec![1.0, 1.0]).unwrap();
        let o = find_optimum(&f, &dom(1), 100_000).unwrap();
        assert_relative_eq!(o.value, 1.0 + (-0.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(o.value, 1.6065, epsilon = 1e-4);
        assert!((o.x[0].abs() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn zero_function_optimum() {
        let s = spec(Smoothness::HALF, 1.0, 1.0);
        let f = RkhsFunction::new(s, PointSet::from_scalars(&[0.0]), vec![0.0]).unwrap();
        assert_eq!(find_optimum(&f, &dom(1), 1000).unwrap().value, 0.0);
        assert!(find_optimum(&f, &dom(1), 999).is_err());
    }

    #[test]
    fn optimum_beats_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = spec(Smoothness::THREE_HALVES, 1.0, 0.2);
        let f = RkhsFunction::random(s, &dom(1), 8, 1.0, Some(3.0), &mut rng).unwrap();
        let o = f.optimum();
        let grid_best = (0..=200_000)
            .map(|i| f.eval(&[-0.5 + i as f64 / 200_000.0]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(o.value >= grid_best - 1e-12);
    }

    #[test]
    fn serde_round_trip_preserves_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = RkhsFunction::random(spec(Smoothness::HALF, 1.0, 0.5), &dom(2), 4, 1.0, Some(2.0), &mut rng)
            .unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let g: RkhsFunction<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(g.coeffs(), f.coeffs());
        assert_relative_eq!(g.norm(), f.norm(), max_relative = 1e-14);
        assert_eq!(serde_json::to_string(&g).unwrap(), json);
    }

    #[test]
    fn lipschitz_bound_dominates_finite_differences() {
        for nu in [Smoothness::HALF, Smoothness::THREE_HALVES, Smoothness::FIVE_HALVES] {
            let s = spec(nu, 1.3, 0.15);
            let b = kernel_slope_bound(&s);
            let mut worst: f64 = 0.0;
            for i in 0..20_000 {
                let r = i as f64 * 1e-4;
                worst = worst.max(((s.eval(r + 1e-7) - s.eval(r)) / 1e-7).abs());
            }
            assert!(worst <= b * (1.0 + 1e-5), "{nu}: {worst} > {b}");
            assert!(worst >= 0.99 * b);
        }
        let s = spec(Smoothness::HALF, 2.0, 0.5);
        assert_relative_eq!(kernel_slope_bound(&s), 4.0);
    }

    #[test]
    fn prior_draw_is_deterministic_and_looked_up_exactly() {
        let s = spec(Smoothness::THREE_HALVES, 1.0, 0.2);
        let a = draw_prior_function(s.clone(), &dom(2), 21, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = draw_prior_function(s, &dom(2), 21, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.values(), b.values());
        for (i, g) in a.grid().iter().enumerate() {
            assert_eq!(a.eval(g), a.values()[i]);
        }
        // corner-ish query whose rounded lattice point is outside the ball
        let v = a.eval(&[0.35, 0.35]);
        assert!(a.values().contains(&v));
        let (x, fmax) = a.exact_optimum().unwrap();
        assert_eq!(a.eval(&x), fmax);
        assert!(a.heuristic_bound() > 0.0);
    }

    #[test]
    fn prior_draw_moments() {
        let s = spec(Smoothness::HALF, 2.0, 0.3);
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut m0, mut s00, mut s01) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let g = draw_prior_function(s.clone(), &dom(1), 11, &mut rng).unwrap();
            let (a, b) = (g.values()[3], g.values()[5]);
            m0 += a;
            s00 += a * a;
            s01 += a * b;
        }
        let nf = n as f64;
        let (mean, var, cov) = (m0 / nf, s00 / nf, s01 / nf);
        let sigma = 2f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / nf.sqrt());
        // var of the sample second moment is 2 sigma^4
        assert!((var - 2.0).abs() < 3.0 * (2.0 * 4.0 / nf).sqrt());
        let k = s.eval(0.2);
        let se = ((4.0 + k * k) / nf).sqrt();
        assert!((cov - k).abs() < 3.0 * se, "{cov} vs {k}");
    }

    #[test]
    fn oversized_lattice_is_rejected() {
        let s = spec(Smoothness::HALF, 1.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(draw_prior_function(s.clone(), &dom(1), 10_001, &mut rng).is_err());
        assert!(draw_prior_function(s, &dom(1), 1, &mut rng).is_err());
    }
}
