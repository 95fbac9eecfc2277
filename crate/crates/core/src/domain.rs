//! The search domain and low-discrepancy point generation inside it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::check_dim;
use crate::scalar::{norm, Scalar};

pub const BALL_RADIUS: f64 = 0.5;

/// Closed Euclidean ball of diameter 1 centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallDomain {
    dim: usize,
}

impl BallDomain {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("domain dimension must be >= 1".into()));
        }
        Ok(Self { dim })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        BALL_RADIUS
    }

    pub fn contains<T: Scalar>(&self, x: &[T]) -> bool {
        x.len() == self.dim && norm(x).to_f64_lossy() <= BALL_RADIUS * (1.0 + 1e-12)
    }

    pub fn check<T: Scalar>(&self, x: &[T]) -> Result<()> {
        check_dim(self.dim, x)?;
        let n = norm(x).to_f64_lossy();
        if !(n <= BALL_RADIUS * (1.0 + 1e-12)) {
            return Err(Error::OutOfDomain {
                norm: n,
                radius: BALL_RADIUS,
            });
        }
        Ok(())
    }

    /// Radial projection onto the ball; points inside are unchanged.
    pub fn project<T: Scalar>(&self, x: &mut [T]) {
        let n = norm(x);
        let r = T::lit(BALL_RADIUS);
        if n > r {
            let s = r / n;
            x.iter_mut().for_each(|v| *v = *v * s);
        }
    }

    /// Uniform draw: isotropic Gaussian direction, radius `R U^(1/d)`.
    pub fn sample_uniform<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        loop {
            let g: Vec<f64> = (0..self.dim).map(|_| f64::standard_normal(rng)).collect();
            let n = norm(&g);
            if n == 0.0 {
                continue;
            }
            let u: f64 = rng.random();
            let r = BALL_RADIUS * u.powf(1.0 / self.dim as f64);
            return g.iter().map(|v| T::lit(v / n * r)).collect();
        }
    }

    /// Volume of the ball.
    pub fn volume(&self) -> f64 {
        let d = self.dim as f64;
        let half_d = d / 2.0;
        std::f64::consts::PI.powf(half_d) * BALL_RADIUS.powf(d) / gamma_half_integer(half_d + 1.0)
    }
}

/// Gamma at integers and half-integers.
fn gamma_half_integer(x: f64) -> f64 {
    let mut g = if x.fract() == 0.0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut a = if x.fract() == 0.0 { 1.0 } else { 0.5 };
    while a < x - 0.25 {
        g *= a;
        a += 1.0;
    }
    g
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Randomly shifted Halton sequence mapped into the ball by rejection from
/// the enclosing cube. The stream is deterministic given its shift, and any
/// prefix is a prefix of every longer run.
#[derive(Debug, Clone)]
pub struct HaltonBall {
    domain: BallDomain,
    shift: Vec<f64>,
    next_index: u64,
}

impl HaltonBall {
    pub fn new<R: Rng + ?Sized>(domain: BallDomain, rng: &mut R) -> Self {
        assert!(domain.dim() <= PRIMES.len(), "Halton bases exhausted");
        let shift = (0..domain.dim()).map(|_| rng.random::<f64>()).collect();
        Self {
            domain,
            shift,
            next_index: 1,
        }
    }

    /// Unshifted sequence, used where no randomization is wanted.
    pub fn unshifted(domain: BallDomain) -> Self {
        Self {
            domain,
            shift: vec![0.0; domain.dim()],
            next_index: 1,
        }
    }

    pub fn next_point<T: Scalar>(&mut self) -> Vec<T> {
        loop {
            let i = self.next_index;
            self.next_index += 1;
            let x: Vec<f64> = self
                .shift
                .iter()
                .zip(PRIMES)
                .map(|(s, b)| (radical_inverse(i, b) + s).fract() - BALL_RADIUS)
                .collect();
            if self.domain.dim() == 1 || norm(&x) <= BALL_RADIUS {
                return x.into_iter().map(T::lit).collect();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn containment_and_projection() {
        let d = BallDomain::new(2).unwrap();
        assert!(d.contains(&[0.3, 0.4]));
        assert!(!d.contains(&[0.4, 0.4]));
        let mut x = [3.0f64, 4.0];
        d.project(&mut x);
        assert!((x[0] - 0.3).abs() < 1e-15 && (x[1] - 0.4).abs() < 1e-15);
        assert!(d.check(&[0.1]).is_err());
        assert!(BallDomain::new(0).is_err());
    }

    #[test]
    fn uniform_samples_have_isotropic_moments() {
        let d = BallDomain::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut m1 = [0.0; 3];
        let mut m2 = [0.0; 3];
        let mut r_mean = 0.0;
        for _ in 0..n {
            let x: Vec<f64> = d.sample_uniform(&mut rng);
            assert!(d.contains(&x));
            for k in 0..3 {
                m1[k] += x[k] / n as f64;
                m2[k] += x[k] * x[k] / n as f64;
            }
            r_mean += norm(&x) / n as f64;
        }
        // E[x_k^2] = R^2 / (d + 2), E|x| = d R / (d + 1)
        let var = 0.25 / 5.0;
        for k in 0..3 {
            assert!(m1[k].abs() < 4.0 * (var / n as f64).sqrt());
            assert!((m2[k] - var).abs() < 0.02 * var * 3.0);
        }
        assert!((r_mean - 0.375).abs() < 3e-3);
    }

    #[test]
    fn halton_prefix_is_stable_and_inside() {
        let d = BallDomain::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = HaltonBall::new(d, &mut rng);
        let mut b = a.clone();
        let xs: Vec<Vec<f64>> = (0..50).map(|_| a.next_point()).collect();
        for x in &xs {
            assert!(d.contains(x));
            assert_eq!(x, &b.next_point::<f64>());
        }
    }

    #[test]
    fn ball_volume() {
        assert!((BallDomain::new(1).unwrap().volume() - 1.0).abs() < 1e-15);
        assert!((BallDomain::new(2).unwrap().volume() - std::f64::consts::PI / 4.0).abs() < 1e-15);
        assert!((BallDomain::new(3).unwrap().volume() - std::f64::consts::PI / 6.0).abs() < 1e-15);
    }
}
