use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BallDomain, HaltonBall};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Growth constant and size cap of the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_c() -> f64 {
    1.0
}

fn default_cap() -> usize {
    2000
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            c: default_c(),
            cap: default_cap(),
        }
    }
}

impl DiscretizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("discretization c = {} must be positive", self.c)));
        }
        if self.cap == 0 {
            return Err(Error::Config("discretization cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// Nested candidate set `D_t` with `|D_t| = min(ceil(c t^(2d)), cap)`.
///
/// Points come from a randomly shifted Halton stream in the ball, so the
/// set for round `t` always extends the set for any earlier round.
#[derive(Debug, Clone)]
pub struct Discretization<T> {
    config: DiscretizationConfig,
    exponent: i32,
    points: PointSet<T>,
    source: HaltonBall,
}

impl<T: Scalar> Discretization<T> {
    pub fn new<R: Rng + ?Sized>(domain: BallDomain, config: DiscretizationConfig, rng: &mut R) -> Self {
        Self {
            config,
            exponent: 2 * domain.dim() as i32,
            points: PointSet::new(domain.dim()),
            source: HaltonBall::new(domain, rng),
        }
    }

    pub fn config(&self) -> DiscretizationConfig {
        self.config
    }

    /// `min(ceil(c t^(2d)), cap)`.
    pub fn size_at(&self, t: usize) -> usize {
        size_at(self.config, self.exponent, t)
    }

    /// Extends the set to its round-`t` size; never shrinks.
    pub fn grow_to(&mut self, t: usize) {
        let target = self.size_at(t.max(1));
        while self.points.len() < target {
            let x = self.source.next_point::<T>();
            self.points.push(&x).expect("generated points have the domain dimension");
        }
    }

    pub fn points(&self) -> &PointSet<T> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether the cap is smaller than the unconstrained size at round `t`.
    pub fn cap_binds(&self, t: usize) -> bool {
        self.config.c * (t as f64).powi(self.exponent) > self.config.cap as f64
    }
}

fn size_at(config: DiscretizationConfig, exponent: i32, t: usize) -> usize {
    let raw = (config.c * (t as f64).powi(exponent)).ceil();
    if raw >= config.cap as f64 {
        config.cap
    } else {
        (raw as usize).max(1)
    }
}

/// The round-`t` candidate set for `domain`.
pub fn build_discretization<T: Scalar, R: Rng + ?Sized>(
    domain: BallDomain,
    t: usize,
    config: DiscretizationConfig,
    rng: &mut R,
) -> Result<Discretization<T>> {
    if t == 0 {
        return Err(Error::Precondition("rounds are numbered from 1".into()));
    }
    config.validate()?;
    let mut d = Discretization::new(domain, config, rng);
    d.grow_to(t);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(c: f64, cap: usize) -> DiscretizationConfig {
        DiscretizationConfig { c, cap }
    }

    #[test]
    fn sizes_follow_growth_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d1 = BallDomain::new(1).unwrap();
        let d2 = BallDomain::new(2).unwrap();
        let a: Discretization<f64> = build_discretization(d1, 1, cfg(1.0, 2000), &mut rng).unwrap();
        assert_eq!(a.len(), 1);
        let b: Discretization<f64> = build_discretization(d1, 3, cfg(1.0, 2000), &mut rng).unwrap();
        assert_eq!(b.len(), 9);
        let c: Discretization<f64> = build_discretization(d2, 100, cfg(1.0, 2000), &mut rng).unwrap();
        assert_eq!(c.len(), 2000);
        assert!(c.cap_binds(100));
        assert!(!b.cap_binds(3));
        assert!(build_discretization::<f64, _>(d1, 0, cfg(1.0, 10), &mut rng).is_err());
        assert!(build_discretization::<f64, _>(d1, 1, cfg(0.0, 10), &mut rng).is_err());
    }

    #[test]
    fn growth_is_nested_and_deterministic() {
        let dom = BallDomain::new(2).unwrap();
        let mut small = Discretization::<f64>::new(dom, cfg(0.5, 500), &mut ChaCha8Rng::seed_from_u64(4));
        let mut big = Discretization::<f64>::new(dom, cfg(0.5, 500), &mut ChaCha8Rng::seed_from_u64(4));
        small.grow_to(3);
        big.grow_to(5);
        assert_eq!(small.len(), 41);
        assert_eq!(big.len(), 313);
        assert_eq!(small.points().as_flat(), &big.points().as_flat()[..small.points().as_flat().len()]);
        big.grow_to(2);
        assert_eq!(big.len(), 313);
        assert!(big.points().iter().all(|x| dom.contains(x)));
    }
}
