//! Bounded pattern search (compass search with step halving).

use crate::domain::BallDomain;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSearch {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone)]
pub struct SearchTrail<T> {
    pub best: Vec<T>,
    pub best_value: T,
    /// Every polled point with its value, in evaluation order (the start
    /// point is not included).
    pub polled: Vec<(Vec<T>, T)>,
}

impl PatternSearch {
    /// Maximizes `f` starting from `start`. `f` receives a batch of points and
    /// returns one value per point; polls along each coordinate are batched.
    /// Moves only on strict improvement, so ties keep the start point.
    pub fn maximize<T: Scalar>(
        &self,
        domain: &BallDomain,
        start: &[T],
        start_value: T,
        mut f: impl FnMut(&[Vec<T>]) -> Vec<T>,
    ) -> SearchTrail<T> {
        let mut best = start.to_vec();
        let mut best_value = start_value;
        let mut polled = Vec::new();
        let mut step = self.initial_step;
        while step >= self.min_step && polled.len() < self.max_evals {
            let budget = self.max_evals - polled.len();
            let mut batch = Vec::with_capacity(2 * best.len());
            'dirs: for k in 0..best.len() {
                for sign in [1.0, -1.0] {
                    if batch.len() == budget {
                        break 'dirs;
                    }
                    let mut x = best.clone();
                    x[k] += T::lit(sign * step);
                    domain.project(&mut x);
                    if x != best {
                        batch.push(x);
                    }
                }
            }
            if batch.is_empty() {
                step *= 0.5;
                continue;
            }
            let values = f(&batch);
            let mut improved = false;
            for (x, v) in batch.into_iter().zip(values) {
                if v > best_value {
                    best_value = v;
                    best = x.clone();
                    improved = true;
                }
                polled.push((x, v));
            }
            if !improved {
                step *= 0.5;
            }
        }
        SearchTrail {
            best,
            best_value,
            polled,
        }
    }
}
