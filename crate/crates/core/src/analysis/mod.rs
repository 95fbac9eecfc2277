//! Regret accounting, empirical rates, and executable forms of the
//! distance-sum and concentration inequalities behind the regret bounds.

mod suites;
mod quadrature;

use serde::{Deserialize, Serialize};

pub use suites::{
    concentration_suite, sd_monotonicity_suite, distance_sum_suite, thompson_band_suite, gaussian_tail_suite, ConcentrationConfig, DistanceSumConfig, ThompsonBandConfig,
    SuiteReport,
};
pub use quadrature::integrate;

use crate::domain::{BallDomain, HaltonBall};
use crate::error::{Error, Result};
use crate::gp::{History, Posterior};
use crate::kernels::{HyperParams, MaternSpec, Smoothness};
use crate::linalg::JitterPolicy;
use crate::points::PointSet;
use crate::scalar::{distance, Scalar};

/// One round of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<T> {
    pub t: usize,
    pub x: Vec<T>,
    pub f_x: T,
    pub inst_regret: T,
    pub cum_regret: T,
    pub sigma2_hat: T,
    pub lengthscale_hat: T,
    /// Posterior sd at `x` under the round's estimate, before observing.
    pub post_sd_at_x: T,
    pub jitter: f64,
    /// Acquisition value at `x`.
    pub score: T,
    /// Best acquisition value over the candidate set.
    pub candidate_best: T,
    pub replayed: bool,
    pub seconds: f64,
}

/// Run-level counters that do not fit the per-round table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounters {
    pub refits: usize,
    pub rebuilds: usize,
    pub replays: usize,
    pub clamps: u64,
    pub max_jitter: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace<T> {
    pub rounds: Vec<RoundRecord<T>>,
    pub f_star: T,
    pub x_star: Vec<T>,
    /// Largest observed `f(x_t) - f*`, clamped at zero: how far the optimum
    /// oracle undershot.
    pub oracle_slack: T,
    pub counters: RunCounters,
}

impl<T: Scalar> RegretTrace<T> {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Cumulative regret after `h` rounds (`h >= 1`).
    pub fn regret_at(&self, h: usize) -> T {
        self.rounds[h - 1].cum_regret
    }

    pub fn final_regret(&self) -> T {
        self.rounds.last().map_or(T::zero(), |r| r.cum_regret)
    }
}

/// Prefix sums of the instantaneous regret.
pub fn cumulative_regret<T: Scalar>(trace: &RegretTrace<T>) -> Result<Vec<T>> {
    if trace.is_empty() {
        return Err(Error::Precondition("empty trace".into()));
    }
    let mut acc = T::zero();
    Ok(trace
        .rounds
        .iter()
        .map(|r| {
            acc += r.inst_regret;
            acc
        })
        .collect())
}

/// Powers of two up to `horizon`, plus `horizon` itself when it is not one.
pub fn dyadic_horizons(horizon: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut h = 1;
    while h <= horizon {
        out.push(h);
        h *= 2;
    }
    if out.last() != Some(&horizon) && horizon > 0 {
        out.push(horizon);
    }
    out
}

/// Floor applied to regret values before taking logs.
pub const REGRET_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Every value was below [`REGRET_FLOOR`].
    pub plateau: bool,
}

/// Least-squares slope of `log R` against `log T`.
pub fn fit_rate(values: &[f64], horizons: &[usize]) -> Result<RateFit> {
    if values.len() != horizons.len() {
        return Err(Error::DimensionMismatch {
            expected: horizons.len(),
            found: values.len(),
        });
    }
    if horizons.len() < 4 {
        return Err(Error::Precondition(format!(
            "rate fit needs >= 4 horizons, got {}",
            horizons.len()
        )));
    }
    if horizons.iter().any(|&h| h == 0) || values.iter().any(|v| v.is_nan()) {
        return Err(Error::Precondition("horizons must be positive and values finite".into()));
    }
    if values.iter().all(|&v| v < REGRET_FLOOR) {
        return Ok(RateFit {
            slope: 0.0,
            intercept: REGRET_FLOOR.ln(),
            plateau: true,
        });
    }
    let xs: Vec<f64> = horizons.iter().map(|&h| (h as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.max(REGRET_FLOOR).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("horizons must not all coincide".into()));
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        plateau: false,
    })
}

/// Mean and sample standard deviation across seeds of the cumulative regret
/// at each horizon.
pub fn seed_statistics<T: Scalar>(traces: &[RegretTrace<T>], horizons: &[usize]) -> Vec<(f64, f64)> {
    horizons
        .iter()
        .map(|&h| {
            let vals: Vec<f64> = traces.iter().map(|tr| tr.regret_at(h).to_f64_lossy()).collect();
            mean_sd(&vals)
        })
        .collect()
}

pub(crate) fn mean_sd(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (m, 0.0);
    }
    let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Probe-based fill distance `max_probe min_i |probe - x_i|`.
///
/// Probes are the `2d` axis poles of the ball plus `n_probes` Halton
/// points, so the result can only underestimate the true supremum.
pub fn fill_distance<T: Scalar>(points: &PointSet<T>, domain: &BallDomain, n_probes: usize) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Precondition("fill distance of an empty set".into()));
    }
    if points.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: points.dim(),
        });
    }
    let d = domain.dim();
    let mut probes: Vec<Vec<f64>> = Vec::with_capacity(n_probes + 2 * d);
    for k in 0..d {
        for s in [-1.0, 1.0] {
            let mut p = vec![0.0; d];
            p[k] = s * domain.radius();
            probes.push(p);
        }
    }
    let mut halton = HaltonBall::unshifted(*domain);
    probes.extend((0..n_probes).map(|_| halton.next_point::<f64>()));
    let pts: Vec<Vec<f64>> = points.iter().map(|x| x.iter().map(|v| v.to_f64_lossy()).collect()).collect();
    let mut worst: f64 = 0.0;
    for p in &probes {
        let nearest = pts.iter().map(|x| distance(p, x)).fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst)
}

/// `sum_{t >= 2} min_{i < t} |z_t - z_i|^nu`.
pub fn min_dist_sum<T: Scalar>(z: &PointSet<T>, nu: f64) -> Result<f64> {
    if z.len() < 2 {
        return Err(Error::Precondition("distance sum needs at least two points".into()));
    }
    if !(nu > 0.0) {
        return Err(Error::Precondition(format!("nu = {nu} must be positive")));
    }
    let mut total = 0.0;
    for t in 1..z.len() {
        let zt = z.row(t);
        let m = (0..t).map(|i| distance(zt, z.row(i))).fold(T::infinity(), T::min);
        total += m.to_f64_lossy().powf(nu);
    }
    Ok(total)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Closed-form upper bound on [`min_dist_sum`] for `t_max` points in the
/// unit-diameter ball: `(2^(1/d) - 1)^-nu + int_2^T (x^(1/d) - 1)^-nu dx`,
/// with the integral evaluated through its antiderivative in
/// `u = x^(1/d) - 1`.
pub fn min_dist_sum_bound(d: usize, nu: f64, t_max: usize) -> Result<f64> {
    if d == 0 || t_max < 2 || !(nu > 0.0) {
        return Err(Error::Precondition(format!(
            "bound needs d >= 1, T >= 2, nu > 0 (got d={d}, T={t_max}, nu={nu})"
        )));
    }
    let df = d as f64;
    let a = 2f64.powf(1.0 / df) - 1.0;
    let b = (t_max as f64).powf(1.0 / df) - 1.0;
    let head = a.powf(-nu);
    let mut integral = 0.0;
    for i in 0..d {
        let e = i as f64 - nu + 1.0;
        let term = if e.abs() < 1e-12 {
            b.ln() - a.ln()
        } else {
            (b.powf(e) - a.powf(e)) / e
        };
        integral += binomial(d - 1, i) * term;
    }
    Ok(head + df * integral)
}

/// `int_2^T (x^(1/d) - 1)^-nu dx` by adaptive quadrature.
pub fn min_dist_integral_numeric(d: usize, nu: f64, t_max: usize) -> f64 {
    let inv = 1.0 / d as f64;
    integrate(|x| (x.powf(inv) - 1.0).powf(-nu), 2.0, t_max as f64, 1e-13)
}

/// `1 / (4 sqrt(pi) e)`, the lower bound on `Pr[Z >= 1]` used for Thompson
/// sampling's anti-concentration step.
pub fn gaussian_tail_constant() -> f64 {
    1.0 / (4.0 * std::f64::consts::PI.sqrt() * std::f64::consts::E)
}

/// `Pr[Z >= 1]` for a standard normal.
pub const UPPER_TAIL_AT_ONE: f64 = 0.15865525393145707;

/// Audit of the UCB regret decomposition on a recorded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretAudit {
    pub regret_sum: f64,
    /// `2 B sum_t sigma_t(x_t)`.
    pub sd_bound: f64,
    pub slack: f64,
    pub holds: bool,
    /// Rounds whose instantaneous regret exceeds `2 B sigma_t(x_t)` plus slack.
    pub violating_rounds: Vec<usize>,
    /// `max_t sigma_t(x_t) / min_{i<t} |x_t - x_i|^nu`.
    pub c_hat: f64,
    /// The same ratio maximized within each dyadic window `(2^k, 2^(k+1)]`.
    pub c_hat_windows: Vec<(usize, f64)>,
}

/// Checks `R_T <= 2 B sum_t sigma_t(x_t)` (valid when `B` bounds the norm and
/// the hyperparameters are the true ones) and fits the smallest constant
/// with `sigma_t(x_t) <= C min-dist^nu`.
pub fn regret_inequality_audit<T: Scalar>(trace: &RegretTrace<T>, bound: f64, nu: f64) -> Result<RegretAudit> {
    if trace.is_empty() {
        return Err(Error::Precondition("empty trace".into()));
    }
    let oracle = trace.oracle_slack.to_f64_lossy();
    let mut regret_sum = 0.0;
    let mut sd_bound = 0.0;
    let mut slack = 0.0;
    let mut violating_rounds = Vec::new();
    let mut c_hat: f64 = 0.0;
    let mut windows: Vec<(usize, f64)> = Vec::new();
    for (k, r) in trace.rounds.iter().enumerate() {
        let inst = r.inst_regret.to_f64_lossy();
        let sd = r.post_sd_at_x.to_f64_lossy();
        let round_slack = 1e-6 * bound * r.sigma2_hat.to_f64_lossy().sqrt() + oracle;
        regret_sum += inst;
        sd_bound += 2.0 * bound * sd;
        slack += round_slack;
        if inst > 2.0 * bound * sd + round_slack {
            violating_rounds.push(r.t);
        }
        if k >= 1 {
            let m = trace.rounds[..k]
                .iter()
                .map(|p| distance(&p.x, &r.x).to_f64_lossy())
                .fold(f64::INFINITY, f64::min);
            if m > 0.0 {
                let ratio = sd / m.powf(nu);
                c_hat = c_hat.max(ratio);
                let w = (r.t as f64).log2().ceil().max(1.0) as usize;
                let w = 1 << w;
                match windows.last_mut() {
                    Some((end, v)) if *end == w => *v = v.max(ratio),
                    _ => windows.push((w, ratio)),
                }
            }
        }
    }
    Ok(RegretAudit {
        regret_sum,
        sd_bound,
        slack,
        holds: regret_sum <= sd_bound + slack,
        violating_rounds,
        c_hat,
        c_hat_windows: windows,
    })
}

/// Recomputes `2 B sum_t sigma_t(x_t)` by conditioning a fresh posterior on
/// the observations preceding each round, using the recorded estimates.
pub fn recompute_sd_bound<T: Scalar>(
    trace: &RegretTrace<T>,
    nu: Smoothness,
    bound: f64,
    jitter: JitterPolicy,
) -> Result<f64> {
    let dim = trace.rounds.first().map_or(1, |r| r.x.len());
    let mut history = History::new(dim);
    let mut total = 0.0;
    for r in &trace.rounds {
        let spec = MaternSpec::new(nu, HyperParams::new(r.sigma2_hat, r.lengthscale_hat)?);
        let post = Posterior::new(spec, history.clone(), jitter)?;
        total += 2.0 * bound * post.sd(&r.x)?.to_f64_lossy();
        if !r.replayed {
            history.push(&r.x, r.f_x)?;
        }
    }
    Ok(total)
}

/// Lipschitz certificate for the discretization: `L * delta` against the
/// `1 / t^2` accuracy target, where `delta` is the fill distance of `D_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationAudit {
    pub t: usize,
    pub lipschitz: f64,
    pub fill_distance: f64,
    pub certified_error: f64,
    pub target: f64,
    pub meets_target: bool,
}

pub fn discretization_audit(lipschitz: f64, fill_distance: f64, t: usize) -> DiscretizationAudit {
    let certified_error = lipschitz * fill_distance;
    let target = 1.0 / (t as f64 * t as f64);
    DiscretizationAudit {
        t,
        lipschitz,
        fill_distance,
        certified_error,
        target,
        meets_target: certified_error <= target,
    }
}
