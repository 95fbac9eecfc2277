//! Property suites for the concentration, monotonicity, distance-sum and
//! tail inequalities. Every suite is deterministic given its seed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_tail_constant, min_dist_integral_numeric, min_dist_sum_bound, UPPER_TAIL_AT_ONE};
use crate::domain::{BallDomain, HaltonBall};
use crate::error::Result;
use crate::gp::{History, Posterior};
use crate::kernels::{HyperParams, MaternSpec, Smoothness};
use crate::linalg::JitterPolicy;
use crate::policies::{build_discretization, exploration_width, DiscretizationConfig};
use crate::scalar::{distance, Scalar};
use crate::testbed::{Objective, RkhsFunction};

/// Outcome of one suite: a verdict plus the measured margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        writeln!(f, "[{verdict}] {}", self.name)?;
        for l in &self.lines {
            writeln!(f, "    {l}")?;
        }
        Ok(())
    }
}

fn draw_history<R: Rng + ?Sized>(dom: &BallDomain, n: usize, f: &dyn Objective<f64>, rng: &mut R) -> History<f64> {
    let mut h = History::in_domain(*dom);
    while h.len() < n {
        let x: Vec<f64> = dom.sample_uniform(rng);
        let y = f.eval(&x);
        let _ = h.push(&x, y);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub n_functions: usize,
    pub probes: usize,
    pub rounds: Vec<usize>,
    pub seed: u64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            n_functions: 100,
            probes: 10_000,
            rounds: vec![5, 20, 80],
            seed: 2,
        }
    }
}

/// `|f(x) - mu_t(x)| <= ||f|| sigma_t(x)` for expansions `f` in the
/// emulator's own RKHS with known hyperparameters.
pub fn concentration_suite(cfg: &ConcentrationConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nus = [Smoothness::HALF, Smoothness::THREE_HALVES, Smoothness::FIVE_HALVES];
    let t_max = cfg.rounds.iter().copied().max().unwrap_or(1);
    let mut checks = 0u64;
    let mut violations = 0u64;
    let mut worst_ratio: f64 = 0.0;
    for i in 0..cfg.n_functions {
        let d = 1 + i % 2;
        let nu = nus[i % nus.len()];
        let dom = BallDomain::new(d)?;
        let sigma2 = rng.random_range(0.5..2.0);
        let lengthscale = rng.random_range(0.1..1.0);
        let spec = MaternSpec::new(nu, HyperParams::new(sigma2, lengthscale)?);
        let f = RkhsFunction::random(spec.clone(), &dom, 10, 1.0, None, &mut rng)?;
        let b = f.norm();
        let full = draw_history(&dom, t_max, &f, &mut rng);
        let probes: Vec<Vec<f64>> = (0..cfg.probes).map(|_| dom.sample_uniform(&mut rng)).collect();
        for &t in &cfg.rounds {
            let post = Posterior::new(spec.clone(), full.prefix(t), JitterPolicy::default())?;
            let tol = 1e-6 * b * spec.params.sigma();
            for (x, (m, s)) in probes.iter().zip(post.mean_sd_batch(&probes)?) {
                let err = (f.eval(x) - m).abs();
                checks += 1;
                if err > b * s + tol {
                    violations += 1;
                }
                if b * s > 0.0 {
                    worst_ratio = worst_ratio.max(err / (b * s + tol));
                }
            }
        }
    }
    Ok(SuiteReport {
        name: "concentration |f - mu_t| <= B sigma_t".into(),
        passed: violations == 0,
        lines: vec![
            format!("{violations} violations / {checks} probes over {} functions", cfg.n_functions),
            format!("max observed |f - mu_t| / (B sigma_t + tol) = {worst_ratio:.6} (<= 1 required)"),
        ],
    })
}

/// Posterior sd at fixed probes never increases as observations accrue.
pub fn sd_monotonicity_suite(n_sequences: usize, len: usize, n_probes: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nus = [Smoothness::HALF, Smoothness::THREE_HALVES, Smoothness::FIVE_HALVES];
    let mut worst_increase: f64 = f64::NEG_INFINITY;
    let mut violations = 0u64;
    let mut checks = 0u64;
    for s in 0..n_sequences {
        let d = 1 + s % 3;
        let nu = nus[s % nus.len()];
        let dom = BallDomain::new(d)?;
        let spec = MaternSpec::new(nu, HyperParams::new(1.0, 0.3)?);
        let probes: Vec<Vec<f64>> = (0..n_probes).map(|_| dom.sample_uniform(&mut rng)).collect();
        let mut post = Posterior::new(spec.clone(), History::in_domain(dom), JitterPolicy::default())?;
        let mut prev: Vec<f64> = vec![spec.params.sigma(); n_probes];
        while post.len() < len {
            let x: Vec<f64> = dom.sample_uniform(&mut rng);
            if post.push(&x, 0.0).is_err() {
                continue;
            }
            let now: Vec<f64> = post.mean_sd_batch(&probes)?.into_iter().map(|(_, sd)| sd).collect();
            for (a, b) in now.iter().zip(&prev) {
                checks += 1;
                let inc = a - b;
                worst_increase = worst_increase.max(inc);
                if inc > 1e-9 * spec.params.sigma() {
                    violations += 1;
                }
            }
            prev = now;
        }
    }
    Ok(SuiteReport {
        name: "posterior sd is non-increasing in t".into(),
        passed: violations == 0,
        lines: vec![
            format!("{violations} violations / {checks} probe-steps over {n_sequences} sequences"),
            format!("largest one-step change sigma_t - sigma_(t-1) = {worst_increase:.3e}"),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSumConfig {
    pub n_random: usize,
    pub n_greedy: usize,
    pub max_len: usize,
    pub greedy_pool: usize,
    pub seed: u64,
}

impl Default for DistanceSumConfig {
    fn default() -> Self {
        Self {
            n_random: 1000,
            n_greedy: 8,
            max_len: 512,
            greedy_pool: 4096,
            seed: 5,
        }
    }
}

/// Running prefix sums of `min_{i<t} |z_t - z_i|^nu` for several `nu`.
fn prefix_sums(z: &[Vec<f64>], nus: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(z.len()); nus.len()];
    let mut acc = vec![0.0; nus.len()];
    for t in 1..z.len() {
        let m = (0..t).map(|i| distance(&z[t], &z[i])).fold(f64::INFINITY, f64::min);
        for (k, &nu) in nus.iter().enumerate() {
            acc[k] += m.powf(nu);
            out[k].push(acc[k]);
        }
    }
    out
}

/// Each new point maximizes its distance to the points so far, over a pool
/// of Halton points and axis poles.
fn greedy_sequence<R: Rng + ?Sized>(dom: &BallDomain, len: usize, pool_size: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pool: Vec<Vec<f64>> = Vec::with_capacity(pool_size + 2 * dom.dim());
    for k in 0..dom.dim() {
        for s in [-1.0, 1.0] {
            let mut p = vec![0.0; dom.dim()];
            p[k] = s * dom.radius();
            pool.push(p);
        }
    }
    let mut halton = HaltonBall::new(*dom, rng);
    pool.extend((0..pool_size).map(|_| halton.next_point::<f64>()));
    let mut seq = vec![dom.sample_uniform::<f64, _>(rng)];
    let mut nearest: Vec<f64> = pool.iter().map(|p| distance(p, &seq[0])).collect();
    while seq.len() < len {
        let (j, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        let next = pool[j].clone();
        for (p, n) in pool.iter().zip(nearest.iter_mut()) {
            *n = n.min(distance(p, &next));
        }
        seq.push(next);
    }
    seq
}

/// Distance-sum bound against random and greedy sequences, plus the
/// closed form against quadrature.
pub fn distance_sum_suite(cfg: &DistanceSumConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nus = [0.5, 1.5];
    let mut sequences = 0usize;
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    let bounds: Vec<Vec<Vec<f64>>> = (1..=3)
        .map(|d| {
            nus.iter()
                .map(|&nu| (2..=cfg.max_len).map(|t| min_dist_sum_bound(d, nu, t).expect("valid")).collect())
                .collect()
        })
        .collect();
    let check = |d: usize, z: &[Vec<f64>], violations: &mut usize, worst: &mut f64| {
        for (k, sums) in prefix_sums(z, &nus).iter().enumerate() {
            for (i, &v) in sums.iter().enumerate() {
                let bound = bounds[d - 1][k][i];
                *worst = worst.max(v / bound);
                if v > bound {
                    *violations += 1;
                }
            }
        }
    };
    for d in 1..=3 {
        let dom = BallDomain::new(d)?;
        for _ in 0..cfg.n_random {
            let len = rng.random_range(2..=cfg.max_len);
            let z: Vec<Vec<f64>> = (0..len).map(|_| dom.sample_uniform(&mut rng)).collect();
            check(d, &z, &mut violations, &mut worst);
            sequences += 1;
        }
        for _ in 0..cfg.n_greedy {
            let z = greedy_sequence(&dom, cfg.max_len, cfg.greedy_pool, &mut rng);
            check(d, &z, &mut violations, &mut worst);
            sequences += 1;
        }
    }
    let mut quad_err: f64 = 0.0;
    for d in 1..=3 {
        for &nu in &nus {
            for t in [2, 3, 10, 64, 512, 4096] {
                let closed = min_dist_sum_bound(d, nu, t)?;
                let head = (2f64.powf(1.0 / d as f64) - 1.0).powf(-nu);
                let numeric = head + min_dist_integral_numeric(d, nu, t);
                quad_err = quad_err.max((closed - numeric).abs() / closed);
            }
        }
    }
    Ok(SuiteReport {
        name: "distance-sum bound".into(),
        passed: violations == 0 && quad_err <= 1e-9,
        lines: vec![
            format!("{violations} violations / {sequences} sequences (every prefix, nu in {{1/2, 3/2}}, d in {{1,2,3}})"),
            format!("max sum / bound = {worst:.6}"),
            format!("closed form vs quadrature: max relative difference {quad_err:.3e} (<= 1e-9 required)"),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThompsonBandConfig {
    pub rounds: Vec<usize>,
    pub resamples: usize,
    pub discretization: DiscretizationConfig,
    pub seed: u64,
}

impl Default for ThompsonBandConfig {
    fn default() -> Self {
        Self {
            rounds: vec![10, 50],
            resamples: 10_000,
            discretization: DiscretizationConfig::default(),
            seed: 6,
        }
    }
}

/// Empirical probability that a Thompson draw leaves the band
/// `|f_hat - mu_t| <= B b_t sigma_t` somewhere on `D_t`, against `c / t^2`.
pub fn thompson_band_suite(cfg: &ThompsonBandConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dom = BallDomain::new(1)?;
    let spec = MaternSpec::new(Smoothness::HALF, HyperParams::new(1.0, 0.5)?);
    let f = RkhsFunction::random(spec.clone(), &dom, 6, 1.0, Some(1.0), &mut rng)?;
    let b = 1.0;
    let mut lines = Vec::new();
    let mut passed = true;
    for &t in &cfg.rounds {
        let history = draw_history(&dom, t - 1, &f, &mut rng);
        let post = Posterior::new(spec.clone(), history, JitterPolicy::default())?;
        let disc = build_discretization::<f64, _>(dom, t, cfg.discretization, &mut rng)?;
        let pts = disc.points();
        let stats = post.mean_sd_batch(&pts.to_rows())?;
        let sampler = post.joint_sampler(pts, usize::MAX)?;
        let bt = exploration_width(t, 1);
        let mut hits = 0usize;
        for _ in 0..cfg.resamples {
            let draw = sampler.draw(b * b, &mut rng);
            if draw.iter().zip(&stats).any(|(v, (m, s))| (v - m).abs() > b * bt * s) {
                hits += 1;
            }
        }
        let n = cfg.resamples as f64;
        let rate = hits as f64 / n;
        let c = pts.len() as f64 / (t as f64).powi(2);
        let p0 = (c / (t as f64).powi(2)).min(1.0);
        let se = (p0 * (1.0 - p0) / n).sqrt();
        let ok = rate <= p0 + 3.0 * se;
        passed &= ok;
        lines.push(format!(
            "t={t}: |D_t|={} b_t={bt:.5} violation rate {rate:.6} vs c/t^2 = {p0:.6} (+3 SE = {:.6}) {}",
            pts.len(),
            p0 + 3.0 * se,
            if ok { "ok" } else { "EXCEEDED" }
        ));
    }
    Ok(SuiteReport {
        name: "Thompson band event".into(),
        passed,
        lines,
    })
}

/// Monte Carlo `Pr[Z >= 1]` against `1 / (4 sqrt(pi) e)` and the exact tail.
pub fn gaussian_tail_suite(n_samples: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..n_samples).filter(|_| f64::standard_normal(&mut rng) >= 1.0).count();
    let n = n_samples as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    let bound = gaussian_tail_constant();
    let above = p >= bound - 3.0 * se;
    let near = (p - UPPER_TAIL_AT_ONE).abs() <= 3.0 * se;
    SuiteReport {
        name: "Gaussian tail constant".into(),
        passed: above && near && n_samples >= 100_000,
        lines: vec![
            format!("Pr[Z >= 1] estimate {p:.6} (SE {se:.2e}, n = {n_samples})"),
            format!("lower constant 1/(4 sqrt(pi) e) = {bound:.6}: {}", if above { "ok" } else { "VIOLATED" }),
            format!(
                "exact tail {UPPER_TAIL_AT_ONE:.6}: |diff| = {:.2e} {}",
                (p - UPPER_TAIL_AT_ONE).abs(),
                if near { "within 3 SE" } else { "OUTSIDE 3 SE" }
            ),
        ],
    }
}
