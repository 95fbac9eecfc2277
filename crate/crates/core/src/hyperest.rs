//! Per-round hyperparameter estimation over a bounded box.
//!
//! The estimators search a `grid_size x grid_size` lattice, log-spaced on
//! both axes. Because the jitter is relative to the marginal variance,
//! `K + jitter * sigma2 * I = sigma2 (R + jitter * I)` where `R` is the
//! unit-variance Gram matrix, so one factorization per lengthscale yields
//! the exact log evidence for every variance on the lattice.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::History;
use crate::kernels::{cross_cov_unchecked, gram_matrix, HyperParams, MaternSpec, Smoothness};
use crate::linalg::{Cholesky, JitterPolicy};
use crate::points::PointSet;
use crate::scalar::{dot, Scalar};

/// Axis-aligned box `[sigma2_min, sigma2_max] x [lengthscale_min, lengthscale_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox<T>")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ThetaBox<T> {
    sigma2_range: [T; 2],
    lengthscale_range: [T; 2],
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RawBox<T> {
    sigma2_range: [T; 2],
    lengthscale_range: [T; 2],
}

impl<T: Scalar> TryFrom<RawBox<T>> for ThetaBox<T> {
    type Error = Error;

    fn try_from(r: RawBox<T>) -> Result<Self> {
        Self::new(r.sigma2_range, r.lengthscale_range)
    }
}

impl<T: Scalar> ThetaBox<T> {
    pub fn new(sigma2_range: [T; 2], lengthscale_range: [T; 2]) -> Result<Self> {
        for (name, [lo, hi]) in [("sigma2", sigma2_range), ("lengthscale", lengthscale_range)] {
            if !(lo > T::zero() && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidBox(format!(
                    "{name} range [{lo}, {hi}] must satisfy 0 < min <= max < inf"
                )));
            }
        }
        Ok(Self {
            sigma2_range,
            lengthscale_range,
        })
    }

    /// The degenerate box containing only `p`.
    pub fn point(p: HyperParams<T>) -> Self {
        Self {
            sigma2_range: [p.sigma2(); 2],
            lengthscale_range: [p.lengthscale(); 2],
        }
    }

    pub fn sigma2_range(&self) -> [T; 2] {
        self.sigma2_range
    }

    pub fn lengthscale_range(&self) -> [T; 2] {
        self.lengthscale_range
    }

    pub fn contains(&self, p: &HyperParams<T>) -> bool {
        let inside = |v: T, [lo, hi]: [T; 2]| {
            let tol = T::lit(1e-12);
            v >= lo * (T::one() - tol) && v <= hi * (T::one() + tol)
        };
        inside(p.sigma2(), self.sigma2_range) && inside(p.lengthscale(), self.lengthscale_range)
    }

    /// Geometric midpoint on both axes.
    pub fn log_midpoint(&self) -> HyperParams<T> {
        let mid = |[lo, hi]: [T; 2]| (lo * hi).sqrt();
        HyperParams::new(mid(self.sigma2_range), mid(self.lengthscale_range))
            .expect("box bounds are positive")
    }
}

/// `n` log-spaced values covering `[lo, hi]`, ascending.
pub fn log_grid<T: Scalar>([lo, hi]: [T; 2], n: usize) -> Vec<T> {
    if n <= 1 || lo == hi {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * T::lit(i as f64 / (n - 1) as f64)).exp()
            }
        })
        .collect()
}

/// Log prior density over the box, used by the MAP estimator.
#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum LogPrior<T> {
    /// Constant density; MAP reduces to maximum likelihood.
    #[default]
    Uniform,
    /// Independent log-normal factors centered at `center` with log-scale sd.
    LogNormal { center: HyperParams<T>, log_sd: T },
    #[serde(skip)]
    Custom(Arc<dyn Fn(&HyperParams<T>) -> f64 + Send + Sync>),
}

impl<T: Scalar> LogPrior<T> {
    pub fn log_density(&self, p: &HyperParams<T>) -> f64 {
        match self {
            LogPrior::Uniform => 0.0,
            LogPrior::LogNormal { center, log_sd } => {
                let s = log_sd.to_f64_lossy();
                let z1 = (p.sigma2() / center.sigma2()).ln().to_f64_lossy() / s;
                let z2 = (p.lengthscale() / center.lengthscale()).ln().to_f64_lossy() / s;
                -0.5 * (z1 * z1 + z2 * z2)
            }
            LogPrior::Custom(f) => f(p),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for LogPrior<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogPrior::Uniform => write!(f, "Uniform"),
            LogPrior::LogNormal { center, log_sd } => f
                .debug_struct("LogNormal")
                .field("center", center)
                .field("log_sd", log_sd)
                .finish(),
            LogPrior::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum EstimatorKind<T> {
    Fixed { params: HyperParams<T> },
    MleGrid,
    MapGrid,
}

fn default_grid_size() -> usize {
    16
}

fn default_refit_period() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct EstimatorConfig<T> {
    #[serde(flatten)]
    pub kind: EstimatorKind<T>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub prior: LogPrior<T>,
    /// Re-estimate at most every `refit_period` rounds.
    #[serde(default = "default_refit_period")]
    pub refit_period: usize,
    /// Additional spacing proportional to the round of the last refit: the
    /// next refit happens once `t - last >= max(refit_period, refit_growth * last)`.
    /// Zero keeps the plain period.
    #[serde(default)]
    pub refit_growth: f64,
}

impl<T: Scalar> EstimatorConfig<T> {
    pub fn fixed(params: HyperParams<T>) -> Self {
        Self::with_kind(EstimatorKind::Fixed { params })
    }

    pub fn mle_grid() -> Self {
        Self::with_kind(EstimatorKind::MleGrid)
    }

    pub fn map_grid(prior: LogPrior<T>) -> Self {
        Self {
            prior,
            ..Self::with_kind(EstimatorKind::MapGrid)
        }
    }

    fn with_kind(kind: EstimatorKind<T>) -> Self {
        Self {
            kind,
            grid_size: default_grid_size(),
            prior: LogPrior::Uniform,
            refit_period: default_refit_period(),
            refit_growth: 0.0,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self.kind, EstimatorKind::Fixed { .. })
    }

    /// Whether round `t` (1-based) re-estimates, given the round of the
    /// previous refit.
    pub fn refits_at(&self, t: usize, last: Option<usize>) -> bool {
        match last {
            None => true,
            Some(last) => {
                let gap = (self.refit_period.max(1) as f64).max(self.refit_growth * last as f64);
                (t - last) as f64 >= gap
            }
        }
    }

    fn log_prior(&self, p: &HyperParams<T>) -> f64 {
        match self.kind {
            EstimatorKind::MapGrid => self.prior.log_density(p),
            _ => 0.0,
        }
    }
}

/// Log evidence of the observations under `GP(0, k + jitter)`.
///
/// Returns `-inf` when the Gram matrix cannot be factored even at the
/// jitter cap.
pub fn log_marginal_likelihood<T: Scalar>(
    spec: &MaternSpec<T>,
    history: &History<T>,
    jitter_rel: f64,
) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let policy = JitterPolicy::default().with_base(jitter_rel);
    Ok(UnitEvidence::compute(spec.nu, spec.params.lengthscale(), history, &policy)
        .map_or(f64::NEG_INFINITY, |e| e.at(spec.sigma2())))
}

/// Sufficient statistics of the evidence for one lengthscale at unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
struct UnitEvidence {
    n: usize,
    /// `y^T (R + jI)^-1 y`
    quad: f64,
    /// `log det (R + jI)`
    log_det: f64,
}

impl UnitEvidence {
    fn compute<T: Scalar>(
        nu: Smoothness,
        lengthscale: T,
        history: &History<T>,
        policy: &JitterPolicy,
    ) -> Option<Self> {
        let unit = unit_spec(nu, lengthscale);
        let k = gram_matrix(&unit, history.points());
        let chol = Cholesky::factor_escalating(&k, T::one(), policy).ok()?;
        let w = chol.solve_lower(history.values());
        Some(Self {
            n: history.len(),
            quad: dot(&w, &w).to_f64_lossy(),
            log_det: chol.log_det().to_f64_lossy(),
        })
    }

    fn at<T: Scalar>(&self, sigma2: T) -> f64 {
        let s2 = sigma2.to_f64_lossy();
        let n = self.n as f64;
        -0.5 * self.quad / s2 - 0.5 * (n * s2.ln() + self.log_det) - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

fn unit_spec<T: Scalar>(nu: Smoothness, lengthscale: T) -> MaternSpec<T> {
    MaternSpec::new(
        nu,
        HyperParams::new(T::one(), lengthscale).expect("grid lengthscales are positive"),
    )
}

/// Score of one lattice point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridScore<T> {
    pub params: HyperParams<T>,
    pub log_likelihood: f64,
    pub score: f64,
}

/// Scores every lattice point, ordered by lengthscale then variance.
pub fn score_grid<T: Scalar>(
    config: &EstimatorConfig<T>,
    nu: Smoothness,
    theta_box: &ThetaBox<T>,
    history: &History<T>,
    jitter_rel: f64,
) -> Vec<GridScore<T>> {
    let policy = JitterPolicy::default().with_base(jitter_rel);
    let lengthscales = log_grid(theta_box.lengthscale_range(), config.grid_size);
    let evidence: Vec<Option<UnitEvidence>> = lengthscales
        .par_iter()
        .map(|&l| UnitEvidence::compute(nu, l, history, &policy))
        .collect();
    collect_scores(config, theta_box, &lengthscales, &evidence)
}

fn collect_scores<T: Scalar>(
    config: &EstimatorConfig<T>,
    theta_box: &ThetaBox<T>,
    lengthscales: &[T],
    evidence: &[Option<UnitEvidence>],
) -> Vec<GridScore<T>> {
    let variances = log_grid(theta_box.sigma2_range(), config.grid_size);
    let mut out = Vec::with_capacity(lengthscales.len() * variances.len());
    for (&l, ev) in lengthscales.iter().zip(evidence) {
        for &s2 in &variances {
            let params = HyperParams::new(s2, l).expect("grid values are positive");
            let ll = ev.map_or(f64::NEG_INFINITY, |e| e.at(s2));
            let score = ll + config.log_prior(&params);
            out.push(GridScore {
                params,
                log_likelihood: ll,
                score,
            });
        }
    }
    out
}

/// First maximizer in lattice order: smallest lengthscale, then smallest variance.
fn argmax<T: Scalar>(scores: &[GridScore<T>]) -> Option<HyperParams<T>> {
    let mut best: Option<&GridScore<T>> = None;
    for s in scores {
        if s.score.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s.score > b.score) {
            best = Some(s);
        }
    }
    best.map(|b| b.params)
}

/// Selects the hyperparameter estimate for the next round.
pub fn estimate<T: Scalar>(
    config: &EstimatorConfig<T>,
    nu: Smoothness,
    theta_box: &ThetaBox<T>,
    history: &History<T>,
    jitter_rel: f64,
) -> Result<HyperParams<T>> {
    if let EstimatorKind::Fixed { params } = &config.kind {
        if !theta_box.contains(params) {
            return Err(Error::InvalidBox(format!(
                "fixed hyperparameters {params:?} lie outside the box"
            )));
        }
        return Ok(*params);
    }
    if history.is_empty() {
        return Ok(theta_box.log_midpoint());
    }
    let scores = score_grid(config, nu, theta_box, history, jitter_rel);
    Ok(argmax(&scores).unwrap_or_else(|| theta_box.log_midpoint()))
}

/// Incrementally maintained unit-variance factors, one per grid lengthscale,
/// so that the evidence over the whole lattice is available after each
/// observation at `O(g t^2)` cost instead of `O(g t^3)`.
#[derive(Debug, Clone)]
pub struct EvidenceTracker<T> {
    nu: Smoothness,
    policy: JitterPolicy,
    lengthscales: Vec<T>,
    points: PointSet<T>,
    values: Vec<T>,
    factors: Vec<Option<TrackedFactor<T>>>,
}

#[derive(Debug, Clone)]
struct TrackedFactor<T> {
    chol: Cholesky<T>,
    white: Vec<T>,
}

impl<T: Scalar> EvidenceTracker<T> {
    pub fn new(
        config: &EstimatorConfig<T>,
        nu: Smoothness,
        theta_box: &ThetaBox<T>,
        dim: usize,
        jitter_rel: f64,
    ) -> Self {
        let lengthscales = log_grid(theta_box.lengthscale_range(), config.grid_size);
        let policy = JitterPolicy::default().with_base(jitter_rel);
        let factors = lengthscales
            .iter()
            .map(|_| {
                Some(TrackedFactor {
                    chol: Cholesky::empty(T::one(), policy.base),
                    white: Vec::new(),
                })
            })
            .collect();
        Self {
            nu,
            policy,
            lengthscales,
            points: PointSet::new(dim),
            values: Vec::new(),
            factors,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn push(&mut self, x: &[T], y: T) -> Result<()> {
        self.points.push(x)?;
        self.values.push(y);
        for (i, &l) in self.lengthscales.iter().enumerate() {
            let unit = unit_spec(self.nu, l);
            let slot = &mut self.factors[i];
            let appended = match slot {
                Some(f) => {
                    let n = f.chol.len();
                    let cov = cross_cov_unchecked(&unit, &self.points.prefix(n), x);
                    if f.chol.push_row(&cov, T::one()).is_ok() {
                        let r = f.chol.row(n);
                        let w = (y - dot(&r[..n], &f.white)) / r[n];
                        f.white.push(w);
                        true
                    } else {
                        false
                    }
                }
                None => false,
            };
            if !appended {
                let from = slot
                    .as_ref()
                    .map_or(self.policy.base, |f| f.chol.jitter_rel() * self.policy.factor);
                let k = gram_matrix(&unit, &self.points);
                *slot = Cholesky::factor_escalating_from(&k, T::one(), &self.policy, from)
                    .ok()
                    .map(|chol| TrackedFactor {
                        white: chol.solve_lower(&self.values),
                        chol,
                    });
            }
        }
        Ok(())
    }

    pub fn scores(&self, config: &EstimatorConfig<T>, theta_box: &ThetaBox<T>) -> Vec<GridScore<T>> {
        let n = self.len();
        let evidence: Vec<Option<UnitEvidence>> = self
            .factors
            .iter()
            .map(|f| {
                f.as_ref().map(|f| UnitEvidence {
                    n,
                    quad: dot(&f.white, &f.white).to_f64_lossy(),
                    log_det: f.chol.log_det().to_f64_lossy(),
                })
            })
            .collect();
        collect_scores(config, theta_box, &self.lengthscales, &evidence)
    }

    /// Same selection rule as [`estimate`].
    pub fn estimate(&self, config: &EstimatorConfig<T>, theta_box: &ThetaBox<T>) -> Result<HyperParams<T>> {
        if let EstimatorKind::Fixed { params } = &config.kind {
            return Ok(*params);
        }
        if self.is_empty() {
            return Ok(theta_box.log_midpoint());
        }
        Ok(argmax(&self.scores(config, theta_box)).unwrap_or_else(|| theta_box.log_midpoint()))
    }
}
