//! Incremental evaluation of the acquisition rules across rounds.
//!
//! Everything is kept at unit kernel variance: with relative jitter,
//! `K + j sigma^2 I = sigma^2 (R + j I)`, so the posterior mean does not
//! depend on `sigma^2` and the posterior sd scales with `sigma`. Only a
//! lengthscale change forces a rebuild.
//!
//! For every candidate `d_j` the engine stores `v_j = L^-1 k(X, d_j)` and
//! the running sums `v_j . w` (the mean) and `|v_j|^2`; a new observation
//! appends one entry to each `v_j`.
//!
//! Thompson draws use pathwise conditioning: with `g` a joint prior draw over
//! the candidates and observed points (same jitter as the posterior),
//! `mu(D) + B sigma (g(D) - V^T L^-1 g(X))` has exactly the law of
//! `GP(mu_t, B^2 k_t)` restricted to `D`.

use rand::Rng;

use super::{resolve, DuplicateRule, Discretization, RefineConfig, Scored, Selection};
use crate::domain::BallDomain;
use crate::error::Result;
use crate::gp::{History, Posterior};
use crate::kernels::{cross_cov_unchecked, gram_matrix, HyperParams, MaternSpec, Smoothness};
use crate::linalg::{Cholesky, JitterPolicy};
use crate::points::PointSet;
use crate::scalar::{dot, Scalar};

const BLOCK: usize = 32;

#[derive(Debug, Clone, Default)]
struct Cand<T> {
    v: Vec<T>,
    mean: T,
    sumsq: T,
}

#[derive(Debug, Clone)]
struct PriorFactor<T> {
    points: PointSet<T>,
    chol: Cholesky<T>,
    of_candidate: Vec<usize>,
    of_history: Vec<usize>,
}

#[derive(Debug)]
pub(super) struct Engine<T: Scalar> {
    nu: Smoothness,
    jitter: JitterPolicy,
    unit: Posterior<T>,
    sigma: T,
    generation: u64,
    cands: Vec<Cand<T>>,
    /// Candidate index each history entry was selected from, if any.
    history_source: Vec<Option<usize>>,
    prior: Option<PriorFactor<T>>,
    rebuilds: usize,
    clamps: u64,
}

fn unit_spec<T: Scalar>(nu: Smoothness, lengthscale: T) -> MaternSpec<T> {
    MaternSpec::new(nu, HyperParams::new(T::one(), lengthscale).expect("lengthscale is positive"))
}

impl<T: Scalar> Engine<T> {
    pub(super) fn new(nu: Smoothness, params: HyperParams<T>, jitter: JitterPolicy, history: &History<T>) -> Result<Self> {
        let unit = Posterior::new(unit_spec(nu, params.lengthscale()), history.clone(), jitter)?;
        Ok(Self {
            nu,
            jitter,
            generation: unit.generation(),
            unit,
            sigma: params.sigma(),
            cands: Vec::new(),
            history_source: vec![None; history.len()],
            prior: None,
            rebuilds: 0,
            clamps: 0,
        })
    }

    pub(super) fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    pub(super) fn clamps(&self) -> u64 {
        self.clamps + self.unit.clamp_count()
    }

    pub(super) fn jitter_rel(&self) -> f64 {
        self.unit.jitter_rel()
    }

    pub(super) fn set_params(&mut self, params: HyperParams<T>) -> Result<()> {
        self.sigma = params.sigma();
        if params.lengthscale() != self.unit.spec().params.lengthscale() {
            let history = self.unit.history().clone();
            self.unit = Posterior::new(unit_spec(self.nu, params.lengthscale()), history, self.jitter)?;
            self.invalidate();
            self.rebuilds += 1;
        }
        Ok(())
    }

    fn invalidate(&mut self) {
        self.generation = self.unit.generation();
        self.cands.clear();
        self.prior = None;
    }

    pub(super) fn push(&mut self, x: &[T], y: T, candidate: Option<usize>) -> Result<()> {
        self.unit.push(x, y)?;
        self.history_source.push(candidate);
        if self.unit.generation() != self.generation {
            self.invalidate();
            self.rebuilds += 1;
        }
        Ok(())
    }

    /// Brings every candidate's whitened cross-covariance up to date.
    fn sync(&mut self, d: &PointSet<T>) {
        self.cands.resize_with(d.len(), Cand::default);
        let n = self.unit.len();
        let chol = self.unit.cholesky();
        let w = self.unit.whitened_targets();
        let xs = self.unit.history().points();
        let spec = self.unit.spec();
        for (b, block) in self.cands.chunks_mut(BLOCK).enumerate() {
            let start = block.iter().map(|c| c.v.len()).min().unwrap_or(n);
            for i in start..n {
                let row = chol.row(i);
                let (li, lii) = (&row[..i], row[i]);
                let xi = xs.row(i);
                for (k, c) in block.iter_mut().enumerate() {
                    if c.v.len() != i {
                        continue;
                    }
                    let kij = spec.between(xi, d.row(b * BLOCK + k));
                    let vi = (kij - dot(li, &c.v)) / lii;
                    c.v.push(vi);
                    c.mean += vi * w[i];
                    c.sumsq += vi * vi;
                }
            }
        }
    }

    fn unit_sd(&mut self, sumsq: T) -> T {
        let var = T::one() - sumsq;
        if var < T::zero() {
            self.clamps += 1;
            T::zero()
        } else {
            var.sqrt()
        }
    }

    pub(super) fn ucb(
        &mut self,
        disc: &Discretization<T>,
        bound: T,
        refine: &RefineConfig,
        domain: &BallDomain,
        rule: DuplicateRule,
    ) -> Result<Selection<T>> {
        let d = disc.points();
        self.sync(d);
        let scale = bound * self.sigma;
        let mut pool: Vec<Scored<T>> = Vec::with_capacity(d.len() + refine.max_evals);
        for j in 0..d.len() {
            let (mean, sumsq) = (self.cands[j].mean, self.cands[j].sumsq);
            let su = self.unit_sd(sumsq);
            pool.push(Scored {
                x: d.row(j).to_vec(),
                candidate: Some(j),
                score: mean + scale * su,
                mean,
                sd: self.sigma * su,
            });
        }
        let jbest = super::argmax_first(pool.iter().map(|s| s.score)).ok_or(crate::Error::ExhaustedCandidates)?;
        let candidate_best = pool[jbest].score;
        let search = refine.search(domain, d.len());
        let unit = &self.unit;
        let mut stats = Vec::new();
        let trail = search.maximize(domain, &pool[jbest].x.clone(), candidate_best, |batch| {
            let st = unit.mean_sd_batch(batch).expect("search stays in dimension");
            let out = st.iter().map(|&(m, s)| m + scale * s).collect();
            stats.extend(st);
            out
        });
        for ((x, score), (mean, su)) in trail.polled.into_iter().zip(stats) {
            pool.push(Scored {
                x,
                candidate: None,
                score,
                mean,
                sd: self.sigma * su,
            });
        }
        resolve(pool, candidate_best, self.unit.history(), rule)
    }

    /// Extends (or rebuilds) the joint prior factor over candidates and
    /// observed points.
    fn sync_prior(&mut self, d: &PointSet<T>) -> Result<()> {
        let spec = self.unit.spec().clone();
        let jitter_rel = self.unit.jitter_rel();
        let prior = self.prior.get_or_insert_with(|| PriorFactor {
            points: PointSet::new(d.dim()),
            chol: Cholesky::empty(T::one(), jitter_rel),
            of_candidate: Vec::new(),
            of_history: Vec::new(),
        });
        let mut failed = false;
        let mut add = |prior: &mut PriorFactor<T>, x: &[T]| -> usize {
            if !failed {
                let cov = cross_cov_unchecked(&spec, &prior.points, x);
                failed = prior.chol.push_row(&cov, T::one()).is_err();
            }
            prior.points.push(x).expect("dimension checked upstream");
            prior.points.len() - 1
        };
        for j in prior.of_candidate.len()..d.len() {
            let idx = add(prior, d.row(j));
            prior.of_candidate.push(idx);
        }
        let xs = self.unit.history().points();
        for i in prior.of_history.len()..xs.len() {
            let idx = match self.history_source[i] {
                Some(j) if j < prior.of_candidate.len() => prior.of_candidate[j],
                _ => add(prior, xs.row(i)),
            };
            prior.of_history.push(idx);
        }
        if failed {
            let k = gram_matrix(&spec, &prior.points);
            let from = prior.chol.jitter_rel() * self.jitter.factor;
            prior.chol = Cholesky::factor_escalating_from(&k, T::one(), &self.jitter, from)?;
        }
        Ok(())
    }

    /// One pathwise draw from `GP(mu_t, B^2 k_t)` over `D_t`.
    pub(super) fn ts_draw<R: Rng + ?Sized>(&mut self, d: &PointSet<T>, bound: T, rng: &mut R) -> Result<Vec<T>> {
        self.sync(d);
        self.sync_prior(d)?;
        let prior = self.prior.as_ref().expect("synced");
        let z: Vec<T> = (0..prior.points.len()).map(|_| T::standard_normal(rng)).collect();
        let g = prior.chol.mul_lower(&z);
        // top up when the posterior needed more jitter than the prior factor
        let extra = self.unit.jitter_rel() - prior.chol.jitter_rel();
        let mut gx: Vec<T> = prior.of_history.iter().map(|&i| g[i]).collect();
        if extra > 0.0 {
            let s = T::lit(extra.sqrt());
            for v in gx.iter_mut() {
                *v += s * T::standard_normal(rng);
            }
        }
        self.unit.cholesky().solve_lower_in_place(&mut gx);
        let scale = bound * self.sigma;
        Ok((0..d.len())
            .map(|j| {
                let c = &self.cands[j];
                c.mean + scale * (g[prior.of_candidate[j]] - dot(&c.v, &gx))
            })
            .collect())
    }

    pub(super) fn ts<R: Rng + ?Sized>(
        &mut self,
        disc: &Discretization<T>,
        bound: T,
        rng: &mut R,
        rule: DuplicateRule,
    ) -> Result<Selection<T>> {
        let d = disc.points();
        let draw = self.ts_draw(d, bound, rng)?;
        let candidate_best = draw.iter().copied().fold(T::neg_infinity(), T::max);
        let mut pool = Vec::with_capacity(d.len());
        for (j, score) in draw.into_iter().enumerate() {
            let (mean, sumsq) = (self.cands[j].mean, self.cands[j].sumsq);
            let su = self.unit_sd(sumsq);
            pool.push(Scored {
                x: d.row(j).to_vec(),
                candidate: Some(j),
                score,
                mean,
                sd: self.sigma * su,
            });
        }
        resolve(pool, candidate_best, self.unit.history(), rule)
    }
}
