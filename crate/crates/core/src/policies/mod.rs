//! GP-UCB and GP-TS acquisition loops over the unit-diameter ball.
//!
//! [`ucb_select`] and [`ts_select`] work from a fully conditioned
//! [`Posterior`] and are the reference definitions. [`run_policy`] drives the
//! same rules through an incremental engine whose per-round cost grows with
//! `|D_t| t` instead of `|D_t| t^2`; [`run_policy_reference`] re-conditions
//! from scratch every round and exists to cross-check it.

mod discretization;
mod engine;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use discretization::{build_discretization, Discretization, DiscretizationConfig};

use crate::analysis::{RegretTrace, RoundRecord, RunCounters};
use crate::domain::BallDomain;
use crate::error::{Error, Result};
use crate::gp::{History, Posterior};
use crate::hyperest::{estimate, EstimatorConfig, EstimatorKind, EvidenceTracker, ThetaBox};
use crate::kernels::{HyperParams, MaternSpec, Smoothness};
use crate::linalg::JitterPolicy;
use crate::scalar::Scalar;
use crate::search::PatternSearch;
use crate::testbed::{Objective, Optimum};

use engine::Engine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Ucb,
    Ts,
    /// Plays the known maximizer every round (for testing the accounting).
    Oracle,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ucb => "ucb",
            PolicyKind::Ts => "ts",
            PolicyKind::Oracle => "oracle",
        }
    }
}

/// What to do when the acquisition maximizer coincides with an observed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicateRule {
    /// Play the observed point again. The value is already known, so the
    /// history is left unchanged; the round still counts toward regret.
    #[default]
    Replay,
    /// Fall back to the best-scoring point that is not a duplicate.
    NextBest,
}

/// Bounded pattern search applied to the best UCB candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    /// Search stops once the step falls below this fraction of the
    /// candidate spacing `(vol / |D_t|)^(1/d)`.
    #[serde(default = "default_min_step_ratio")]
    pub min_step_ratio: f64,
}

fn default_max_evals() -> usize {
    200
}

fn default_min_step_ratio() -> f64 {
    1.0 / 64.0
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_evals: default_max_evals(),
            min_step_ratio: default_min_step_ratio(),
        }
    }
}

impl RefineConfig {
    fn search(&self, domain: &BallDomain, n_candidates: usize) -> PatternSearch {
        let h0 = (domain.volume() / n_candidates.max(1) as f64).powf(1.0 / domain.dim() as f64);
        PatternSearch {
            initial_step: h0,
            min_step: h0 * self.min_step_ratio,
            max_evals: self.max_evals,
        }
    }
}

/// Static settings of one optimization run.
#[derive(Debug, Clone)]
pub struct PolicyConfig<T> {
    pub kind: PolicyKind,
    /// RKHS-norm bound `B`.
    pub bound: T,
    /// Emulator smoothness.
    pub nu: Smoothness,
    pub estimator: EstimatorConfig<T>,
    pub theta_box: ThetaBox<T>,
    pub discretization: DiscretizationConfig,
    pub jitter: JitterPolicy,
    pub duplicates: DuplicateRule,
    pub refine: RefineConfig,
}

impl<T: Scalar> PolicyConfig<T> {
    /// Known hyperparameters, default discretization and refinement.
    pub fn known(kind: PolicyKind, bound: T, nu: Smoothness, params: HyperParams<T>) -> Self {
        Self {
            kind,
            bound,
            nu,
            estimator: EstimatorConfig::fixed(params),
            theta_box: ThetaBox::point(params),
            discretization: DiscretizationConfig::default(),
            jitter: JitterPolicy::default(),
            duplicates: DuplicateRule::default(),
            refine: RefineConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound >= T::zero() && self.bound.is_finite()) {
            return Err(Error::Config(format!("B = {} must be finite and >= 0", self.bound)));
        }
        self.discretization.validate()?;
        if !(self.jitter.base > 0.0 && self.jitter.base <= self.jitter.cap && self.jitter.factor > 1.0) {
            return Err(Error::Config(format!("invalid jitter policy {:?}", self.jitter)));
        }
        if self.estimator.grid_size == 0 {
            return Err(Error::Config("estimator grid_size must be >= 1".into()));
        }
        if let EstimatorKind::Fixed { params } = &self.estimator.kind {
            if !self.theta_box.contains(params) {
                return Err(Error::Config("fixed hyperparameters lie outside the box".into()));
            }
        }
        if self.refine.min_step_ratio <= 0.0 {
            return Err(Error::Config("refine.min_step_ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Evolving state of one run.
#[derive(Debug, Clone)]
pub struct PolicyState<T> {
    pub config: PolicyConfig<T>,
    pub domain: BallDomain,
    pub history: History<T>,
    pub disc: Discretization<T>,
    pub rng: ChaCha8Rng,
    pub theta_hat: HyperParams<T>,
}

impl<T: Scalar> PolicyState<T> {
    /// Fresh state; the discretization shift and the sampling stream are
    /// independent streams derived from `seed`.
    pub fn new(config: PolicyConfig<T>, domain: BallDomain, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut disc_rng = ChaCha8Rng::seed_from_u64(seed);
        disc_rng.set_stream(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let theta_hat = match &config.estimator.kind {
            EstimatorKind::Fixed { params } => *params,
            _ => config.theta_box.log_midpoint(),
        };
        Ok(Self {
            disc: Discretization::new(domain, config.discretization, &mut disc_rng),
            domain,
            history: History::in_domain(domain),
            rng,
            theta_hat,
            config,
        })
    }

    pub fn spec(&self) -> MaternSpec<T> {
        MaternSpec::new(self.config.nu, self.theta_hat)
    }

    /// Posterior under the current estimate.
    pub fn posterior(&self) -> Result<Posterior<T>> {
        Posterior::new(self.spec(), self.history.clone(), self.config.jitter)
    }
}

/// `sqrt(4 (d + 1) ln t)`.
pub fn exploration_width(t: usize, d: usize) -> f64 {
    assert!(t >= 1, "rounds are numbered from 1");
    (4.0 * (d as f64 + 1.0) * (t as f64).ln()).sqrt()
}

/// `mu_t(x) + B sigma_t(x)`.
pub fn ucb_score<T: Scalar>(post: &Posterior<T>, bound: T, x: &[T]) -> Result<T> {
    let (m, s) = post.mean_sd(x)?;
    Ok(m + bound * s)
}

/// A chosen point with the quantities recorded for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub x: Vec<T>,
    /// Index into `D_t` when the point is a candidate.
    pub candidate: Option<usize>,
    /// Acquisition value at `x` (UCB score or sampled value).
    pub score: T,
    /// Largest acquisition value over `D_t`.
    pub candidate_best: T,
    pub mean: T,
    pub sd: T,
    /// Set when `x` repeats this history entry.
    pub replay_of: Option<usize>,
}

struct Scored<T> {
    x: Vec<T>,
    candidate: Option<usize>,
    score: T,
    mean: T,
    sd: T,
}

fn argmax_first<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Picks the winner among scored points: the top score, or under
/// [`DuplicateRule::NextBest`] the top non-duplicate. `pool` must be in
/// tie-break order.
fn resolve<T: Scalar>(
    mut pool: Vec<Scored<T>>,
    candidate_best: T,
    history: &History<T>,
    rule: DuplicateRule,
) -> Result<Selection<T>> {
    let top = argmax_first(pool.iter().map(|s| s.score)).ok_or(Error::ExhaustedCandidates)?;
    let dup = history.find_duplicate(&pool[top].x).map(|(i, _)| i);
    let pick = match (dup, rule) {
        (None, _) | (Some(_), DuplicateRule::Replay) => top,
        (Some(_), DuplicateRule::NextBest) => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            // stable: equal scores keep tie-break order
            order.sort_by(|&a, &b| pool[b].score.partial_cmp(&pool[a].score).unwrap_or(std::cmp::Ordering::Equal));
            *order
                .iter()
                .find(|&&i| !history.is_duplicate(&pool[i].x))
                .ok_or(Error::ExhaustedCandidates)?
        }
    };
    let replay_of = if pick == top { dup } else { None };
    let s = pool.swap_remove(pick);
    Ok(Selection {
        x: s.x,
        candidate: s.candidate,
        score: s.score,
        candidate_best,
        mean: s.mean,
        sd: s.sd,
        replay_of,
    })
}

/// UCB maximizer: scores every candidate, refines the best one by pattern
/// search, and returns the best evaluated point (subject to the duplicate rule).
pub fn ucb_select<T: Scalar>(state: &PolicyState<T>, post: &Posterior<T>) -> Result<Selection<T>> {
    let cands = state.disc.points();
    if cands.is_empty() {
        return Err(Error::Precondition("discretization has not been built".into()));
    }
    let b = state.config.bound;
    let rows = cands.to_rows();
    let stats = post.mean_sd_batch(&rows)?;
    let mut pool: Vec<Scored<T>> = rows
        .into_iter()
        .zip(stats)
        .enumerate()
        .map(|(j, (x, (m, s)))| Scored {
            x,
            candidate: Some(j),
            score: m + b * s,
            mean: m,
            sd: s,
        })
        .collect();
    let jbest = argmax_first(pool.iter().map(|s| s.score)).expect("non-empty");
    let candidate_best = pool[jbest].score;
    let search = state.config.refine.search(&state.domain, cands.len());
    let mut stats_cache = Vec::new();
    let trail = search.maximize(&state.domain, &pool[jbest].x.clone(), candidate_best, |batch| {
        let st = post.mean_sd_batch(batch).expect("search stays in dimension");
        let out = st.iter().map(|&(m, s)| m + b * s).collect();
        stats_cache.extend(st);
        out
    });
    for ((x, v), (m, s)) in trail.polled.into_iter().zip(stats_cache) {
        pool.push(Scored {
            x,
            candidate: None,
            score: v,
            mean: m,
            sd: s,
        });
    }
    resolve(pool, candidate_best, post.history(), state.config.duplicates)
}

/// Thompson sample over `D_t` from `GP(mu_t, B^2 k_t)` and its argmax.
pub fn ts_select<T: Scalar>(state: &mut PolicyState<T>, post: &Posterior<T>) -> Result<Selection<T>> {
    let cands = state.disc.points();
    if cands.is_empty() {
        return Err(Error::Precondition("discretization has not been built".into()));
    }
    let b = state.config.bound;
    let sampler = post.joint_sampler(cands, usize::MAX)?;
    let draw = sampler.draw(b * b, &mut state.rng);
    let stats = post.mean_sd_batch(&cands.to_rows())?;
    let candidate_best = draw.iter().copied().fold(T::neg_infinity(), T::max);
    let pool = cands
        .iter()
        .zip(draw)
        .zip(stats)
        .enumerate()
        .map(|(j, ((x, v), (m, s)))| Scored {
            x: x.to_vec(),
            candidate: Some(j),
            score: v,
            mean: m,
            sd: s,
        })
        .collect();
    resolve(pool, candidate_best, post.history(), state.config.duplicates)
}

/// Round-`t` estimate bookkeeping shared by both drivers.
struct RefitClock {
    last: Option<usize>,
    refits: usize,
}

impl RefitClock {
    fn due<T: Scalar>(&mut self, config: &EstimatorConfig<T>, t: usize) -> bool {
        if config.is_fixed() || !config.refits_at(t, self.last) {
            return false;
        }
        self.last = Some(t);
        self.refits += 1;
        true
    }
}

fn record<T: Scalar>(
    rounds: &mut Vec<RoundRecord<T>>,
    t: usize,
    sel: &Selection<T>,
    f_x: T,
    f_star: T,
    theta: &HyperParams<T>,
    jitter: f64,
    started: Instant,
) {
    let inst = f_star - f_x;
    let cum = rounds.last().map_or(T::zero(), |r| r.cum_regret) + inst;
    rounds.push(RoundRecord {
        t,
        x: sel.x.clone(),
        f_x,
        inst_regret: inst,
        cum_regret: cum,
        sigma2_hat: theta.sigma2(),
        lengthscale_hat: theta.lengthscale(),
        post_sd_at_x: sel.sd,
        jitter,
        score: sel.score,
        candidate_best: sel.candidate_best,
        replayed: sel.replay_of.is_some(),
        seconds: started.elapsed().as_secs_f64(),
    });
}

fn finish<T: Scalar>(rounds: Vec<RoundRecord<T>>, optimum: &Optimum<T>, counters: RunCounters) -> RegretTrace<T> {
    let best_seen = rounds.iter().map(|r| r.f_x).fold(T::neg_infinity(), T::max);
    RegretTrace {
        rounds,
        f_star: optimum.value,
        x_star: optimum.x.clone(),
        oracle_slack: (best_seen - optimum.value).max(T::zero()),
        counters,
    }
}

/// Runs `horizon` rounds of the configured policy against `f`, whose
/// maximizer is `optimum`: estimate, condition, select, observe, append.
pub fn run_policy<T: Scalar>(
    state: &mut PolicyState<T>,
    f: &dyn Objective<T>,
    optimum: &Optimum<T>,
    horizon: usize,
) -> Result<RegretTrace<T>> {
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be >= 1".into()));
    }
    if f.dim() != state.domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.domain.dim(),
            found: f.dim(),
        });
    }
    let wall = Instant::now();
    let mut rounds = Vec::with_capacity(horizon);
    let mut counters = RunCounters::default();
    let t0 = state.history.len();

    if state.config.kind == PolicyKind::Oracle {
        for t in t0 + 1..=t0 + horizon {
            let started = Instant::now();
            let sel = Selection {
                x: optimum.x.clone(),
                candidate: None,
                score: optimum.value,
                candidate_best: optimum.value,
                mean: optimum.value,
                sd: T::zero(),
                replay_of: None,
            };
            let y = f.eval(&sel.x);
            record(&mut rounds, t, &sel, y, optimum.value, &state.theta_hat, 0.0, started);
        }
        counters.wall_seconds = wall.elapsed().as_secs_f64();
        return Ok(finish(rounds, optimum, counters));
    }

    let cfg = state.config.clone();
    let mut clock = RefitClock { last: None, refits: 0 };
    let mut tracker = (!cfg.estimator.is_fixed()).then(|| {
        let mut tr = EvidenceTracker::new(&cfg.estimator, cfg.nu, &cfg.theta_box, state.domain.dim(), cfg.jitter.base);
        for (x, &y) in state.history.points().iter().zip(state.history.values()) {
            tr.push(x, y).expect("history points have the domain dimension");
        }
        tr
    });
    let mut engine = Engine::new(cfg.nu, state.theta_hat, cfg.jitter, &state.history)?;

    for t in t0 + 1..=t0 + horizon {
        let started = Instant::now();
        let step = (|| -> Result<()> {
            if clock.due(&cfg.estimator, t) {
                let tr = tracker.as_ref().expect("tracker exists for estimated runs");
                state.theta_hat = tr.estimate(&cfg.estimator, &cfg.theta_box)?;
            }
            engine.set_params(state.theta_hat)?;
            state.disc.grow_to(t);
            let sel = match cfg.kind {
                PolicyKind::Ucb => engine.ucb(&state.disc, cfg.bound, &cfg.refine, &state.domain, cfg.duplicates)?,
                PolicyKind::Ts => engine.ts(&state.disc, cfg.bound, &mut state.rng, cfg.duplicates)?,
                PolicyKind::Oracle => unreachable!(),
            };
            let y = f.eval(&sel.x);
            let jitter = engine.jitter_rel();
            if sel.replay_of.is_none() {
                engine.push(&sel.x, y, sel.candidate)?;
                state.history.push(&sel.x, y)?;
                if let Some(tr) = tracker.as_mut() {
                    tr.push(&sel.x, y)?;
                }
            } else {
                counters.replays += 1;
            }
            counters.max_jitter = counters.max_jitter.max(jitter);
            record(&mut rounds, t, &sel, y, optimum.value, &state.theta_hat, jitter, started);
            Ok(())
        })();
        step.map_err(|e| e.at_round(t))?;
    }
    counters.refits = clock.refits;
    counters.rebuilds = engine.rebuilds();
    counters.clamps = engine.clamps();
    counters.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(finish(rounds, optimum, counters))
}

/// Same loop as [`run_policy`] but re-conditions a fresh posterior every
/// round and uses [`ucb_select`] / [`ts_select`] directly. `O(t^3)` per round.
pub fn run_policy_reference<T: Scalar>(
    state: &mut PolicyState<T>,
    f: &dyn Objective<T>,
    optimum: &Optimum<T>,
    horizon: usize,
) -> Result<RegretTrace<T>> {
    if state.config.kind == PolicyKind::Oracle {
        return run_policy(state, f, optimum, horizon);
    }
    let wall = Instant::now();
    let mut rounds = Vec::with_capacity(horizon);
    let mut counters = RunCounters::default();
    let mut clock = RefitClock { last: None, refits: 0 };
    let cfg = state.config.clone();
    let t0 = state.history.len();
    for t in t0 + 1..=t0 + horizon {
        let started = Instant::now();
        let step = (|| -> Result<()> {
            if clock.due(&cfg.estimator, t) {
                state.theta_hat = estimate(&cfg.estimator, cfg.nu, &cfg.theta_box, &state.history, cfg.jitter.base)?;
            }
            let post = state.posterior()?;
            state.disc.grow_to(t);
            let sel = match cfg.kind {
                PolicyKind::Ucb => ucb_select(state, &post)?,
                PolicyKind::Ts => ts_select(state, &post)?,
                PolicyKind::Oracle => unreachable!(),
            };
            let y = f.eval(&sel.x);
            if sel.replay_of.is_none() {
                state.history.push(&sel.x, y)?;
            } else {
                counters.replays += 1;
            }
            counters.clamps += post.clamp_count();
            counters.max_jitter = counters.max_jitter.max(post.jitter_rel());
            record(&mut rounds, t, &sel, y, optimum.value, &state.theta_hat, post.jitter_rel(), started);
            Ok(())
        })();
        step.map_err(|e| e.at_round(t))?;
    }
    counters.refits = clock.refits;
    counters.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(finish(rounds, optimum, counters))
}
