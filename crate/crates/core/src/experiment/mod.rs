//! Run configurations, seed-parallel execution, and result files.

mod bench;
mod output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bench::{run_table1, table1_cells, BenchCell, BenchCheck, BenchReport, BenchRow, BenchScale, CellStatus};
pub use output::{
    aggregate, read_trace_csv, trace_csv, trace_header, write_outcome, Aggregate, CounterSummary, FunctionSummary,
    PlateauCheck, Stat, ThetaSummary, TraceFile, TraceRow,
};

use crate::analysis::RegretTrace;
use crate::domain::BallDomain;
use crate::error::{Error, Result};
use crate::hyperest::{EstimatorConfig, EstimatorKind, LogPrior, ThetaBox};
use crate::kernels::{HyperParams, MaternSpec, Smoothness};
use crate::linalg::JitterPolicy;
use crate::policies::{
    run_policy, Discretization, DiscretizationConfig, DuplicateRule, PolicyConfig, PolicyKind, PolicyState,
    RefineConfig,
};
use crate::testbed::{
    default_scan_budget, draw_prior_function, find_optimum, GridFunction, Objective, Optimum, RkhsFunction,
};

/// How `B` is chosen from the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundMode {
    /// `B = ||f||` (or the heuristic bound for a prior draw).
    ExactNorm,
    MultipleOfNorm { factor: f64 },
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    /// The ground truth's own hyperparameters.
    Known,
    Fixed,
    MleGrid,
    MapGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    pub kind: EstimatorChoice,
    /// Required for `fixed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<HyperParams<f64>>,
    /// Required for `mle_grid` and `map_grid`.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub theta_box: Option<ThetaBox<f64>>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub prior: LogPrior<f64>,
    #[serde(default = "default_refit_period")]
    pub refit_period: usize,
    #[serde(default)]
    pub refit_growth: f64,
}

fn default_grid_size() -> usize {
    16
}

fn default_refit_period() -> usize {
    1
}

impl EstimatorBlock {
    pub fn known() -> Self {
        Self {
            kind: EstimatorChoice::Known,
            params: None,
            theta_box: None,
            grid_size: default_grid_size(),
            prior: LogPrior::Uniform,
            refit_period: default_refit_period(),
            refit_growth: 0.0,
        }
    }

    pub fn mle_grid(theta_box: ThetaBox<f64>) -> Self {
        Self {
            kind: EstimatorChoice::MleGrid,
            theta_box: Some(theta_box),
            ..Self::known()
        }
    }

    fn resolve(&self, truth: HyperParams<f64>) -> Result<(EstimatorConfig<f64>, ThetaBox<f64>)> {
        let need_box = || {
            self.theta_box
                .ok_or_else(|| Error::Config(format!("estimator {:?} requires a box", self.kind)))
        };
        let mut cfg = match self.kind {
            EstimatorChoice::Known => EstimatorConfig::fixed(truth),
            EstimatorChoice::Fixed => EstimatorConfig::fixed(
                self.params
                    .ok_or_else(|| Error::Config("estimator fixed requires params".into()))?,
            ),
            EstimatorChoice::MleGrid => EstimatorConfig::mle_grid(),
            EstimatorChoice::MapGrid => EstimatorConfig::map_grid(self.prior.clone()),
        };
        cfg.grid_size = self.grid_size;
        cfg.refit_period = self.refit_period;
        cfg.refit_growth = self.refit_growth;
        let theta_box = match (&cfg.kind, self.theta_box) {
            (_, Some(b)) => b,
            (EstimatorKind::Fixed { params }, None) => ThetaBox::point(*params),
            _ => need_box()?,
        };
        Ok((cfg, theta_box))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    /// Finite kernel expansion with exact norm.
    Rkhs,
    /// Joint prior draw on a lattice.
    GpDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionBlock {
    pub kind: FunctionKind,
    #[serde(default = "default_n_centers")]
    pub n_centers: usize,
    #[serde(default = "one")]
    pub coeff_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_norm: Option<f64>,
    pub seed: u64,
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default = "one")]
    pub lengthscale: f64,
    /// Lattice points per axis for `gp_draw`.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_n_centers() -> usize {
    8
}

fn one() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    1001
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub policy: PolicyKind,
    pub d: usize,
    pub nu_emulator: Smoothness,
    pub nu_truth: Smoothness,
    #[serde(rename = "B")]
    pub bound: BoundMode,
    pub estimator: EstimatorBlock,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub function: FunctionBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub jitter: JitterPolicy,
    #[serde(default)]
    pub duplicates: DuplicateRule,
    #[serde(default)]
    pub refine: RefineConfig,
}

impl RunConfig {
    /// Parses JSON; errors carry the line and column of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical pretty JSON; parsing it back reproduces the same bytes.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the compact serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if self.horizon == 0 {
            return bad("T must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        match self.bound {
            BoundMode::MultipleOfNorm { factor } if !(factor >= 1.0 && factor.is_finite()) => {
                return bad(format!("B factor {factor} must be finite and >= 1"));
            }
            BoundMode::Fixed { value } if !(value >= 0.0 && value.is_finite()) => {
                return bad(format!("B = {value} must be finite and >= 0"));
            }
            _ => {}
        }
        if self.function.kind == FunctionKind::Rkhs && self.nu_emulator > self.nu_truth {
            return bad(format!(
                "emulator nu = {} exceeds the true smoothness {}",
                self.nu_emulator, self.nu_truth
            ));
        }
        if self.function.n_centers == 0 {
            return bad("function.n_centers must be >= 1".into());
        }
        HyperParams::new(self.function.sigma2, self.function.lengthscale)
            .map_err(|e| Error::Config(format!("function: {e}")))?;
        self.discretization.validate()?;
        self.estimator.resolve(self.truth_params()?)?;
        Ok(())
    }

    fn truth_params(&self) -> Result<HyperParams<f64>> {
        HyperParams::new(self.function.sigma2, self.function.lengthscale)
    }

    pub fn domain(&self) -> Result<BallDomain> {
        BallDomain::new(self.d)
    }
}

/// Ground truth of an experiment.
#[derive(Debug)]
pub enum Truth {
    Rkhs(RkhsFunction<f64>),
    Grid(GridFunction<f64>),
}

impl Truth {
    pub fn objective(&self) -> &dyn Objective<f64> {
        match self {
            Truth::Rkhs(f) => f,
            Truth::Grid(g) => g,
        }
    }
}

/// A validated configuration with its ground truth, optimum and `B`.
#[derive(Debug)]
pub struct Experiment {
    pub config: RunConfig,
    pub config_hash: String,
    pub truth: Truth,
    pub optimum: Optimum<f64>,
    pub bound: f64,
    /// Exact RKHS norm when the truth is an expansion.
    pub norm: Option<f64>,
    pub policy: PolicyConfig<f64>,
}

/// Output of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: RegretTrace<f64>,
    pub disc: Discretization<f64>,
}

/// All seeds of one experiment.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
}

impl Experiment {
    pub fn prepare(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let domain = config.domain()?;
        let truth_params = config.truth_params()?;
        let truth_spec = MaternSpec::new(config.nu_truth, truth_params);
        let mut rng = ChaCha8Rng::seed_from_u64(config.function.seed);
        let f = &config.function;
        let (truth, optimum, norm, natural) = match f.kind {
            FunctionKind::Rkhs => {
                let g = RkhsFunction::random(truth_spec, &domain, f.n_centers, f.coeff_scale, f.target_norm, &mut rng)?;
                let opt = g.optimum().clone();
                let n = g.norm();
                (Truth::Rkhs(g), opt, Some(n), n)
            }
            FunctionKind::GpDraw => {
                let g = draw_prior_function(truth_spec, &domain, f.resolution, &mut rng)?;
                let opt = find_optimum(&g, &domain, default_scan_budget(domain.dim()))?;
                let b = g.heuristic_bound();
                (Truth::Grid(g), opt, None, b)
            }
        };
        let bound = match config.bound {
            BoundMode::ExactNorm => natural,
            BoundMode::MultipleOfNorm { factor } => factor * natural,
            BoundMode::Fixed { value } => value,
        };
        if let Some(n) = norm {
            if bound < n {
                return Err(Error::Config(format!("B = {bound} is below the RKHS norm {n} of the ground truth")));
            }
        }
        let (estimator, theta_box) = config.estimator.resolve(truth_params)?;
        let policy = PolicyConfig {
            kind: config.policy,
            bound,
            nu: config.nu_emulator,
            estimator,
            theta_box,
            discretization: config.discretization,
            jitter: config.jitter,
            duplicates: config.duplicates,
            refine: config.refine,
        };
        policy.validate()?;
        Ok(Self {
            config_hash: config.hash()?,
            config,
            truth,
            optimum,
            bound,
            norm,
            policy,
        })
    }

    /// One seed; the policy stream is seeded with `seed`.
    pub fn run_seed(&self, seed: u64) -> Result<SeedRun> {
        let mut state = PolicyState::new(self.policy.clone(), self.config.domain()?, seed)?;
        let trace = run_policy(&mut state, self.truth.objective(), &self.optimum, self.config.horizon)?;
        Ok(SeedRun {
            seed,
            trace,
            disc: state.disc,
        })
    }

    /// Every configured seed (shifted by `seed_offset`) on the current rayon
    /// pool, then the aggregate.
    pub fn run(&self, seed_offset: u64) -> Result<RunOutcome> {
        let seeds: Vec<u64> = self.config.seeds.iter().map(|s| s.wrapping_add(seed_offset)).collect();
        let runs = seeds
            .par_iter()
            .map(|&seed| {
                self.run_seed(seed).map_err(|e| Error::Seed {
                    seed,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let aggregate = aggregate(self, &runs)?;
        Ok(RunOutcome { runs, aggregate })
    }
}
