//! The regime matrix: rate and plateau checks per (d, nu, policy) cell.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    Aggregate, BoundMode, EstimatorBlock, Experiment, FunctionBlock, FunctionKind, PlateauCheck, RunConfig, RunOutcome,
};
use crate::error::Result;
use crate::hyperest::ThetaBox;
use crate::kernels::Smoothness;
use crate::linalg::JitterPolicy;
use crate::policies::{DiscretizationConfig, DuplicateRule, PolicyKind, RefineConfig};

/// Size of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchScale {
    pub horizon: usize,
    pub seeds: usize,
    pub function_seed: u64,
}

impl Default for BenchScale {
    fn default() -> Self {
        Self {
            horizon: 2048,
            seeds: 20,
            function_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum BenchCheck {
    /// Fitted slope at most `max`.
    Slope { max: f64 },
    /// Fitted slope at most the reference cell's slope plus `slack`.
    SlopeRelative { reference: String, slack: f64 },
    /// `R(T) - R(T/2) <= rel R(T/2) + abs`.
    Plateau { rel: f64, abs: f64 },
    /// Final seed-mean regret at most `factor` times the reference cell's.
    FinalRatio { reference: String, factor: f64 },
}

#[derive(Debug, Clone)]
pub struct BenchCell {
    pub id: String,
    pub regime: String,
    /// `None` marks a cell that is not run.
    pub config: Option<RunConfig>,
    pub checks: Vec<BenchCheck>,
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellStatus {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellStatus::Pass => "PASS",
            CellStatus::Fail => "FAIL",
            CellStatus::Skipped => "SKIPPED",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    pub regime: String,
    pub policy: String,
    pub estimator: String,
    pub slope: Option<f64>,
    pub plateau: Option<PlateauCheck>,
    pub final_regret: Option<f64>,
    pub theoretical_exponent: Option<f64>,
    pub status: CellStatus,
    pub details: Vec<String>,
}

#[derive(Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Cell id with its experiment and outcome, for every cell that ran.
    pub outcomes: Vec<(String, Experiment, RunOutcome)>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != CellStatus::Fail)
    }

    pub fn aggregate(&self, id: &str) -> Option<&Aggregate> {
        self.outcomes.iter().find(|(c, _, _)| c == id).map(|(_, _, o)| &o.aggregate)
    }

    pub fn row(&self, id: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:<6} {:<6} {:<9} {:>8} {:>10} {:>7}  status",
            "cell", "regime", "policy", "estimator", "slope", "plateau", "theory"
        )?;
        let opt = |v: Option<f64>, w: usize| v.map_or(format!("{:>w$}", "-"), |x| format!("{x:>w$.4}"));
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:<6} {:<6} {:<9} {} {} {}  {}",
                r.id,
                r.regime,
                r.policy,
                r.estimator,
                opt(r.slope, 8),
                opt(r.plateau.map(|p| p.relative), 10),
                opt(r.theoretical_exponent, 7),
                r.status
            )?;
            for d in &r.details {
                writeln!(f, "    {d}")?;
            }
        }
        Ok(())
    }
}

fn base_config(policy: PolicyKind, nu: Smoothness, scale: &BenchScale) -> RunConfig {
    RunConfig {
        policy,
        d: 1,
        nu_emulator: nu,
        nu_truth: nu,
        bound: BoundMode::ExactNorm,
        estimator: EstimatorBlock::known(),
        discretization: DiscretizationConfig::default(),
        horizon: scale.horizon,
        seeds: (0..scale.seeds as u64).collect(),
        function: FunctionBlock {
            kind: FunctionKind::Rkhs,
            n_centers: 8,
            coeff_scale: 1.0,
            target_norm: Some(1.0),
            seed: scale.function_seed,
            sigma2: 1.0,
            lengthscale: 1.0,
            resolution: 1001,
        },
        output_dir: None,
        jitter: JitterPolicy::default(),
        duplicates: DuplicateRule::default(),
        refine: RefineConfig::default(),
    }
}

/// The matrix: UCB and TS at `nu = 1/2` (rate) and `nu = 3/2` (plateau),
/// UCB with grid MLE at `nu = 1/2`, and the `d = nu` cell marked skipped.
pub fn table1_cells(scale: &BenchScale) -> Vec<BenchCell> {
    let cell = |id: &str, regime: &str, config: RunConfig, checks: Vec<BenchCheck>| BenchCell {
        id: id.into(),
        regime: regime.into(),
        config: Some(config),
        checks,
        skip_reason: None,
    };
    let mut mle = base_config(PolicyKind::Ucb, Smoothness::HALF, scale);
    mle.estimator = EstimatorBlock::mle_grid(ThetaBox::new([0.25, 4.0], [0.25, 4.0]).expect("valid box"));
    vec![
        cell(
            "ucb-nu1/2",
            "d>nu",
            base_config(PolicyKind::Ucb, Smoothness::HALF, scale),
            vec![BenchCheck::Slope { max: 0.65 }],
        ),
        cell(
            "ts-nu1/2",
            "d>nu",
            base_config(PolicyKind::Ts, Smoothness::HALF, scale),
            vec![BenchCheck::SlopeRelative {
                reference: "ucb-nu1/2".into(),
                slack: 0.15,
            }],
        ),
        cell(
            "ucb-nu3/2",
            "d<nu",
            base_config(PolicyKind::Ucb, Smoothness::THREE_HALVES, scale),
            vec![BenchCheck::Plateau { rel: 0.05, abs: 1e-6 }],
        ),
        cell(
            "ts-nu3/2",
            "d<nu",
            base_config(PolicyKind::Ts, Smoothness::THREE_HALVES, scale),
            vec![BenchCheck::Plateau { rel: 0.10, abs: 1e-6 }],
        ),
        cell(
            "ucb-mle-nu1/2",
            "d>nu",
            mle,
            vec![
                BenchCheck::Slope { max: 0.75 },
                BenchCheck::FinalRatio {
                    reference: "ucb-nu1/2".into(),
                    factor: 3.0,
                },
            ],
        ),
        BenchCell {
            id: "d=nu".into(),
            regime: "d=nu".into(),
            config: None,
            checks: Vec::new(),
            skip_reason: Some("requires integer nu; only half-integer Matern kernels are supported".into()),
        },
    ]
}

fn estimator_label(cfg: &RunConfig) -> String {
    serde_json::to_value(cfg.estimator.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Runs every cell on the current rayon pool and evaluates the checks.
pub fn run_table1(cells: &[BenchCell], seed_offset: u64) -> Result<BenchReport> {
    let ran: Vec<(String, Experiment, RunOutcome)> = cells
        .par_iter()
        .filter_map(|c| c.config.clone().map(|cfg| (c.id.clone(), cfg)))
        .map(|(id, cfg)| {
            let exp = Experiment::prepare(cfg)?;
            let out = exp.run(seed_offset)?;
            Ok((id, exp, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let agg = |id: &str| ran.iter().find(|(c, _, _)| c == id).map(|(_, _, o)| &o.aggregate);

    let mut rows = Vec::new();
    for c in cells {
        let Some(cfg) = &c.config else {
            rows.push(BenchRow {
                id: c.id.clone(),
                regime: c.regime.clone(),
                policy: "-".into(),
                estimator: "-".into(),
                slope: None,
                plateau: None,
                final_regret: None,
                theoretical_exponent: None,
                status: CellStatus::Skipped,
                details: c.skip_reason.iter().cloned().collect(),
            });
            continue;
        };
        let a = agg(&c.id).expect("every configured cell ran");
        let slope = a.rate.map(|r| r.slope);
        let final_regret = a.regret_mean.last().copied();
        let mut ok = true;
        let mut details = Vec::new();
        for check in &c.checks {
            let (pass, line) = match check {
                BenchCheck::Slope { max } => {
                    let s = slope.unwrap_or(f64::NAN);
                    (s <= *max, format!("slope {s:.4} <= {max}"))
                }
                BenchCheck::SlopeRelative { reference, slack } => {
                    let s = slope.unwrap_or(f64::NAN);
                    let r = agg(reference).and_then(|a| a.rate).map_or(f64::NAN, |r| r.slope);
                    (s <= r + slack, format!("slope {s:.4} <= {reference} slope {r:.4} + {slack}"))
                }
                BenchCheck::Plateau { rel, abs } => match a.plateau {
                    Some(p) => (
                        p.passes(*rel, *abs),
                        format!(
                            "R({}) - R({}) = {:.4e} <= {rel} R({}) + {abs:e} = {:.4e}",
                            cfg.horizon,
                            p.half,
                            p.increment,
                            p.half,
                            rel * p.r_half + abs
                        ),
                    ),
                    None => (false, "horizon too short for a plateau check".into()),
                },
                BenchCheck::FinalRatio { reference, factor } => {
                    let mine = final_regret.unwrap_or(f64::NAN);
                    let theirs = agg(reference).and_then(|a| a.regret_mean.last().copied()).unwrap_or(f64::NAN);
                    (
                        mine <= factor * theirs,
                        format!("R(T) {mine:.4} <= {factor} x {reference} R(T) {theirs:.4}"),
                    )
                }
            };
            ok &= pass;
            details.push(format!("{} {line}", if pass { "ok  " } else { "FAIL" }));
        }
        rows.push(BenchRow {
            id: c.id.clone(),
            regime: c.regime.clone(),
            policy: cfg.policy.name().into(),
            estimator: estimator_label(cfg),
            slope,
            plateau: a.plateau,
            final_regret,
            theoretical_exponent: Some(a.theoretical_exponent),
            status: if ok { CellStatus::Pass } else { CellStatus::Fail },
            details,
        });
    }
    Ok(BenchReport { rows, outcomes: ran })
}
