//! Trace CSVs and aggregate JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BoundMode, EstimatorChoice, Experiment, RunConfig, RunOutcome, SeedRun, Truth};
use crate::analysis::{
    discretization_audit, dyadic_horizons, fill_distance, fit_rate, mean_sd, regret_inequality_audit, seed_statistics,
    DiscretizationAudit, RateFit, RegretTrace,
};
use crate::error::{Error, Result};
use crate::policies::PolicyKind;

/// Horizons below this are excluded from the rate fit when enough remain.
const FIT_FROM: usize = 64;

/// Probes used for the discretization fill distance in the aggregate.
const FILL_PROBES: usize = 10_000;

/// `t,x_0,...,x_{d-1},f_x,inst_regret,cum_regret,sigma2_hat,lengthscale_hat,post_sd_at_x,jitter`.
pub fn trace_header(d: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..d).map(|i| format!("x_{i}")));
    cols.extend(
        ["f_x", "inst_regret", "cum_regret", "sigma2_hat", "lengthscale_hat", "post_sd_at_x", "jitter"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

/// One trace as CSV: a `# config_hash=... policy=... seed=...` line, the
/// header, then one row per round.
pub fn trace_csv(config_hash: &str, policy: PolicyKind, seed: u64, trace: &RegretTrace<f64>) -> String {
    let d = trace.x_star.len();
    let mut out = String::with_capacity(64 * (trace.len() + 2));
    let _ = writeln!(out, "# config_hash={config_hash} policy={} seed={seed}", policy.name());
    out.push_str(&trace_header(d));
    out.push('\n');
    for r in &trace.rounds {
        let _ = write!(out, "{}", r.t);
        for v in &r.x {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{},{}",
            r.f_x, r.inst_regret, r.cum_regret, r.sigma2_hat, r.lengthscale_hat, r.post_sd_at_x, r.jitter
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub f_x: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub sigma2_hat: f64,
    pub lengthscale_hat: f64,
    pub post_sd_at_x: f64,
    pub jitter: f64,
}

/// A parsed trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub config_hash: String,
    pub policy: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

/// Parses [`trace_csv`] output; errors name the 1-based line.
pub fn read_trace_csv(text: &str) -> Result<TraceFile> {
    let bad = |line: usize, msg: String| Error::Config(format!("line {line}: {msg}"));
    let mut lines = text.lines();
    let meta = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| bad(1, "missing '# config_hash=...' line".into()))?;
    let (mut hash, mut policy, mut seed) = (None, None, None);
    for kv in meta.split_whitespace() {
        match kv.split_once('=') {
            Some(("config_hash", v)) => hash = Some(v.to_string()),
            Some(("policy", v)) => policy = Some(v.to_string()),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            _ => return Err(bad(1, format!("unexpected field '{kv}'"))),
        }
    }
    let (config_hash, policy, seed) = match (hash, policy, seed) {
        (Some(h), Some(p), Some(s)) => (h, p, s),
        _ => return Err(bad(1, "metadata needs config_hash, policy and seed".into())),
    };

    let body: String = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| bad(2, e.to_string()))?.clone();
    let ncols = header.len();
    if ncols < 9 {
        return Err(bad(2, format!("header has {ncols} columns, expected at least 9")));
    }
    let d = ncols - 8;
    let expected = trace_header(d);
    let found = header.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(bad(2, format!("header '{found}' does not match '{expected}'")));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 3;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        if rec.len() != ncols {
            return Err(bad(line, format!("{} fields, expected {ncols}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("column '{}' is not a number: '{}'", &header[i], &rec[i])))
        };
        let t = rec[0]
            .parse::<usize>()
            .map_err(|_| bad(line, format!("round index '{}' is not an integer", &rec[0])))?;
        let x = (1..=d).map(num).collect::<Result<Vec<_>>>()?;
        rows.push(TraceRow {
            t,
            x,
            f_x: num(d + 1)?,
            inst_regret: num(d + 2)?,
            cum_regret: num(d + 3)?,
            sigma2_hat: num(d + 4)?,
            lengthscale_hat: num(d + 5)?,
            post_sd_at_x: num(d + 6)?,
            jitter: num(d + 7)?,
        });
    }
    if rows.is_empty() {
        return Err(bad(3, "no rounds".into()));
    }
    Ok(TraceFile {
        config_hash,
        policy,
        seed,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    fn of(vals: &[f64]) -> Self {
        Self {
            mean: mean_sd(vals).0,
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSummary {
    /// The materialized ground truth, enough to rebuild it.
    pub definition: serde_json::Value,
    pub norm: Option<f64>,
    pub bound: f64,
    /// `B` is a heuristic stand-in (prior draws have no norm to match).
    pub bound_is_heuristic: bool,
    pub f_star: f64,
    pub x_star: Vec<f64>,
    pub optimum_scan_budget: usize,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSummary {
    pub final_sigma2: Stat,
    pub final_lengthscale: Stat,
    /// Mean number of distinct estimates per seed.
    pub distinct_estimates: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterSummary {
    pub refits: usize,
    pub rebuilds: usize,
    pub replays: usize,
    pub clamps: u64,
    pub max_jitter: f64,
    pub max_oracle_slack: f64,
}

/// `R(T) - R(T/2)` against `R(T/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauCheck {
    pub half: usize,
    pub r_half: f64,
    pub r_full: f64,
    pub increment: f64,
    pub relative: f64,
}

impl PlateauCheck {
    /// `R(T) - R(T/2) <= rel R(T/2) + abs`.
    pub fn passes(&self, rel: f64, abs: f64) -> bool {
        self.increment <= rel * self.r_half + abs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretAuditSummary {
    pub seeds_holding: usize,
    pub seeds: usize,
    pub violating_rounds: usize,
    pub c_hat_max: f64,
    /// Window maxima of the first seed.
    pub c_hat_windows: Vec<(usize, f64)>,
}

/// Seed-aggregated results of one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub config: RunConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub function: FunctionSummary,
    pub horizons: Vec<usize>,
    pub regret_mean: Vec<f64>,
    pub regret_sd: Vec<f64>,
    pub regret_se: Vec<f64>,
    pub fit_horizons: Vec<usize>,
    pub rate: Option<RateFit>,
    /// Rate exponent for the emulator smoothness: `(d - nu) / d` or `0`.
    pub theoretical_exponent: f64,
    pub regime: String,
    pub plateau: Option<PlateauCheck>,
    pub theta_hat: ThetaSummary,
    pub counters: CounterSummary,
    pub discretization_audit: Option<DiscretizationAudit>,
    pub regret_audit: Option<RegretAuditSummary>,
    pub wall_seconds: Vec<f64>,
}

/// Builds the aggregate for the runs of `exp`.
pub fn aggregate(exp: &Experiment, runs: &[SeedRun]) -> Result<Aggregate> {
    let cfg = &exp.config;
    let traces: Vec<RegretTrace<f64>> = runs.iter().map(|r| r.trace.clone()).collect();
    let horizons = dyadic_horizons(cfg.horizon);
    let stats = seed_statistics(&traces, &horizons);
    let n = traces.len() as f64;
    let regret_mean: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let regret_sd: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let regret_se: Vec<f64> = regret_sd.iter().map(|s| s / n.sqrt()).collect();

    let tail: Vec<usize> = (0..horizons.len()).filter(|&i| horizons[i] >= FIT_FROM).collect();
    let idx: Vec<usize> = if tail.len() >= 4 { tail } else { (0..horizons.len()).collect() };
    let fit_horizons: Vec<usize> = idx.iter().map(|&i| horizons[i]).collect();
    let rate = if idx.len() >= 4 {
        Some(fit_rate(&idx.iter().map(|&i| regret_mean[i]).collect::<Vec<_>>(), &fit_horizons)?)
    } else {
        None
    };

    let d = cfg.d as f64;
    let nu = cfg.nu_emulator.nu();
    let (theoretical_exponent, regime) = if d > nu {
        ((d - nu) / d, "d>nu")
    } else {
        (0.0, "d<nu")
    };

    let plateau = (cfg.horizon >= 2).then(|| {
        let half = cfg.horizon / 2;
        let mean_at = |h: usize| traces.iter().map(|t| t.regret_at(h)).sum::<f64>() / n;
        let (r_half, r_full) = (mean_at(half), mean_at(cfg.horizon));
        PlateauCheck {
            half,
            r_half,
            r_full,
            increment: r_full - r_half,
            relative: if r_half > 0.0 { (r_full - r_half) / r_half } else { 0.0 },
        }
    });

    let finals = |f: &dyn Fn(&RegretTrace<f64>) -> f64| traces.iter().map(f).collect::<Vec<_>>();
    let last = |t: &RegretTrace<f64>| t.rounds.last().map(|r| (r.sigma2_hat, r.lengthscale_hat)).unwrap_or_default();
    let distinct = traces
        .iter()
        .map(|t| {
            let mut seen: Vec<(f64, f64)> = Vec::new();
            for r in &t.rounds {
                if !seen.contains(&(r.sigma2_hat, r.lengthscale_hat)) {
                    seen.push((r.sigma2_hat, r.lengthscale_hat));
                }
            }
            seen.len() as f64
        })
        .sum::<f64>()
        / n;
    let theta_hat = ThetaSummary {
        final_sigma2: Stat::of(&finals(&|t| last(t).0)),
        final_lengthscale: Stat::of(&finals(&|t| last(t).1)),
        distinct_estimates: distinct,
    };

    let counters = CounterSummary {
        refits: traces.iter().map(|t| t.counters.refits).sum(),
        rebuilds: traces.iter().map(|t| t.counters.rebuilds).sum(),
        replays: traces.iter().map(|t| t.counters.replays).sum(),
        clamps: traces.iter().map(|t| t.counters.clamps).sum(),
        max_jitter: traces.iter().map(|t| t.counters.max_jitter).fold(0.0, f64::max),
        max_oracle_slack: traces.iter().map(|t| t.oracle_slack).fold(0.0, f64::max),
    };

    let (definition, lipschitz) = match &exp.truth {
        Truth::Rkhs(f) => (serde_json::to_value(f)?, Some(f.lipschitz_bound())),
        Truth::Grid(g) => (
            serde_json::json!({
                "kind": "gp_draw",
                "spec": g.spec(),
                "resolution": cfg.function.resolution,
                "seed": cfg.function.seed,
                "grid_points": g.grid().len(),
            }),
            None,
        ),
    };
    let function = FunctionSummary {
        definition,
        norm: exp.norm,
        bound: exp.bound,
        bound_is_heuristic: exp.norm.is_none() && !matches!(cfg.bound, BoundMode::Fixed { .. }),
        f_star: exp.optimum.value,
        x_star: exp.optimum.x.clone(),
        optimum_scan_budget: exp.optimum.scan_budget,
        lipschitz,
    };

    let discretization_audit = match (lipschitz, runs.first()) {
        (Some(l), Some(run)) if cfg.policy != PolicyKind::Oracle && !run.disc.is_empty() => {
            let fill = fill_distance(run.disc.points(), &cfg.domain()?, FILL_PROBES)?;
            Some(discretization_audit(l, fill, cfg.horizon))
        }
        _ => None,
    };

    let known = cfg.estimator.kind == EstimatorChoice::Known && exp.norm.is_some() && cfg.nu_emulator == cfg.nu_truth;
    let regret_audit = if known && cfg.policy == PolicyKind::Ucb {
        let audits = traces
            .iter()
            .map(|t| regret_inequality_audit(t, exp.bound, nu))
            .collect::<Result<Vec<_>>>()?;
        Some(RegretAuditSummary {
            seeds_holding: audits.iter().filter(|a| a.holds).count(),
            seeds: audits.len(),
            violating_rounds: audits.iter().map(|a| a.violating_rounds.len()).sum(),
            c_hat_max: audits.iter().map(|a| a.c_hat).fold(0.0, f64::max),
            c_hat_windows: audits[0].c_hat_windows.clone(),
        })
    } else {
        None
    };

    Ok(Aggregate {
        config: cfg.clone(),
        config_hash: exp.config_hash.clone(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        function,
        horizons,
        regret_mean,
        regret_sd,
        regret_se,
        fit_horizons,
        rate,
        theoretical_exponent,
        regime: regime.to_string(),
        plateau,
        theta_hat,
        counters,
        discretization_audit,
        regret_audit,
        wall_seconds: traces.iter().map(|t| t.counters.wall_seconds).collect(),
    })
}

/// Writes `config.json`, one `trace_seed<k>.csv` per seed and
/// `aggregate.json` into `dir`; returns the paths written.
pub fn write_outcome(dir: &Path, exp: &Experiment, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let config_path = dir.join("config.json");
    fs::write(&config_path, exp.config.to_json()?)?;
    written.push(config_path);
    for run in &outcome.runs {
        let path = dir.join(format!("trace_seed{}.csv", run.seed));
        fs::write(&path, trace_csv(&exp.config_hash, exp.config.policy, run.seed, &run.trace))?;
        written.push(path);
    }
    let agg_path = dir.join("aggregate.json");
    fs::write(&agg_path, serde_json::to_string_pretty(&outcome.aggregate)?)?;
    written.push(agg_path);
    Ok(written)
}
