//! Acceptance criteria at full scale. Prints one line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use noisefree_bo::analysis::{
    concentration_suite, distance_sum_suite, dyadic_horizons, fit_rate, gaussian_tail_suite, thompson_band_suite,
    ConcentrationConfig, DistanceSumConfig, ThompsonBandConfig,
};
use noisefree_bo::experiment::{table1_cells, trace_csv, write_outcome, BenchScale, Experiment, RunConfig, RunOutcome};
use noisefree_bo::gp::{History, Posterior};
use noisefree_bo::kernels::{matern_eval, HyperParams, MaternSpec, Smoothness};
use noisefree_bo::linalg::JitterPolicy;
use noisefree_bo::testbed::{Objective, RkhsFunction};
use noisefree_bo::BallDomain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn interpolation() -> Verdict {
    let nus = [Smoothness::HALF, Smoothness::THREE_HALVES, Smoothness::FIVE_HALVES];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_mean, mut worst_sd) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let d = 1 + i % 2;
        let nu = nus[i % 3];
        let t = rng.random_range(1..=100);
        let dom = BallDomain::new(d).unwrap();
        let sigma2: f64 = rng.random_range(0.5..2.0);
        let spec = MaternSpec::new(nu, HyperParams::new(sigma2, rng.random_range(0.1..1.0)).unwrap());
        let f = RkhsFunction::random(spec.clone(), &dom, 10, 1.0, None, &mut rng).unwrap();
        let mut h = History::in_domain(dom);
        while h.len() < t {
            let x: Vec<f64> = dom.sample_uniform(&mut rng);
            if !h.is_duplicate(&x) {
                h.push(&x, f.eval(&x)).unwrap();
            }
        }
        let post = Posterior::new(spec, h.clone(), JitterPolicy::default()).unwrap();
        let ymax = h.values().iter().fold(1.0f64, |m, y| m.max(y.abs()));
        for (x, &y) in h.points().iter().zip(h.values()) {
            let (m, s) = post.mean_sd(x).unwrap();
            worst_mean = worst_mean.max((m - y).abs() / ymax);
            worst_sd = worst_sd.max(s / sigma2.sqrt());
        }
    }

    // One observation: mean k(x, x0) y0 / (sigma^2 (1 + jitter)), variance
    // sigma^2 - k(x, x0)^2 / (sigma^2 (1 + jitter)).
    let mut worst_closed = 0.0f64;
    for (nu, sigma2, lengthscale, x0, y0) in [
        (Smoothness::HALF, 1.0, 1.0, 0.0, 1.0),
        (Smoothness::THREE_HALVES, 2.0, 0.3, 0.1, -1.5),
        (Smoothness::FIVE_HALVES, 0.7, 0.5, -0.4, 3.0),
    ] {
        let spec = MaternSpec::new(nu, HyperParams::new(sigma2, lengthscale).unwrap());
        for jitter in [JitterPolicy::default(), JitterPolicy::default().with_base(1e-16)] {
            let h = History::from_observations(1, [([x0], y0)]).unwrap();
            let post = Posterior::new(spec.clone(), h, jitter).unwrap();
            let denom = sigma2 * (1.0 + post.jitter_rel());
            for q in [-0.5, -0.2, 0.0, 0.33, 0.5] {
                let k = matern_eval(&spec, f64::abs(q - x0)).unwrap();
                let (m, s) = post.mean_sd(&[q]).unwrap();
                worst_closed = worst_closed.max((m - k * y0 / denom).abs());
                worst_closed = worst_closed.max((s * s - (sigma2 - k * k / denom)).abs());
            }
        }
    }
    verdict(
        worst_mean <= 1e-6 && worst_sd <= 1e-4 && worst_closed <= 1e-10,
        format!(
            "max |mu - y| / max(1, |y|) = {worst_mean:.2e} (<= 1e-6), max sd / sigma = {worst_sd:.2e} (<= 1e-4), \
             1-point closed form error {worst_closed:.2e} (<= 1e-10)"
        ),
    )
}

fn suite(report: noisefree_bo::analysis::SuiteReport) -> Verdict {
    verdict(report.passed, report.lines.join("; "))
}

/// Seed-mean cumulative regret at the dyadic horizons from 64 to `T`.
fn seed_means(outcome: &RunOutcome, horizon: usize) -> (Vec<usize>, Vec<f64>) {
    let hs: Vec<usize> = dyadic_horizons(horizon).into_iter().filter(|&h| h >= 64).collect();
    let n = outcome.runs.len() as f64;
    let means = hs
        .iter()
        .map(|&h| outcome.runs.iter().map(|r| r.trace.regret_at(h)).sum::<f64>() / n)
        .collect();
    (hs, means)
}

fn slope(outcome: &RunOutcome, horizon: usize) -> f64 {
    let (hs, means) = seed_means(outcome, horizon);
    fit_rate(&means, &hs).map_or(f64::NAN, |f| f.slope)
}

/// `(R(T) - R(T/2), R(T/2))` from the seed means.
fn plateau(outcome: &RunOutcome, horizon: usize) -> (f64, f64) {
    let (_, means) = seed_means(outcome, horizon);
    let n = means.len();
    (means[n - 1] - means[n - 2], means[n - 2])
}

struct Cell {
    outcome: RunOutcome,
    horizon: usize,
    seeds: usize,
}

fn run_cell(id: &str, scale: &BenchScale) -> Cell {
    let cell = table1_cells(scale)
        .into_iter()
        .find(|c| c.id == id)
        .unwrap_or_else(|| panic!("no cell {id}"));
    let cfg = cell.config.expect("cell runs");
    let exp = Experiment::prepare(cfg).unwrap();
    let outcome = exp.run(0).unwrap();
    Cell {
        outcome,
        horizon: scale.horizon,
        seeds: scale.seeds,
    }
}

fn determinism() -> Verdict {
    let text = r#"{
  "policy": "ts", "d": 2, "nu_emulator": 1.5, "nu_truth": 2.5,
  "B": {"mode": "multiple_of_norm", "factor": 1.5},
  "estimator": {"kind": "mle_grid", "box": {"sigma2_range": [0.25, 4.0], "lengthscale_range": [0.25, 4.0]}, "grid_size": 8},
  "T": 60, "seeds": [3, 11],
  "function": {"kind": "rkhs", "n_centers": 6, "target_norm": 1.0, "seed": 21}
}"#;
    let mut files = Vec::new();
    for _ in 0..2 {
        let exp = Experiment::prepare(RunConfig::from_json(text).unwrap()).unwrap();
        let out = exp.run(0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outcome(dir.path(), &exp, &out).unwrap();
        let mut bytes = Vec::new();
        for s in [3, 11] {
            bytes.push(std::fs::read(dir.path().join(format!("trace_seed{s}.csv"))).unwrap());
        }
        let direct: Vec<String> = out
            .runs
            .iter()
            .map(|r| trace_csv(&exp.config_hash, exp.config.policy, r.seed, &r.trace))
            .collect();
        files.push((bytes, direct));
    }
    let same = files[0] == files[1];
    verdict(
        same,
        format!("two runs of a 2-seed TS + MLE config: trace CSVs {}", if same { "byte-identical" } else { "DIFFER" }),
    )
}

fn main() -> ExitCode {
    let scale = BenchScale::default();
    let mut results: Vec<(usize, &str, Verdict, Duration)> = Vec::new();
    let mut record = |n: usize, name: &'static str, limit: Duration, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let mut v = f();
        let elapsed = start.elapsed();
        if elapsed > limit {
            v.passed = false;
            v.detail.push_str(&format!("; runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
        }
        println!(
            "criterion {n:>2} [{}] {name}: {} ({:.1}s)",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
        results.push((n, name, v, elapsed));
    };

    record(1, "interpolation and posterior correctness", minutes(1), &mut interpolation);
    record(2, "concentration inequality", minutes(5), &mut || {
        suite(concentration_suite(&ConcentrationConfig::default()).unwrap())
    });
    record(3, "distance-sum bound", minutes(2), &mut || {
        suite(distance_sum_suite(&DistanceSumConfig::default()).unwrap())
    });
    record(4, "Thompson band event probability", minutes(2), &mut || {
        suite(thompson_band_suite(&ThompsonBandConfig::default()).unwrap())
    });
    record(5, "Gaussian tail constant", Duration::from_secs(10), &mut || {
        suite(gaussian_tail_suite(1_000_000, 7))
    });

    let mut ucb_cell = None;
    record(6, "rate regime d > nu (GP-UCB)", minutes(30), &mut || {
        let cell = run_cell("ucb-nu1/2", &scale);
        let s = slope(&cell.outcome, cell.horizon);
        let v = verdict(
            s <= 0.65 && cell.seeds >= 20,
            format!("{} seeds, T = {}: fitted slope {s:.4} (<= 0.65; theory 0.5)", cell.seeds, cell.horizon),
        );
        ucb_cell = Some(cell);
        v
    });
    let ucb = ucb_cell.expect("criterion 6 ran");
    let ucb_slope = slope(&ucb.outcome, ucb.horizon);

    record(7, "bounded regret d < nu (GP-UCB)", minutes(30), &mut || {
        let cell = run_cell("ucb-nu3/2", &scale);
        let (inc, half) = plateau(&cell.outcome, cell.horizon);
        let limit = 0.05 * half + 1e-6;
        verdict(
            inc <= limit,
            format!("R(2048) - R(1024) = {inc:.4e} (<= 0.05 R(1024) + 1e-6 = {limit:.4e})"),
        )
    });

    record(8, "GP-TS against GP-UCB", minutes(45), &mut || {
        let rate = run_cell("ts-nu1/2", &scale);
        let ts_slope = slope(&rate.outcome, rate.horizon);
        let flat = run_cell("ts-nu3/2", &scale);
        let (inc, half) = plateau(&flat.outcome, flat.horizon);
        let limit = 0.10 * half + 1e-6;
        verdict(
            ts_slope <= ucb_slope + 0.15 && inc <= limit,
            format!(
                "TS slope {ts_slope:.4} (<= UCB slope {ucb_slope:.4} + 0.15 = {:.4}); \
                 TS nu = 3/2 R(2048) - R(1024) = {inc:.4e} (<= 0.10 R(1024) + 1e-6 = {limit:.4e})",
                ucb_slope + 0.15
            ),
        )
    });

    record(9, "unknown hyperparameters (grid MLE)", minutes(45), &mut || {
        let cell = run_cell("ucb-mle-nu1/2", &scale);
        let s = slope(&cell.outcome, cell.horizon);
        let (_, mle_means) = seed_means(&cell.outcome, cell.horizon);
        let (_, known_means) = seed_means(&ucb.outcome, ucb.horizon);
        let (mine, theirs) = (*mle_means.last().unwrap(), *known_means.last().unwrap());
        verdict(
            s <= 0.75 && mine <= 3.0 * theirs,
            format!("fitted slope {s:.4} (<= 0.75); R(T) {mine:.4} (<= 3 x known-theta {theirs:.4})"),
        )
    });

    record(10, "determinism", minutes(1), &mut determinism);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
