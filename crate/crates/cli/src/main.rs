mod plot;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use noisefree_bo::experiment::{
    read_trace_csv, run_table1, table1_cells, write_outcome, BenchScale, Experiment, RunConfig,
};
use noisefree_bo::Error;

const THREADS_ENV: &str = "NOISEFREE_BO_THREADS";

#[derive(Parser)]
#[command(name = "noisefree-bo", version, about = "Noise-free Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Worker threads (overridden by NOISEFREE_BO_THREADS).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Added to every configured seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchSuite {
    Table1,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifySuite {
    Lemmas,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: a trace CSV per seed plus an aggregate JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the regime matrix and print the summary table.
    Bench {
        #[arg(long, value_enum, default_value = "table1")]
        suite: BenchSuite,
        /// JSON with `horizon`, `seeds`, `function_seed`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the inequality verification suites.
    Verify {
        #[arg(long, value_enum, default_value = "lemmas")]
        suite: VerifySuite,
        /// JSON overriding suite sizes and seeds.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Log-log regret curves from trace CSVs as SVG.
    Plot {
        #[arg(required = false)]
        csv: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Bad input: exit 2.
    Usage(String),
    /// Runtime error or failed check: exit 1.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Usage(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
    })
}

fn thread_count(jobs: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV}={v} is not a positive integer"))),
        Err(_) => match jobs {
            Some(0) => Err(Failure::Usage("--jobs must be >= 1".into())),
            j => Ok(j),
        },
    }
}

fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(jobs)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_run(config: &Path, common: &Common) -> CmdResult {
    let text = read_text(config)?;
    let cfg = RunConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let exp = Experiment::prepare(cfg)?;
    let outcome = with_pool(common.jobs, || exp.run(common.seed_offset))??;
    let written = write_outcome(&out, &exp, &outcome)?;
    let a = &outcome.aggregate;
    println!("config_hash {}", a.config_hash);
    println!(
        "policy {} d={} nu={} B={:.6} f*={:.6}",
        exp.config.policy.name(),
        exp.config.d,
        exp.config.nu_emulator,
        exp.bound,
        exp.optimum.value
    );
    for ((h, m), se) in a.horizons.iter().zip(&a.regret_mean).zip(&a.regret_se) {
        println!("R({h}) = {m:.6e} +- {se:.2e}");
    }
    if let Some(r) = a.rate {
        println!("fitted slope {:.4} over {:?} (plateau flag {})", r.slope, a.fit_horizons, r.plateau);
    }
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

fn cmd_bench(config: Option<&Path>, common: &Common) -> CmdResult {
    let scale: BenchScale = match config {
        Some(p) => parse_json(p)?,
        None => BenchScale::default(),
    };
    if scale.horizon < 16 || scale.seeds == 0 {
        return Err(Failure::Usage("bench needs horizon >= 16 and seeds >= 1".into()));
    }
    let cells = table1_cells(&scale);
    let report = with_pool(common.jobs, || run_table1(&cells, common.seed_offset))??;
    print!("{report}");
    if let Some(out) = &common.out {
        for (id, exp, outcome) in &report.outcomes {
            let dir = out.join(id.replace('/', "_"));
            write_outcome(&dir, exp, outcome)?;
        }
        let rows = serde_json::to_string_pretty(&report.rows).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_file(&out.join("summary.json"), &rows)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Runtime("one or more cells failed".into()))
    }
}

fn cmd_verify(config: Option<&Path>, common: &Common) -> CmdResult {
    let cfg: verify::VerifyConfig = match config {
        Some(p) => parse_json(p)?,
        None => verify::VerifyConfig::default(),
    };
    let reports = with_pool(common.jobs, || verify::run(&cfg))??;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_string());
    }
    print!("{text}");
    if let Some(out) = &common.out {
        write_file(&out.join("verify.txt"), &text)?;
    }
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::Runtime("one or more suites failed".into()))
    }
}

fn cmd_plot(paths: &[PathBuf], out: &Path) -> CmdResult {
    if paths.is_empty() {
        return Err(Failure::Usage("plot needs at least one trace CSV".into()));
    }
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        let text = read_text(p)?;
        let tf = read_trace_csv(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        files.push(tf);
    }
    let series = plot::series_from_traces(&files);
    write_file(out, &plot::render_svg(&series))?;
    println!("wrote {} ({} series)", out.display(), series.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, common } => cmd_run(config, common),
        Command::Bench {
            suite: BenchSuite::Table1,
            config,
            common,
        } => cmd_bench(config.as_deref(), common),
        Command::Verify {
            suite: VerifySuite::Lemmas,
            config,
            common,
        } => cmd_verify(config.as_deref(), common),
        Command::Plot { csv, out } => cmd_plot(csv, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
