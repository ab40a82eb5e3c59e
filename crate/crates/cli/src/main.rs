//! `gittins`: build index tables, query indices, run regret sweeps, verify
//! the analytical bounds and export figure data.
//!
//! Exit codes: 0 success, 1 a check failed or the computation failed,
//! 2 usage or configuration error.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gittins_core::approx::compare_with_exact;
use gittins_core::sim::{play, summarize};
use gittins_core::verify::run_suite;
use gittins_core::{
    approx_gittins, rng, run_sweep, ApproxParams, BanditInstance, BayesPolicy, BayesSolution, EngineConfig, Error,
    IndexEngine, IndexQuery, IndexSource, IndexTable, Policy, PolicyKind, PolicySpec,
};
use rayon::prelude::*;

#[derive(Debug, Parser)]
#[command(name = "gittins", version, about = "Finite-horizon Gaussian Gittins index toolkit")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "GITTINS_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the table of γ(0, 1/T, m) for T + m ≤ n.
    BuildTable(BuildTableArgs),
    /// Print an exact or approximate index.
    Index(IndexArgs),
    /// Run worst-case regret sweeps from a config file.
    Sweep(SweepArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
    /// Two-armed comparison of the index policy with the Bayes-optimal policy.
    Bayes2(Bayes2Args),
    /// Write exact and approximate index curves.
    ExportIndex(ExportIndexArgs),
}

#[derive(Debug, Args)]
struct BuildTableArgs {
    #[arg(long)]
    horizon: usize,
    /// Per-stage spline fit tolerance.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
    /// Refuse builds whose table would exceed this many MiB in memory.
    #[arg(long, default_value_t = 4096)]
    max_memory_mib: u64,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long, allow_negative_numbers = true)]
    mean: f64,
    #[arg(long)]
    variance: f64,
    #[arg(long)]
    remaining: usize,
    /// Use the closed-form approximation instead of the exact index.
    #[arg(long)]
    approx: bool,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Index table; required when a grid uses GittinsFlat.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Bayes2Args {
    #[arg(long, default_value_t = 2)]
    horizon: usize,
    /// Prior means of arm 2 (arm 1 has mean 0, variance 1; arm 2 variance 1/2).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0.05,0.1,0.2")]
    nu2: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    max_horizon: usize,
    /// Spline fit tolerance of the Bayes induction.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Write a regret comparison (OCUCB, Gittins, Bayes) for μ = (0, −Δ) here.
    #[arg(long, requires = "table")]
    regret_out: Option<PathBuf>,
    /// Index table for the regret comparison.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1,1.5,2")]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExportIndexArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Largest horizon on the σ² = 1 curve.
    #[arg(long, default_value_t = 10_000)]
    max_m: usize,
    /// Points on the σ² = 1 curve (log-spaced from 2).
    #[arg(long, default_value_t = 25)]
    points: usize,
    /// Horizon of the curve over pull counts.
    #[arg(long, default_value_t = 1000)]
    curve_m: usize,
    /// Largest pull count on that curve.
    #[arg(long, default_value_t = 100)]
    max_t: usize,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::InvalidInput(_) | Error::Config(_) | Error::Format { .. } | Error::OutOfRange { .. }) => 2,
            _ => 1,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::BuildTable(a) => build_table(a),
        Command::Index(a) => index(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::Bayes2(a) => bayes2(a),
        Command::ExportIndex(a) => export_index(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn engine_config(tol: f64) -> Result<EngineConfig, Failure> {
    let cfg = EngineConfig::with_tol(tol);
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn load_table(path: &Path) -> Result<IndexTable, Failure> {
    IndexTable::load(path).with_context(|| format!("loading index table {}", path.display())).map_err(|e| {
        let code = if e.downcast_ref::<Error>().is_some_and(|c| matches!(c, Error::Io(_))) { 2 } else { 1 };
        Failure { code, error: e }
    })
}

fn build_table(a: BuildTableArgs) -> Result<u8, Failure> {
    if a.horizon < 2 {
        return Err(usage(anyhow::anyhow!("--horizon must be at least 2, got {}", a.horizon)));
    }
    let cfg = engine_config(a.tol)?;
    let entries = gittins_core::table::entry_count(a.horizon) as u64;
    let mib = (entries * 8).div_ceil(1 << 20);
    if mib > a.max_memory_mib {
        return Err(usage(anyhow::anyhow!(
            "a horizon-{} table holds {entries} entries (~{mib} MiB), above --max-memory-mib {}",
            a.horizon,
            a.max_memory_mib
        )));
    }
    // Fail on an unwritable path before the build, not after.
    std::fs::File::create(&a.out).with_context(|| format!("cannot write {}", a.out.display())).map_err(usage)?;
    let start = Instant::now();
    let (table, stats) = IndexTable::build_with_stats(a.horizon, &cfg)?;
    table.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "entries={} max_knots={} achieved_tol={:.3e} wall={:.2}s out={}",
        stats.entries,
        stats.max_segments + 1,
        stats.achieved_tol,
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(0)
}

fn index(a: IndexArgs) -> Result<u8, Failure> {
    let q = IndexQuery::new(a.mean, a.variance, a.remaining).map_err(usage)?;
    let value = if a.approx {
        approx_gittins(q.mean, q.variance, q.remaining)
    } else {
        IndexEngine::new(engine_config(a.tol)?).index(&q)?
    };
    println!("{value:.6}");
    Ok(0)
}

fn sweep(a: SweepArgs) -> Result<u8, Failure> {
    let grids = config::load(&a.config).map_err(|problems| {
        usage(anyhow::anyhow!("{} has {} problem(s):\n  {}", a.config.display(), problems.len(), problems.join("\n  ")))
    })?;
    let needed = grids.iter().filter(|g| g.needs_table()).map(|g| g.horizon).max();
    let table = match (needed, &a.table) {
        (None, _) => None,
        (Some(n), None) => {
            return Err(usage(anyhow::anyhow!("GittinsFlat needs --table with an index table of horizon ≥ {n}")))
        }
        (Some(n), Some(path)) => {
            let t = load_table(path)?;
            if t.horizon() < n {
                return Err(usage(anyhow::anyhow!(
                    "{} covers horizon {} but the config needs horizon {n}",
                    path.display(),
                    t.horizon()
                )));
            }
            Some(t)
        }
    };
    let engine = grids.iter().any(|g| g.needs_engine()).then(|| IndexEngine::new(EngineConfig::default()));
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display())).map_err(usage)?;
    let source = IndexSource { table: table.as_ref(), engine: engine.as_ref() };
    for g in &grids {
        let start = Instant::now();
        let result = run_sweep(g, source)?;
        let path = a.out.join(result.file_name());
        result.save(&path).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {} ({:.1}s)", path.display(), start.elapsed().as_secs_f64());
    }
    Ok(0)
}

fn verify(a: VerifyArgs) -> Result<u8, Failure> {
    if a.reps == 0 {
        return Err(usage(anyhow::anyhow!("--reps must be at least 1")));
    }
    let table = load_table(&a.table)?;
    let report = run_suite(Some(&table), a.reps, a.seed)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    if report.passed() {
        Ok(0)
    } else {
        for f in report.failures() {
            eprintln!("failed: {f}");
        }
        Ok(1)
    }
}

fn arm_name(arm: usize) -> &'static str {
    if arm == 0 {
        "arm1"
    } else {
        "arm2"
    }
}

fn bayes2(a: Bayes2Args) -> Result<u8, Failure> {
    if a.horizon == 0 || a.horizon > a.max_horizon {
        return Err(usage(anyhow::anyhow!("--horizon must be in 1..={}, got {}", a.max_horizon, a.horizon)));
    }
    let cfg = engine_config(a.tol)?;
    let engine = IndexEngine::new(cfg);
    let g1 = engine.bonus(1.0, a.horizon)?;
    let g2 = engine.bonus(0.5, a.horizon)?;
    let solution = BayesSolution::solve(1.0, 0.5, a.horizon, &cfg)?;
    for &nu2 in &a.nu2 {
        let gittins = usize::from(nu2 + g2 > g1);
        let (v1, v2) = solution.branch_values(nu2)?;
        let bayes = usize::from(v2 > v1);
        println!("nu2={nu2} gittins: {}, bayes: {}", arm_name(gittins), arm_name(bayes));
    }
    if let Some(out) = &a.regret_out {
        let table = load_table(a.table.as_deref().expect("clap enforces --table"))?;
        if table.horizon() < a.horizon {
            return Err(usage(anyhow::anyhow!("index table covers horizon {} < {}", table.horizon(), a.horizon)));
        }
        if a.reps == 0 || a.deltas.iter().any(|d| !(*d >= 0.0)) {
            return Err(usage(anyhow::anyhow!("--reps must be ≥ 1 and every delta ≥ 0")));
        }
        let text = bayes2_regret(&a, &table, &cfg)?;
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
        println!("wrote {}", out.display());
    }
    Ok(0)
}

/// Regret of OCUCB, the index policy and the Bayes policy on μ = (0, −Δ).
fn bayes2_regret(a: &Bayes2Args, table: &IndexTable, cfg: &EngineConfig) -> anyhow::Result<String> {
    let n = a.horizon;
    let solution = BayesPolicy::solve_for(n, cfg)?;
    let mut s = String::new();
    writeln!(s, "% two-armed regret: arm 1 at 0, arm 2 at -delta")?;
    writeln!(s, "% n={n} d=2 reps={} seed={} bayes_fit_tol={:e}", a.reps, a.seed, solution.achieved_tol())?;
    writeln!(s, "% columns: delta OCUCB GittinsFlat Bayes OCUCB_stderr GittinsFlat_stderr Bayes_stderr")?;
    for (di, &delta) in a.deltas.iter().enumerate() {
        let instance = BanditInstance::worst_case(2, delta, n)?;
        let mut means = Vec::new();
        let mut errs = Vec::new();
        for (pi, column) in ["OCUCB", "GittinsFlat", "Bayes"].iter().enumerate() {
            let regrets = (0..a.reps)
                .into_par_iter()
                .map(|rep| {
                    let seed = rng::derive_seed(a.seed, &[di as u64, pi as u64, rep as u64]);
                    let counts = match *column {
                        "Bayes" => play(&instance, &mut BayesPolicy::new(&solution, n)?, seed)?,
                        name => {
                            let kind: PolicyKind = name.parse()?;
                            let mut p = Policy::new(PolicySpec::flat(kind, 2, n)?, IndexSource::table(table), seed)?;
                            play(&instance, &mut p, seed)?
                        }
                    };
                    Ok(instance.regret(&counts))
                })
                .collect::<Result<Vec<f64>, Error>>()?;
            let e = summarize(&regrets)?;
            means.push(e.mean);
            errs.push(e.stderr);
        }
        write!(s, "{delta}")?;
        for v in means.iter().chain(&errs) {
            write!(s, " {v:.8e}")?;
        }
        s.push('\n');
    }
    Ok(s)
}

fn export_index(a: ExportIndexArgs) -> Result<u8, Failure> {
    if a.max_m < 2 || a.points < 2 || a.curve_m < 1 || a.max_t < 1 {
        return Err(usage(anyhow::anyhow!("--max-m ≥ 2, --points ≥ 2, --curve-m ≥ 1 and --max-t ≥ 1 are required")));
    }
    let engine = IndexEngine::new(engine_config(a.tol)?);
    let params = ApproxParams::default();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display())).map_err(usage)?;

    let ratio = (a.max_m as f64 / 2.0).ln() / (a.points - 1) as f64;
    let mut ms: Vec<usize> = (0..a.points).map(|i| (2.0 * (ratio * i as f64).exp()).round() as usize).collect();
    ms.dedup();
    let by_m: Vec<(f64, usize)> = ms.iter().map(|&m| (1.0, m)).collect();
    let rows = compare_with_exact(&params, &by_m, &engine)?;
    let mut s = String::from("% exact and approximate exploration bonus, variance 1\n% columns: m exact approx\n");
    for r in &rows {
        let _ = writeln!(s, "{} {:.10e} {:.10e}", r.m, r.exact, r.approx);
    }
    let path = a.out.join("index_by_horizon.dat");
    std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());

    let by_t: Vec<(f64, usize)> = (1..=a.max_t).map(|t| (1.0 / t as f64, a.curve_m)).collect();
    let rows = compare_with_exact(&params, &by_t, &engine)?;
    let mut s = format!(
        "% exact and approximate exploration bonus, variance 1/T, m={}\n% columns: T exact approx\n",
        a.curve_m
    );
    for (t, r) in (1..).zip(&rows) {
        let _ = writeln!(s, "{t} {:.10e} {:.10e}", r.exact, r.approx);
    }
    let path = a.out.join("index_by_count.dat");
    std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(0)
}
