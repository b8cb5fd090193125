//! Command-line front end. Every subcommand reads an optional flat
//! `key = value` config file whose keys are the flag names, lets flags
//! override it, and writes its outputs plus a JSON provenance block holding
//! the effective settings.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::diffusion::{negative_mass, reconstruct, simulate_sde, CoefficientTable, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::experiments::{bench, build_id, paper_grid, parse_grid, run_coverage, CiMethod, CoverageConfig, Metric};
use crate::export::{
    write_bench_csv, write_coverage_csv, write_ctmc_csv, write_fluid_csv, write_json, write_samples_csv, write_sde_csv,
};
use crate::fluid::{powerd_fixed_point, solve_ode, supermarket_tails, tail_sums, uniform_grid, DEFAULT_STEP};
use crate::seeding::{replicate_rng, Purpose};
use crate::types::{Code, CountVector, FluctuationVector, QueuePmf, SystemParams, TruncationConfig};

#[derive(Debug, Parser)]
#[command(name = "codedlb", version, about = "Batch-sampling load balancing: CTMC, fluid ODE and diffusion")]
pub struct Cli {
    /// Flat key = value file; keys are flag names without the dashes.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes the output.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long = "L")]
    pub width: Option<String>,
    #[arg(long = "k")]
    pub threshold: Option<String>,
    #[arg(long = "T")]
    pub horizon: Option<String>,
    /// Files per L-subset; recorded, never enters a rate.
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(short, long)]
    pub output: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct NumericArgs {
    /// Truncation level.
    #[arg(long = "K")]
    pub max_level: Option<String>,
    /// Diffusion step and output grid spacing.
    #[arg(long)]
    pub dt: Option<String>,
    /// RK4 step of the fluid solver.
    #[arg(long)]
    pub h: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact n-server chain from the empty state; one row per sample time.
    SimulateCtmc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "sample-dt")]
        sample_dt: Option<String>,
    },
    /// Mean-field ODE from the empty state.
    SolveOde {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        /// Power-of-d shorthand for L = d, k = 1.
        #[arg(long)]
        d: Option<String>,
    },
    /// One Euler-Maruyama path of the fluctuation process.
    SimulateSde {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        numeric: NumericArgs,
    },
    /// Coverage of diffusion CIs by CTMC replicates over an (L,k) grid.
    Coverage {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        /// Cells as "L:k,L:k,...".
        #[arg(long)]
        grid: Option<String>,
        /// n = 10000 with 1000/1000 replicates.
        #[arg(long = "paper-scale")]
        paper_scale: bool,
        /// percentile or normal.
        #[arg(long)]
        ci: Option<String>,
        #[arg(long)]
        level: Option<String>,
        #[arg(long = "reps-diffusion")]
        reps_diffusion: Option<String>,
        #[arg(long = "reps-reference")]
        reps_reference: Option<String>,
        /// Also write per-replicate metrics.
        #[arg(long)]
        samples: bool,
        /// Score diffusion replicates against their own CI.
        #[arg(long = "self-consistency")]
        self_consistency: bool,
    },
    /// Per-trial wall clock of the CTMC against the diffusion.
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        #[arg(long)]
        reps: Option<String>,
    },
}

/// Merged settings: config file first, flags on top. Every value read is
/// recorded, defaults included, for the provenance block.
#[derive(Debug, Default)]
pub struct Settings {
    given: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::validation("config", format!("line {} is not key = value", no + 1)))?;
            out.insert(k.trim().trim_start_matches("--").to_string(), v.trim().to_string());
        }
        Ok(out)
    }

    pub fn new(config: BTreeMap<String, String>, flags: Vec<(&'static str, Option<String>)>, known: &[&str]) -> Result<Self> {
        if let Some(bad) = config.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::validation("config", format!("unknown key '{bad}'")));
        }
        let mut given = config;
        for (key, value) in flags {
            if let Some(v) = value {
                given.insert(key.to_string(), v);
            }
        }
        Ok(Settings {
            given,
            effective: BTreeMap::new(),
        })
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &'static str, default: T) -> Result<T> {
        let value = match self.given.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::validation(key, format!("{key} has unparseable value '{raw}'")))?,
            None => default,
        };
        self.effective.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn get_opt<T: FromStr + Display>(&mut self, key: &'static str) -> Result<Option<T>> {
        if self.given.contains_key(key) {
            let raw = &self.given[key];
            let v: T = raw
                .parse()
                .map_err(|_| Error::validation(key, format!("{key} has unparseable value '{raw}'")))?;
            self.effective.insert(key.to_string(), v.to_string());
            Ok(Some(v))
        } else {
            Ok(None)
        }
    }

    pub fn effective(&self) -> &BTreeMap<String, String> {
        &self.effective
    }
}

fn model_flags(m: &ModelArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("n", m.n.clone()),
        ("lambda", m.lambda.clone()),
        ("L", m.width.clone()),
        ("k", m.threshold.clone()),
        ("T", m.horizon.clone()),
        ("c", m.c.clone()),
        ("seed", m.seed.clone()),
        ("output", m.output.clone()),
    ]
}

fn numeric_flags(a: &NumericArgs) -> Vec<(&'static str, Option<String>)> {
    vec![("K", a.max_level.clone()), ("dt", a.dt.clone()), ("h", a.h.clone())]
}

fn flag(b: bool) -> Option<String> {
    b.then(|| "true".to_string())
}

#[derive(Serialize)]
struct ProvenanceBlock<'a, S: Serialize> {
    build: String,
    command: &'a str,
    settings: &'a BTreeMap<String, String>,
    summary: S,
}

fn provenance_path(output: &Path) -> PathBuf {
    output.with_extension("provenance.json")
}

fn write_provenance<S: Serialize>(output: &Path, command: &str, s: &Settings, summary: S) -> Result<()> {
    let block = ProvenanceBlock {
        build: build_id(),
        command,
        settings: s.effective(),
        summary,
    };
    write_json(&provenance_path(output), &block)
}

fn lambda(s: &mut Settings) -> Result<f64> {
    let v: f64 = s.get("lambda", 0.9)?;
    if !(v > 0.0) {
        return Err(Error::validation("lambda", "lambda must satisfy lambda > 0"));
    }
    Ok(v)
}

fn code(s: &mut Settings, default_width: usize, default_threshold: usize) -> Result<Code> {
    let l = s.get("L", default_width)?;
    let k = s.get("k", default_threshold)?;
    Code::new(l, k)
}

fn model(s: &mut Settings, default_n: usize) -> Result<SystemParams> {
    let n = s.get("n", default_n)?;
    let lam = lambda(s)?;
    let code = code(s, 2, 1)?;
    let horizon = s.get("T", 10.0)?;
    let c = s.get("c", 1usize)?;
    SystemParams::new(n, lam, code, c, horizon)
}

fn trunc(s: &mut Settings) -> Result<TruncationConfig> {
    TruncationConfig::new(s.get("K", 20usize)?, 1e-6)
}

fn positive(s: &mut Settings, key: &'static str, default: f64) -> Result<f64> {
    let v = s.get(key, default)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::validation(key, format!("{key} must be positive")));
    }
    Ok(v)
}

fn output(s: &mut Settings, default: &str) -> Result<PathBuf> {
    Ok(PathBuf::from(s.get("output", default.to_string())?))
}

const MODEL_KEYS: [&str; 8] = ["n", "lambda", "L", "k", "T", "c", "seed", "output"];
const NUMERIC_KEYS: [&str; 3] = ["K", "dt", "h"];

fn keys(extra: &[&'static str], numeric: bool) -> Vec<&'static str> {
    let mut k: Vec<&'static str> = MODEL_KEYS.to_vec();
    if numeric {
        k.extend(NUMERIC_KEYS);
    }
    k.extend(extra);
    k
}

fn cmd_simulate_ctmc(mut s: Settings) -> Result<()> {
    let p = model(&mut s, 10_000)?;
    let seed = s.get("seed", 1u64)?;
    let sample_dt = positive(&mut s, "sample-dt", 0.1)?;
    let out = output(&mut s, "ctmc.csv")?;
    let traj = crate::ctmc::simulate(&p, CountVector::empty_start(p.n)?, &uniform_grid(p.horizon, sample_dt), seed)?;
    write_ctmc_csv(&out, &traj)?;
    let m = traj.terminal().metrics();
    println!(
        "{} events; at T: empty {} large {} mean length {:.6}",
        traj.events, m.empty_count, m.large_count, m.mean_len
    );
    write_provenance(&out, "simulate-ctmc", &s, serde_json::json!({ "events": traj.events, "terminal": m }))
}

fn cmd_solve_ode(mut s: Settings) -> Result<()> {
    let d: Option<usize> = s.get_opt("d")?;
    let code = match d {
        Some(d) => code(&mut s, d, 1)?,
        None => code(&mut s, 2, 1)?,
    };
    let lam = lambda(&mut s)?;
    let horizon = s.get("T", 10.0)?;
    let c = s.get("c", 1usize)?;
    // n never enters the limit; L is the smallest admissible value
    let p = SystemParams::new(code.width, lam, code, c, horizon)?;
    let tr = trunc(&mut s)?;
    let dt = positive(&mut s, "dt", DEFAULT_DT)?;
    let h = positive(&mut s, "h", DEFAULT_STEP)?;
    let out = output(&mut s, "ode.csv")?;
    let traj = solve_ode(&QueuePmf::point_mass(0, tr.max_level), &p, &tr, h.min(dt), &uniform_grid(horizon, dt))?;
    write_fluid_csv(&out, &traj)?;
    let tails = tail_sums(traj.terminal());
    let shown = tr.max_level.min(6);
    let mut summary = serde_json::json!({
        "tail_sums": &tails[..=shown],
        "leak": traj.leak.last(),
        "leak_warning": traj.leak_warning,
        "max_step_gap": traj.max_step_gap,
    });
    println!("tail sums at T={horizon}:");
    if code.threshold == 1 {
        let root = tail_sums(&powerd_fixed_point(code.width, lam, tr.max_level)?);
        let closed = supermarket_tails(code.width, lam, tr.max_level);
        for m in 1..=shown {
            println!(
                "  v_{m} = {:.6}  fixed point {:.6}  closed form {:.6}  gap {:.2e}",
                tails[m],
                root[m],
                closed[m],
                (tails[m] - root[m]).abs()
            );
        }
        summary["fixed_point"] = serde_json::json!(&root[..=shown]);
    } else {
        for m in 1..=shown {
            println!("  v_{m} = {:.6}", tails[m]);
        }
    }
    if traj.leak_warning {
        eprintln!("warning: mass past K at T is {:.3e}; raise --K", traj.leak.last().unwrap_or(&0.0));
    }
    write_provenance(&out, "solve-ode", &s, summary)
}

fn cmd_simulate_sde(mut s: Settings) -> Result<()> {
    let p = model(&mut s, 10_000)?;
    let seed = s.get("seed", 1u64)?;
    let tr = trunc(&mut s)?;
    let dt = positive(&mut s, "dt", DEFAULT_DT)?;
    let h = positive(&mut s, "h", DEFAULT_STEP)?;
    let out = output(&mut s, "sde.csv")?;
    let (_, table) = CoefficientTable::build(&QueuePmf::point_mass(0, tr.max_level), &p, &tr, dt, h)?;
    let path = simulate_sde(
        &FluctuationVector::zeros(table.dim()),
        &table,
        &mut replicate_rng(seed, Purpose::Diffusion, 0),
    )?;
    write_sde_csv(&out, &path)?;
    let pihat = reconstruct(table.pi(table.steps()), path.terminal(), p.n)?;
    let neg = negative_mass(&pihat);
    println!(
        "{} steps; max projection {:.3e}; negative reconstructed mass {:.3e}",
        table.steps(),
        path.max_projection,
        neg
    );
    write_provenance(
        &out,
        "simulate-sde",
        &s,
        serde_json::json!({
            "max_projection": path.max_projection,
            "truncation_flag": path.truncation_flag,
            "negative_mass": neg,
        }),
    )
}

fn cmd_coverage(mut s: Settings) -> Result<()> {
    let paper = s.get("paper-scale", false)?;
    let mut cfg = if paper { CoverageConfig::paper() } else { CoverageConfig::desk() };
    cfg.n = s.get("n", cfg.n)?;
    cfg.lambda = lambda(&mut s)?;
    cfg.horizon = positive(&mut s, "T", cfg.horizon)?;
    cfg.files_per_subset = s.get("c", cfg.files_per_subset)?;
    cfg.trunc = trunc(&mut s)?;
    cfg.dt = positive(&mut s, "dt", cfg.dt)?;
    cfg.h = positive(&mut s, "h", cfg.h)?;
    cfg.reps_diffusion = s.get("reps-diffusion", cfg.reps_diffusion)?;
    cfg.reps_reference = s.get("reps-reference", cfg.reps_reference)?;
    cfg.master_seed = s.get("seed", cfg.master_seed)?;
    cfg.ci_method = s.get("ci", "percentile".to_string())?.parse::<CiMethod>()?;
    cfg.level = s.get("level", cfg.level)?;
    cfg.self_consistency = s.get("self-consistency", false)?;
    let default_grid: Vec<String> = paper_grid().iter().map(|c| format!("{}:{}", c.width, c.threshold)).collect();
    let grid = parse_grid(&s.get("grid", default_grid.join(","))?)?;
    let samples = s.get("samples", false)?;
    let out = output(&mut s, "coverage.csv")?;

    let report = run_coverage(&cfg, &grid, s.effective().clone())?;
    write_coverage_csv(&out, &report)?;
    write_json(&out.with_extension("json"), &report)?;
    if samples {
        let stem = out.file_stem().and_then(|x| x.to_str()).unwrap_or("coverage");
        write_samples_csv(&out.with_file_name(format!("{stem}_samples.csv")), &report)?;
    }
    println!("{:>2} {:>2}  {:>11} {:>11} {:>11}", "L", "k", "empty", "large", "mean_len");
    for cell in &report.cells {
        let cov = |m: Metric| cell.metrics.iter().find(|x| x.metric == m).map_or(f64::NAN, |x| x.coverage);
        println!(
            "{:>2} {:>2}  {:>10.1}% {:>10.1}% {:>10.1}%",
            cell.width,
            cell.threshold,
            100.0 * cov(Metric::EmptyCount),
            100.0 * cov(Metric::LargeCount),
            100.0 * cov(Metric::MeanLen)
        );
    }
    Ok(())
}

fn cmd_bench(mut s: Settings) -> Result<()> {
    let p = model(&mut s, 10_000)?;
    let seed = s.get("seed", 1u64)?;
    let tr = trunc(&mut s)?;
    let dt = positive(&mut s, "dt", DEFAULT_DT)?;
    let reps = s.get("reps", 5usize)?;
    let out = output(&mut s, "bench.csv")?;
    let report = bench(&p, &tr, dt, reps, seed)?;
    write_bench_csv(&out, &report)?;
    println!("ctmc       {:.6} s/trial", report.ctmc_seconds);
    println!("diffusion  {:.6} s/trial", report.diffusion_seconds);
    println!("speedup    {:.1}x", report.speedup);
    write_provenance(&out, "bench", &s, &report)
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Settings::parse_config(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let run = || -> Result<()> {
        match &cli.command {
            Command::SimulateCtmc { model, sample_dt } => {
                let mut f = model_flags(model);
                f.push(("sample-dt", sample_dt.clone()));
                cmd_simulate_ctmc(Settings::new(config.clone(), f, &keys(&["sample-dt"], false))?)
            }
            Command::SolveOde { model, numeric, d } => {
                let mut f = model_flags(model);
                f.extend(numeric_flags(numeric));
                f.push(("d", d.clone()));
                cmd_solve_ode(Settings::new(config.clone(), f, &keys(&["d"], true))?)
            }
            Command::SimulateSde { model, numeric } => {
                let mut f = model_flags(model);
                f.extend(numeric_flags(numeric));
                cmd_simulate_sde(Settings::new(config.clone(), f, &keys(&[], true))?)
            }
            Command::Coverage {
                model,
                numeric,
                grid,
                paper_scale,
                ci,
                level,
                reps_diffusion,
                reps_reference,
                samples,
                self_consistency,
            } => {
                let mut f = model_flags(model);
                f.extend(numeric_flags(numeric));
                f.extend([
                    ("grid", grid.clone()),
                    ("paper-scale", flag(*paper_scale)),
                    ("ci", ci.clone()),
                    ("level", level.clone()),
                    ("reps-diffusion", reps_diffusion.clone()),
                    ("reps-reference", reps_reference.clone()),
                    ("samples", flag(*samples)),
                    ("self-consistency", flag(*self_consistency)),
                ]);
                let extra = [
                    "grid",
                    "paper-scale",
                    "ci",
                    "level",
                    "reps-diffusion",
                    "reps-reference",
                    "samples",
                    "self-consistency",
                ];
                cmd_coverage(Settings::new(config.clone(), f, &keys(&extra, true))?)
            }
            Command::Bench { model, numeric, reps } => {
                let mut f = model_flags(model);
                f.extend(numeric_flags(numeric));
                f.push(("reps", reps.clone()));
                cmd_bench(Settings::new(config.clone(), f, &keys(&["reps"], true))?)
            }
        }
    };
    match cli.jobs {
        Some(0) => Err(Error::validation("jobs", "jobs must be at least 1")),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::validation("jobs", e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
