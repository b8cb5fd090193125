//! Terminal-time metrics, confidence intervals and coverage experiments.

use std::collections::BTreeMap;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::ctmc::CtmcState;
use crate::diffusion::{negative_mass, reconstruct, simulate_sde, CoefficientTable, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::fluid::DEFAULT_STEP;
use crate::seeding::{cell_seed, replicate_rng, Purpose};
use crate::types::{Code, CountVector, FluctuationVector, QueuePmf, SystemParams, TruncationConfig};

/// Queues with at least this many jobs count as large.
pub const LARGE_LEVEL: usize = 6;

/// The three occupancy functionals reported per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    /// n·π₀, servers.
    pub empty_count: f64,
    /// n·Σ_{j≥6} π_j, servers.
    pub large_count: f64,
    /// Σ_j j·π_j, jobs per server.
    pub mean_len: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    EmptyCount,
    LargeCount,
    MeanLen,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::EmptyCount, Metric::LargeCount, Metric::MeanLen];

    pub fn name(self) -> &'static str {
        match self {
            Metric::EmptyCount => "empty_count",
            Metric::LargeCount => "large_count",
            Metric::MeanLen => "mean_len",
        }
    }
}

impl MetricSample {
    /// Metrics of an approximate pmf π̂ (entries may be slightly negative when
    /// reconstructed from a diffusion). Needs coordinates 0..=6 at least.
    pub fn from_pmf(pihat: &[f64], n: usize) -> Result<Self> {
        if pihat.len() <= LARGE_LEVEL {
            return Err(Error::validation("pihat", "need at least 7 coordinates"));
        }
        let n = n as f64;
        Ok(MetricSample {
            empty_count: n * pihat[0],
            large_count: n * pihat[LARGE_LEVEL..].iter().sum::<f64>(),
            mean_len: pihat.iter().enumerate().map(|(j, p)| j as f64 * p).sum(),
        })
    }

    /// Exact metrics of the untruncated chain.
    pub fn from_counts(x: &CountVector) -> Self {
        MetricSample {
            empty_count: x.get(0) as f64,
            large_count: x.counts().iter().skip(LARGE_LEVEL).sum::<u64>() as f64,
            mean_len: x.jobs_total() as f64 / x.n() as f64,
        }
    }

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::EmptyCount => self.empty_count,
            Metric::LargeCount => self.large_count,
            Metric::MeanLen => self.mean_len,
        }
    }
}

/// How the interval is formed from the diffusion samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Empirical quantiles (linear interpolation between order statistics).
    Percentile,
    /// mean ± z·sd.
    Normal,
}

impl std::str::FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percentile" => Ok(CiMethod::Percentile),
            "normal" => Ok(CiMethod::Normal),
            _ => Err(Error::validation("ci", "expected percentile or normal")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Quantile of sorted data, linear interpolation on (n−1)·q.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sided interval at nominal `level` (e.g. 0.95).
pub fn confidence_interval(samples: &[f64], level: f64, method: CiMethod) -> Result<Interval> {
    if samples.len() < 2 {
        return Err(Error::validation("reps", "need at least two samples"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("level", "level must lie in (0, 1)"));
    }
    match method {
        CiMethod::Percentile => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let alpha = (1.0 - level) / 2.0;
            Ok(Interval {
                low: quantile(&sorted, alpha),
                high: quantile(&sorted, 1.0 - alpha),
            })
        }
        CiMethod::Normal => {
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0);
            Ok(Interval {
                low: mean - z * sd,
                high: mean + z * sd,
            })
        }
    }
}

/// Settings shared by every cell of a coverage grid.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageConfig {
    pub n: usize,
    pub lambda: f64,
    pub horizon: f64,
    pub files_per_subset: usize,
    pub trunc: TruncationConfig,
    pub dt: f64,
    pub h: f64,
    pub reps_diffusion: usize,
    pub reps_reference: usize,
    pub master_seed: u64,
    pub ci_method: CiMethod,
    pub level: f64,
    /// Draw the reference samples from the diffusion instead of the CTMC.
    pub self_consistency: bool,
}

impl CoverageConfig {
    /// Desk scale: n = 2000, 200/200 replicates.
    pub fn desk() -> Self {
        CoverageConfig {
            n: 2000,
            lambda: 0.9,
            horizon: 10.0,
            files_per_subset: 1,
            trunc: TruncationConfig::default(),
            dt: DEFAULT_DT,
            h: DEFAULT_STEP,
            reps_diffusion: 200,
            reps_reference: 200,
            master_seed: 1,
            ci_method: CiMethod::Percentile,
            level: 0.95,
            self_consistency: false,
        }
    }

    /// Full scale (`--paper-scale`): n = 10⁴, 1000/1000 replicates.
    pub fn paper() -> Self {
        CoverageConfig {
            n: 10_000,
            reps_diffusion: 1000,
            reps_reference: 1000,
            ..CoverageConfig::desk()
        }
    }

    pub fn params(&self, code: Code) -> Result<SystemParams> {
        SystemParams::new(self.n, self.lambda, code, self.files_per_subset, self.horizon)
    }
}

/// Every (L,k) with 2 ≤ L ≤ 5 and 1 ≤ k < L.
pub fn paper_grid() -> Vec<Code> {
    (2..=5)
        .flat_map(|l| (1..l).map(move |k| Code { width: l, threshold: k }))
        .collect()
}

/// Parses "2:1,3:2" into codes.
pub fn parse_grid(spec: &str) -> Result<Vec<Code>> {
    spec.split(',')
        .map(|cell| {
            let (l, k) = cell
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::validation("grid", format!("cell '{cell}' is not L:k")))?;
            let l = l.trim().parse().map_err(|_| Error::validation("grid", format!("bad L in '{cell}'")))?;
            let k = k.trim().parse().map_err(|_| Error::validation("grid", format!("bad k in '{cell}'")))?;
            Code::new(l, k)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricCoverage {
    pub metric: Metric,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: usize,
    pub replicates: usize,
    pub coverage: f64,
    /// √(p(1−p)/reps).
    pub std_error: f64,
    /// All diffusion samples identical.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    #[serde(rename = "L")]
    pub width: usize,
    #[serde(rename = "k")]
    pub threshold: usize,
    pub cell_seed: u64,
    pub metrics: Vec<MetricCoverage>,
    /// Diffusion replicates whose reconstructed state had negative entries.
    pub negative_reconstructions: usize,
    /// Diffusion replicates flagged as truncation-dominated.
    pub truncation_flags: usize,
    pub ode_leak: f64,
    #[serde(skip)]
    pub diffusion_samples: Vec<MetricSample>,
    #[serde(skip)]
    pub reference_samples: Vec<MetricSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub build: String,
    pub config: CoverageConfig,
    /// Effective merged key=value settings as given on the command line.
    pub settings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
}

/// Version plus `git describe` of the tree the binary was built from.
pub fn build_id() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("CODEDLB_BUILD_ID"))
}

struct DiffusionSample {
    metrics: MetricSample,
    negative: bool,
    flagged: bool,
}

fn diffusion_sample(table: &CoefficientTable, n: usize, rng: &mut ChaCha8Rng) -> Result<DiffusionSample> {
    let dim = table.dim();
    let path = simulate_sde(&FluctuationVector::zeros(dim), table, rng)?;
    let pihat = reconstruct(table.pi(table.steps()), path.terminal(), n)?;
    Ok(DiffusionSample {
        metrics: MetricSample::from_pmf(&pihat, n)?,
        negative: negative_mass(&pihat) > 0.0,
        flagged: path.truncation_flag,
    })
}

fn ctmc_sample(p: &SystemParams, rng: ChaCha8Rng) -> Result<MetricSample> {
    let mut state = CtmcState::new(CountVector::empty_start(p.n)?, rng);
    let traj = crate::ctmc::run(&mut state, p, &[p.horizon], false)?;
    Ok(traj.terminal().metrics())
}

/// One (L,k) cell: diffusion replicates give the interval, reference
/// replicates (CTMC, or diffusion in self-consistency mode) are scored
/// against it. Replicates run on the current rayon pool; results do not
/// depend on scheduling.
pub fn run_cell(cfg: &CoverageConfig, code: Code) -> Result<CellReport> {
    let p = cfg.params(code)?;
    let max_level = cfg.trunc.max_level;
    let (fluid, table) = CoefficientTable::build(&QueuePmf::point_mass(0, max_level), &p, &cfg.trunc, cfg.dt, cfg.h)?;
    let seed = cell_seed(cfg.master_seed, code.width, code.threshold);
    let diffusion: Vec<DiffusionSample> = (0..cfg.reps_diffusion as u64)
        .into_par_iter()
        .map(|i| diffusion_sample(&table, cfg.n, &mut replicate_rng(seed, Purpose::Diffusion, i)))
        .collect::<Result<_>>()?;
    let reference: Vec<MetricSample> = (0..cfg.reps_reference as u64)
        .into_par_iter()
        .map(|i| {
            if cfg.self_consistency {
                diffusion_sample(&table, cfg.n, &mut replicate_rng(seed, Purpose::Validation, i)).map(|d| d.metrics)
            } else {
                ctmc_sample(&p, replicate_rng(seed, Purpose::Ctmc, i))
            }
        })
        .collect::<Result<_>>()?;
    let mut metrics = Vec::with_capacity(3);
    for m in Metric::ALL {
        let samples: Vec<f64> = diffusion.iter().map(|d| d.metrics.get(m)).collect();
        let ci = confidence_interval(&samples, cfg.level, cfg.ci_method)?;
        let hits = reference.iter().filter(|r| ci.contains(r.get(m))).count();
        let reps = reference.len();
        let coverage = hits as f64 / reps as f64;
        metrics.push(MetricCoverage {
            metric: m,
            ci_low: ci.low,
            ci_high: ci.high,
            hits,
            replicates: reps,
            coverage,
            std_error: (coverage * (1.0 - coverage) / reps as f64).sqrt(),
            degenerate: samples.iter().all(|&v| v == samples[0]),
        });
    }
    Ok(CellReport {
        width: code.width,
        threshold: code.threshold,
        cell_seed: seed,
        metrics,
        negative_reconstructions: diffusion.iter().filter(|d| d.negative).count(),
        truncation_flags: diffusion.iter().filter(|d| d.flagged).count(),
        ode_leak: fluid.leak.last().copied().unwrap_or(0.0),
        diffusion_samples: diffusion.into_iter().map(|d| d.metrics).collect(),
        reference_samples: reference,
    })
}

pub fn run_coverage(cfg: &CoverageConfig, grid: &[Code], settings: BTreeMap<String, String>) -> Result<CoverageReport> {
    if cfg.reps_diffusion < 2 || cfg.reps_reference < 2 {
        return Err(Error::validation("reps", "at least two replicates per side"));
    }
    let cells = grid.iter().map(|&code| run_cell(cfg, code)).collect::<Result<_>>()?;
    Ok(CoverageReport {
        provenance: Provenance {
            build: build_id(),
            config: cfg.clone(),
            settings,
        },
        cells,
    })
}

/// Wall-clock comparison of one CTMC trial against one diffusion trial.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub reps: usize,
    /// Mean seconds per CTMC trial.
    pub ctmc_seconds: f64,
    /// Mean seconds per diffusion trial (path, reconstruction, metrics).
    pub diffusion_seconds: f64,
    /// One-off ODE solve plus Φ and a(t) table, shared by all trials.
    pub setup_seconds: f64,
    pub speedup: f64,
    /// Events of each timed CTMC trial; fixed by the seed.
    pub ctmc_events: Vec<u64>,
    pub sde_steps: usize,
}

pub fn bench(p: &SystemParams, trunc: &TruncationConfig, dt: f64, reps: usize, seed: u64) -> Result<BenchReport> {
    if reps < 1 {
        return Err(Error::validation("reps", "at least one timed replicate"));
    }
    let start = Instant::now();
    let (_, table) = CoefficientTable::build(&QueuePmf::point_mass(0, trunc.max_level), p, trunc, dt, DEFAULT_STEP.min(dt))?;
    let setup_seconds = start.elapsed().as_secs_f64();

    let ctmc_trial = |i: u64| -> Result<(f64, u64)> {
        let mut state = CtmcState::new(CountVector::empty_start(p.n)?, replicate_rng(seed, Purpose::Ctmc, i));
        let t0 = Instant::now();
        let traj = crate::ctmc::run(&mut state, p, &[p.horizon], false)?;
        Ok((t0.elapsed().as_secs_f64(), traj.events))
    };
    let diffusion_trial = |i: u64| -> Result<f64> {
        let mut rng = replicate_rng(seed, Purpose::Diffusion, i);
        let t0 = Instant::now();
        diffusion_sample(&table, p.n, &mut rng)?;
        Ok(t0.elapsed().as_secs_f64())
    };
    // warmup, excluded
    ctmc_trial(0)?;
    diffusion_trial(0)?;
    let mut ctmc_total = 0.0;
    let mut diffusion_total = 0.0;
    let mut ctmc_events = Vec::with_capacity(reps);
    for i in 1..=reps as u64 {
        let (secs, events) = ctmc_trial(i)?;
        ctmc_total += secs;
        ctmc_events.push(events);
        diffusion_total += diffusion_trial(i)?;
    }
    let ctmc_seconds = ctmc_total / reps as f64;
    let diffusion_seconds = diffusion_total / reps as f64;
    Ok(BenchReport {
        reps,
        ctmc_seconds,
        diffusion_seconds,
        setup_seconds,
        speedup: ctmc_seconds / diffusion_seconds,
        ctmc_events,
        sde_steps: table.steps(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let mut e0 = vec![0.0; 7];
        e0[0] = 1.0;
        let m = MetricSample::from_pmf(&e0, 100).unwrap();
        assert_eq!((m.empty_count, m.large_count, m.mean_len), (100.0, 0.0, 0.0));
        let mut e6 = vec![0.0; 7];
        e6[6] = 1.0;
        let m = MetricSample::from_pmf(&e6, 100).unwrap();
        assert_eq!((m.empty_count, m.large_count, m.mean_len), (0.0, 100.0, 6.0));
        let uniform = [0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0];
        let m = MetricSample::from_pmf(&uniform, 4).unwrap();
        assert_eq!((m.empty_count, m.large_count, m.mean_len), (1.0, 0.0, 1.5));
        assert!(MetricSample::from_pmf(&[1.0; 6], 4).is_err());
    }

    #[test]
    fn counts_and_pmf_metrics_agree() {
        let x = CountVector::new(vec![3, 2, 0, 1, 0, 0, 2, 1, 1]).unwrap();
        let a = MetricSample::from_counts(&x);
        let b = MetricSample::from_pmf(QueuePmf::from_counts(&x, 8).probs(), 10).unwrap();
        assert!((a.empty_count - b.empty_count).abs() < 1e-12);
        assert!((a.large_count - b.large_count).abs() < 1e-12);
        assert!((a.mean_len - b.mean_len).abs() < 1e-12);
        assert_eq!(a.large_count, 4.0);
    }

    #[test]
    fn wider_level_gives_wider_interval() {
        let samples: Vec<f64> = (0..500).map(|i| ((i * 7919) % 500) as f64 / 10.0 + (i % 3) as f64).collect();
        for method in [CiMethod::Percentile, CiMethod::Normal] {
            let mut prev: Option<Interval> = None;
            for level in [0.5, 0.8, 0.9, 0.95, 0.99] {
                let ci = confidence_interval(&samples, level, method).unwrap();
                if let Some(p) = prev {
                    assert!(ci.low <= p.low && ci.high >= p.high);
                }
                prev = Some(ci);
            }
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.125), 1.5);
        let ci = confidence_interval(&[2.0, 2.0, 2.0], 0.95, CiMethod::Normal).unwrap();
        assert_eq!((ci.low, ci.high), (2.0, 2.0));
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("2:1, 3:2,5:4").unwrap();
        assert_eq!(g, vec![Code::new(2, 1).unwrap(), Code::new(3, 2).unwrap(), Code::new(5, 4).unwrap()]);
        assert!(parse_grid("2:3").is_err());
        assert!(parse_grid("2-1").is_err());
        assert_eq!(paper_grid().len(), 10);
    }

    #[test]
    fn self_consistency_cell_covers_near_nominal() {
        let cfg = CoverageConfig {
            n: 1000,
            horizon: 3.0,
            reps_diffusion: 400,
            reps_reference: 400,
            self_consistency: true,
            ..CoverageConfig::desk()
        };
        let cell = run_cell(&cfg, Code::new(2, 1).unwrap()).unwrap();
        for m in &cell.metrics {
            // the interval itself is estimated, so allow its own sampling spread too
            assert!((m.coverage - 0.95).abs() <= 4.0 * (0.95 * 0.05 / 400.0f64).sqrt() + 0.02, "{m:?}");
            assert!(m.ci_low <= m.ci_high && !m.degenerate);
        }
    }

    #[test]
    fn cells_are_reproducible() {
        let cfg = CoverageConfig {
            n: 200,
            horizon: 1.0,
            reps_diffusion: 20,
            reps_reference: 20,
            ..CoverageConfig::desk()
        };
        let a = run_cell(&cfg, Code::new(3, 2).unwrap()).unwrap();
        let b = run_cell(&cfg, Code::new(3, 2).unwrap()).unwrap();
        assert_eq!(a.reference_samples, b.reference_samples);
        assert_eq!(a.diffusion_samples, b.diffusion_samples);
    }
}
