//! Statistical checks that tie the exact chain to its limits: the sup-distance
//! between πⁿ and the ODE as n grows, and the covariance of short-window
//! compensated increments against Φ·δ.

use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::phi_matrix;
use crate::ctmc::{run, CtmcState};
use crate::drift::drift_g_matrix;
use crate::error::{Error, Result};
use crate::fluid::{solve_ode, uniform_grid, DEFAULT_STEP};
use crate::rates::drift_f;
use crate::seeding::{replicate_rng, Purpose};
use crate::types::{CountVector, QueuePmf, SystemParams, TruncationConfig};

/// Machine-checkable outcome with its tolerance spelled out.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub test: String,
    pub statistic: f64,
    pub tolerance: String,
    pub pass: bool,
}

/// Σ_j |a_j − b_j| / 2^j over 0..=K, the tail difference weighted 2^{−(K+1)}.
pub fn weighted_distance(a: &QueuePmf, b: &QueuePmf) -> f64 {
    let k = a.max_level().max(b.max_level());
    let mut d = 0.0;
    let mut w = 1.0;
    for j in 0..=k {
        d += (a.prob(j as isize) - b.prob(j as isize)).abs() * w;
        w *= 0.5;
    }
    d + (a.tail_mass() - b.tail_mass()).abs() * w
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnRow {
    pub n: usize,
    /// Mean over replicates of sup over the grid of the weighted distance.
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnTable {
    pub rows: Vec<LlnRow>,
    /// Least-squares slope of log(error) against log(n).
    pub slope: f64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone)]
pub struct LlnConfig {
    pub ns: Vec<usize>,
    /// Template; its `n` is replaced by each entry of `ns`.
    pub params: SystemParams,
    pub trunc: TruncationConfig,
    pub pi0: QueuePmf,
    /// Spacing of the comparison grid.
    pub grid_dt: f64,
    pub reps: usize,
    pub seed: u64,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs `reps` chains per n from the largest-remainder rounding of n·π₀.
pub fn lln_convergence_study(cfg: &LlnConfig) -> Result<LlnTable> {
    if cfg.ns.len() < 2 || cfg.ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("ns", "need at least two increasing server counts"));
    }
    if cfg.reps < 2 {
        return Err(Error::validation("reps", "need at least two replicates"));
    }
    let grid = uniform_grid(cfg.params.horizon, cfg.grid_dt);
    let fluid = solve_ode(&cfg.pi0, &cfg.params, &cfg.trunc, DEFAULT_STEP.min(cfg.grid_dt), &grid)?;
    let k = cfg.trunc.max_level;
    let mut rows = Vec::with_capacity(cfg.ns.len());
    for (ni, &n) in cfg.ns.iter().enumerate() {
        let p = SystemParams { n, ..cfg.params };
        if n < p.width() {
            return Err(Error::validation("n", "every n must be at least L"));
        }
        let init = CountVector::from_pmf(&cfg.pi0, n)?;
        let errors: Vec<f64> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let rng = replicate_rng(cfg.seed, Purpose::Validation, (ni * cfg.reps + r) as u64);
                let traj = run(&mut CtmcState::new(init.clone(), rng), &p, &grid, false)?;
                Ok(traj
                    .snapshots
                    .iter()
                    .zip(&fluid.states)
                    .map(|(s, pi)| weighted_distance(&s.pmf(k), pi))
                    .fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errors.len() - 1) as f64;
        rows.push(LlnRow {
            n,
            mean_error: mean,
            std_error: (var / errors.len() as f64).sqrt(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_error.ln()).collect();
    let fitted = slope(&xs, &ys);
    let decreasing = rows.windows(2).all(|w| w[1].mean_error < w[0].mean_error);
    let last = rows.last().expect("two rows");
    let verdicts = vec![
        Verdict {
            test: "lln_strictly_decreasing".into(),
            statistic: rows.windows(2).map(|w| w[1].mean_error - w[0].mean_error).fold(f64::NEG_INFINITY, f64::max),
            tolerance: "< 0".into(),
            pass: decreasing,
        },
        Verdict {
            test: "lln_loglog_slope".into(),
            statistic: fitted,
            tolerance: "[-0.65, -0.35]".into(),
            pass: (-0.65..=-0.35).contains(&fitted),
        },
        Verdict {
            test: "lln_error_at_largest_n".into(),
            statistic: last.mean_error * (last.n as f64).sqrt(),
            tolerance: "sqrt(n) * error < 5".into(),
            pass: last.mean_error < 5.0 / (last.n as f64).sqrt(),
        },
    ];
    Ok(LlnTable {
        rows,
        slope: fitted,
        verdicts,
    })
}

#[derive(Debug, Clone)]
pub struct CovariationConfig {
    pub params: SystemParams,
    pub trunc: TruncationConfig,
    /// Chains start empty and run to `t0` before the first window.
    pub t0: f64,
    pub window: f64,
    pub chains: usize,
    /// Consecutive windows per chain.
    pub windows_per_chain: usize,
    /// Entries (i, j) with i, j < coords are compared.
    pub coords: usize,
    /// Add the δ²/2·(GΦ + ΦGᵀ) term to the prediction. Without it the
    /// relative bias of the comparison is of order δ·‖G‖.
    pub window_correction: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovEntry {
    pub i: usize,
    pub j: usize,
    /// Mean of D_i·D_j over windows.
    pub empirical: f64,
    /// Mean over the windows' start states of Φ_ij(πⁿ(s))·δ, plus the
    /// second-order term when enabled.
    pub expected: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariationTable {
    pub windows: usize,
    pub entries: Vec<CovEntry>,
    pub verdict: Verdict,
}

/// D = √n·(πⁿ(s+δ) − πⁿ(s) − F(πⁿ(s))·δ) per window; the mean of D·Dᵀ is
/// compared entrywise to the mean of Φ(πⁿ(s))·δ at 5 standard errors.
/// For the linearized dynamics E[D·Dᵀ] = Φδ + δ²/2·(GΦ + ΦGᵀ) + O(δ³), which
/// `window_correction` includes.
pub fn covariation_check(cfg: &CovariationConfig) -> Result<CovariationTable> {
    let p = &cfg.params;
    let k = cfg.trunc.max_level;
    let c = cfg.coords.min(k + 1);
    if !(cfg.window > 0.0) || cfg.chains == 0 || cfg.windows_per_chain == 0 {
        return Err(Error::validation("window", "need a positive window and at least one window"));
    }
    let end = cfg.t0 + cfg.window * cfg.windows_per_chain as f64;
    let run_params = SystemParams { horizon: end, ..*p };
    let times: Vec<f64> = (0..=cfg.windows_per_chain).map(|w| cfg.t0 + w as f64 * cfg.window).collect();
    let sqrt_n = (p.n as f64).sqrt();
    // per window: products D_i D_j and their predictions for i ≤ j < c
    let per_chain: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..cfg.chains)
        .into_par_iter()
        .map(|ch| {
            let rng = replicate_rng(cfg.seed, Purpose::Validation, ch as u64);
            let traj = run(&mut CtmcState::new(CountVector::empty_start(p.n)?, rng), &run_params, &times, false)?;
            let mut out = Vec::with_capacity(cfg.windows_per_chain);
            for w in traj.snapshots.windows(2) {
                let a = w[0].pmf(k);
                let b = w[1].pmf(k);
                let f = drift_f(&a, p);
                let d: Vec<f64> = (0..c).map(|j| sqrt_n * (b.probs()[j] - a.probs()[j] - f[j] * cfg.window)).collect();
                let phi = phi_matrix(&a, p);
                let g = cfg.window_correction.then(|| drift_g_matrix(&a, p));
                let dim = phi.dim();
                // (GΦ)_ij = Σ_m G_im Φ_mj
                let g_phi = |i: usize, j: usize, g: &Vec<Vec<f64>>| (0..dim).map(|m| g[i][m] * phi.get(m, j)).sum::<f64>();
                let mut prods = Vec::with_capacity(c * (c + 1) / 2);
                let mut expect = Vec::with_capacity(c * (c + 1) / 2);
                for i in 0..c {
                    for j in i..c {
                        prods.push(d[i] * d[j]);
                        let mut e = phi.get(i, j) * cfg.window;
                        if let Some(g) = &g {
                            e += 0.5 * cfg.window * cfg.window * (g_phi(i, j, g) + g_phi(j, i, g));
                        }
                        expect.push(e);
                    }
                }
                out.push((prods, expect));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<&(Vec<f64>, Vec<f64>)> = per_chain.iter().flatten().collect();
    let m = samples.len() as f64;
    let mut entries = Vec::new();
    let mut idx = 0;
    for i in 0..c {
        for j in i..c {
            let prods: Vec<f64> = samples.iter().map(|s| s.0[idx]).collect();
            let mean = prods.iter().sum::<f64>() / m;
            let var = prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let se = (var / m).sqrt();
            let expected = samples.iter().map(|s| s.1[idx]).sum::<f64>() / m;
            let z = if se > 0.0 {
                (mean - expected) / se
            } else if mean == expected {
                0.0
            } else {
                f64::INFINITY
            };
            entries.push(CovEntry {
                i,
                j,
                empirical: mean,
                expected,
                std_error: se,
                z,
            });
            idx += 1;
        }
    }
    let worst = entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    Ok(CovariationTable {
        windows: samples.len(),
        entries,
        verdict: Verdict {
            test: "increment_covariance_vs_phi".into(),
            statistic: worst,
            tolerance: "max |z| <= 5".into(),
            pass: worst <= 5.0,
        },
    })
}
