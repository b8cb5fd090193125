//! Euler–Maruyama for the limit diffusion dX = G(X, π(t))dt + a(t)dW on
//! coordinates 0..=K, and the map back to approximate finite-n states.
//!
//! G is linear in X, so each grid time stores the matrix of x ↦ G(x, π(t))
//! next to a(t) = Φ(π(t))^{1/2}. The table is built once and shared by every
//! replicate.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::covariance::{phi_matrix, sqrt_psd};
use crate::drift::drift_g_matrix;
use crate::error::{Error, Result};
use crate::fluid::{solve_ode, uniform_grid, FluidTrajectory};
use crate::types::{CovMatrix, FluctuationVector, QueuePmf, SystemParams, TruncationConfig};

pub const DEFAULT_DT: f64 = 0.1;
/// Per-step projection magnitude above which a run is flagged as
/// dominated by truncation.
pub const PROJECTION_FLAG: f64 = 1e-6;

/// Deterministic coefficients on the SDE grid t_m = m·dt.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    dt: f64,
    times: Vec<f64>,
    pis: Vec<QueuePmf>,
    /// Row-major dim×dim drift matrices.
    drift: Vec<Vec<f64>>,
    phi: Vec<CovMatrix>,
    sqrt: Vec<CovMatrix>,
}

impl CoefficientTable {
    /// Reads π(t_m) off a fluid trajectory whose grid contains every t_m.
    pub fn from_fluid(traj: &FluidTrajectory, p: &SystemParams, dt: f64) -> Result<Self> {
        let times = uniform_grid(p.horizon, dt);
        let mut pis = Vec::with_capacity(times.len());
        for &t in &times {
            let idx = traj.index_of(t);
            if (traj.times[idx] - t).abs() > 1e-9 {
                return Err(Error::validation("grid", "fluid trajectory does not resolve the SDE grid"));
            }
            pis.push(traj.states[idx].clone());
        }
        let coeffs: Vec<(Vec<f64>, CovMatrix, CovMatrix)> = pis
            .par_iter()
            .map(|pi| {
                let g = drift_g_matrix(pi, p).into_iter().flatten().collect();
                let phi = phi_matrix(pi, p);
                let a = sqrt_psd(&phi)?;
                Ok((g, phi, a))
            })
            .collect::<Result<_>>()?;
        let mut table = CoefficientTable {
            dt,
            times,
            pis,
            drift: Vec::new(),
            phi: Vec::new(),
            sqrt: Vec::new(),
        };
        for (g, phi, a) in coeffs {
            table.drift.push(g);
            table.phi.push(phi);
            table.sqrt.push(a);
        }
        Ok(table)
    }

    /// Solves the ODE from `pi0` on the SDE grid and builds the table.
    pub fn build(pi0: &QueuePmf, p: &SystemParams, trunc: &TruncationConfig, dt: f64, h: f64) -> Result<(FluidTrajectory, Self)> {
        if !(dt > 0.0 && dt <= p.horizon) {
            return Err(Error::validation("dt", "dt must be positive and at most T"));
        }
        let traj = solve_ode(pi0, p, trunc, h.min(dt), &uniform_grid(p.horizon, dt))?;
        let table = CoefficientTable::from_fluid(&traj, p, dt)?;
        Ok((traj, table))
    }

    /// Constant coefficients over `steps` steps: drift matrix `g` (row-major)
    /// and covariance `phi`. π is recorded as `pi` at every time.
    pub fn constant(pi: QueuePmf, g: Vec<f64>, phi: CovMatrix, dt: f64, steps: usize) -> Result<Self> {
        let dim = phi.dim();
        if g.len() != dim * dim || pi.max_level() + 1 != dim {
            return Err(Error::validation("dim", "coefficient shapes disagree"));
        }
        let a = sqrt_psd(&phi)?;
        let n = steps + 1;
        Ok(CoefficientTable {
            dt,
            times: (0..n).map(|m| m as f64 * dt).collect(),
            pis: vec![pi; n],
            drift: vec![g; n],
            phi: vec![phi; n],
            sqrt: vec![a; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.phi[0].dim()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn pi(&self, m: usize) -> &QueuePmf {
        &self.pis[m]
    }

    pub fn phi(&self, m: usize) -> &CovMatrix {
        &self.phi[m]
    }

    pub fn sqrt(&self, m: usize) -> &CovMatrix {
        &self.sqrt[m]
    }

    pub fn drift_matrix(&self, m: usize) -> &[f64] {
        &self.drift[m]
    }

    fn apply_drift(&self, m: usize, x: &[f64]) -> Vec<f64> {
        let dim = x.len();
        let g = &self.drift[m];
        (0..dim).map(|i| (0..dim).map(|c| g[i * dim + c] * x[c]).sum()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<FluctuationVector>,
    /// Largest |mean| removed by the zero-sum projection in one step.
    pub max_projection: f64,
    /// Set when `max_projection` exceeds [`PROJECTION_FLAG`].
    pub truncation_flag: bool,
}

impl SdeTrajectory {
    pub fn terminal(&self) -> &FluctuationVector {
        self.states.last().expect("nonempty path")
    }
}

/// Standard normal vectors for one path: `steps` vectors of length `dim`.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, steps: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..steps).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

/// Sums consecutive pairs of fine-grid normals, scaled back to unit variance:
/// the Brownian increments of the same path on the grid with twice the step.
pub fn coarsen_noise(fine: &[Vec<f64>]) -> Vec<Vec<f64>> {
    fine.chunks(2)
        .map(|pair| pair[0].iter().zip(&pair[1]).map(|(a, b)| (a + b) / std::f64::consts::SQRT_2).collect())
        .collect()
}

/// X_{m+1} = X_m + G_m X_m·dt + a_m·√dt·ξ_m, then projected onto Σx = 0.
pub fn euler_maruyama(x0: &FluctuationVector, table: &CoefficientTable, noise: &[Vec<f64>]) -> Result<SdeTrajectory> {
    let dim = table.dim();
    if x0.dim() != dim {
        return Err(Error::validation("x0", "initial state has the wrong dimension"));
    }
    if noise.len() < table.steps() {
        return Err(Error::validation("noise", "one normal vector per step required"));
    }
    let dt = table.dt;
    let sdt = dt.sqrt();
    let mut x = x0.clone();
    let mut out = SdeTrajectory {
        times: table.times.clone(),
        states: Vec::with_capacity(table.times.len()),
        max_projection: 0.0,
        truncation_flag: false,
    };
    out.states.push(x.clone());
    for m in 0..table.steps() {
        let g = table.apply_drift(m, x.coords());
        let w = table.sqrt[m].mul_vec(&noise[m]);
        let next: Vec<f64> = (0..dim).map(|i| x.coords()[i] + g[i] * dt + w[i] * sdt).collect();
        let (projected, removed) = FluctuationVector::project(next);
        out.max_projection = out.max_projection.max(removed);
        x = projected;
        out.states.push(x.clone());
    }
    out.truncation_flag = out.max_projection > PROJECTION_FLAG;
    Ok(out)
}

/// One replicate with noise drawn from `rng`.
pub fn simulate_sde<R: Rng + ?Sized>(x0: &FluctuationVector, table: &CoefficientTable, rng: &mut R) -> Result<SdeTrajectory> {
    let noise = draw_noise(rng, table.steps(), table.dim());
    euler_maruyama(x0, table, &noise)
}

/// π̂ⁿ = π + x/√n on coordinates 0..=K. Entries may be slightly negative.
pub fn reconstruct(pi: &QueuePmf, x: &FluctuationVector, n: usize) -> Result<Vec<f64>> {
    if pi.max_level() + 1 != x.dim() {
        return Err(Error::validation("x", "pmf and fluctuation dimensions differ"));
    }
    let s = (n as f64).sqrt();
    Ok(pi.probs().iter().zip(x.coords()).map(|(p, v)| p + v / s).collect())
}

/// Total negative mass of a reconstructed vector.
pub fn negative_mass(v: &[f64]) -> f64 {
    v.iter().filter(|&&x| x < 0.0).map(|x| -x).sum()
}

/// Exact covariance of the Euler–Maruyama iterates (projection included)
/// started from a deterministic X₀: C ← P(I + G dt)C(I + G dt)ᵀPᵀ + PΦPᵀ·dt.
/// Returns C at every grid time.
pub fn propagate_covariance(table: &CoefficientTable) -> Vec<CovMatrix> {
    let dim = table.dim();
    let dt = table.dt;
    let mut c = vec![0.0; dim * dim];
    let mut out = vec![CovMatrix::zeros(dim)];
    let project = |m: &mut Vec<f64>| {
        // P M Pᵀ with P = I − 11ᵀ/dim
        let rows: Vec<f64> = (0..dim).map(|i| m[i * dim..(i + 1) * dim].iter().sum::<f64>() / dim as f64).collect();
        let cols: Vec<f64> = (0..dim).map(|j| (0..dim).map(|i| m[i * dim + j]).sum::<f64>() / dim as f64).collect();
        let all: f64 = rows.iter().sum::<f64>() / dim as f64;
        for i in 0..dim {
            for j in 0..dim {
                m[i * dim + j] += all - rows[i] - cols[j];
            }
        }
    };
    for m in 0..table.steps() {
        let g = &table.drift[m];
        let mut step = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                step[i * dim + j] = if i == j { 1.0 } else { 0.0 } + g[i * dim + j] * dt;
            }
        }
        let sc: Vec<f64> = (0..dim * dim)
            .map(|ij| {
                let (i, j) = (ij / dim, ij % dim);
                (0..dim).map(|l| step[i * dim + l] * c[l * dim + j]).sum()
            })
            .collect();
        let mut next: Vec<f64> = (0..dim * dim)
            .map(|ij| {
                let (i, j) = (ij / dim, ij % dim);
                (0..dim).map(|l| sc[i * dim + l] * step[j * dim + l]).sum::<f64>() + table.phi[m].get(i, j) * dt
            })
            .collect();
        project(&mut next);
        for i in 0..dim {
            for j in 0..i {
                let v = 0.5 * (next[i * dim + j] + next[j * dim + i]);
                next[i * dim + j] = v;
                next[j * dim + i] = v;
            }
        }
        c = next;
        out.push(CovMatrix::from_raw(dim, c.clone()));
    }
    out
}
