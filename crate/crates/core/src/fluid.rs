//! Mean-field ODE π̇ = F(π) on coordinates 0..=K.
//!
//! Fixed-step RK4 on (π, leak): the leak coordinate accumulates the arrival
//! flux out of level K, so Σπ + leak stays 1 up to round-off. Every grid
//! interval is integrated twice, with h and h/2, and the ℓ₁ gap between the
//! two is the accuracy monitor.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::drift::drift_g_powerd_slice;
use crate::error::{Error, Result};
use crate::rates::{drift_f_powerd_slice, drift_f_slice, leak_rate_slice};
use crate::types::{QueuePmf, SystemParams, TruncationConfig};

pub const DEFAULT_STEP: f64 = 0.01;
/// Step-doubling tolerance in ℓ₁.
pub const STEP_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct FluidTrajectory {
    pub times: Vec<f64>,
    /// Clamped and renormalized states, leak carried as tail mass.
    pub states: Vec<QueuePmf>,
    pub leak: Vec<f64>,
    /// Largest total negative mass clamped from any output state.
    pub max_clamped: f64,
    /// Largest |Σπ + leak − 1| before renormalization.
    pub max_mass_defect: f64,
    /// Largest step-doubling gap over the grid.
    pub max_step_gap: f64,
    /// Set when the leak at T exceeds the truncation's leak_tol.
    pub leak_warning: bool,
}

impl FluidTrajectory {
    /// State at the grid time closest to `t`.
    pub fn at(&self, t: f64) -> &QueuePmf {
        &self.states[self.index_of(t)]
    }

    pub fn index_of(&self, t: f64) -> usize {
        match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.times.len() => i - 1,
            Err(i) => {
                if t - self.times[i - 1] <= self.times[i] - t {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    pub fn terminal(&self) -> &QueuePmf {
        self.states.last().expect("nonempty grid")
    }
}

/// Uniform grid 0, dt, 2dt, …, T (the last point is T exactly).
pub fn uniform_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    (0..=steps).map(|i| if i == steps { horizon } else { i as f64 * dt }).collect()
}

fn rhs(y: &[f64], p: &SystemParams) -> Vec<f64> {
    let dim = y.len() - 1;
    let (probs, leak) = (&y[..dim], y[dim]);
    let mut out = drift_f_slice(probs, leak, p.lambda, p.code);
    out.push(leak_rate_slice(probs, leak, p.lambda, p.code));
    out
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(u, v)| u + a * v).collect()
}

fn rk4_step(y: &[f64], h: f64, p: &SystemParams) -> Vec<f64> {
    let k1 = rhs(y, p);
    let k2 = rhs(&axpy(y, h / 2.0, &k1), p);
    let k3 = rhs(&axpy(y, h / 2.0, &k2), p);
    let k4 = rhs(&axpy(y, h, &k3), p);
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn integrate(mut y: Vec<f64>, span: f64, steps: usize, p: &SystemParams) -> Vec<f64> {
    let h = span / steps as f64;
    for _ in 0..steps {
        y = rk4_step(&y, h, p);
    }
    y
}

/// Solves the ODE from `pi0` (re-truncated at K) and reports the state at
/// every grid time. The grid must be sorted and start at or after 0; `h` is
/// shrunk per interval so each grid time is hit exactly.
pub fn solve_ode(pi0: &QueuePmf, p: &SystemParams, trunc: &TruncationConfig, h: f64, grid: &[f64]) -> Result<FluidTrajectory> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::validation("h", "step must be positive"));
    }
    if grid.is_empty() || grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("grid", "grid must be nonempty, nonnegative and strictly increasing"));
    }
    let start = pi0.retruncate(trunc.max_level);
    let mut coarse: Vec<f64> = start.probs().to_vec();
    coarse.push(start.tail_mass());
    let mut fine = coarse.clone();
    let mut traj = FluidTrajectory {
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
        leak: Vec::with_capacity(grid.len()),
        max_clamped: 0.0,
        max_mass_defect: 0.0,
        max_step_gap: 0.0,
        leak_warning: false,
    };
    let mut t = 0.0;
    for &target in grid {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / h - 1e-9).ceil().max(1.0) as usize;
            coarse = integrate(coarse, span, steps, p);
            fine = integrate(fine, span, 2 * steps, p);
            let gap: f64 = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).sum();
            traj.max_step_gap = traj.max_step_gap.max(gap);
            if !(gap <= STEP_GAP_TOL) {
                return Err(Error::Accuracy {
                    time: target,
                    gap,
                    tol: STEP_GAP_TOL,
                });
            }
            t = target;
        }
        let dim = fine.len() - 1;
        let leak = fine[dim];
        let (pmf, clamped, defect) = QueuePmf::from_state_clamped(&fine[..dim], leak);
        traj.max_clamped = traj.max_clamped.max(clamped);
        traj.max_mass_defect = traj.max_mass_defect.max(defect);
        traj.times.push(target);
        traj.states.push(pmf);
        traj.leak.push(leak);
    }
    traj.leak_warning = traj.leak.last().copied().unwrap_or(0.0) > trunc.leak_tol;
    Ok(traj)
}

/// Tail sums v_m = Σ_{j≥m} r_j, m = 0..=K, with the tail mass included.
pub fn tail_sums(r: &QueuePmf) -> Vec<f64> {
    let mut out = vec![0.0; r.max_level() + 1];
    let mut acc = r.tail_mass();
    for j in (0..=r.max_level()).rev() {
        acc += r.probs()[j];
        out[j] = acc;
    }
    out
}

/// Classical power-of-d equilibrium tail sums v_m = λ^{(d^m − 1)/(d − 1)}
/// (v_m = λ^m for d = 1).
pub fn supermarket_tails(d: usize, lambda: f64, max_level: usize) -> Vec<f64> {
    (0..=max_level)
        .map(|m| {
            let e = if d == 1 {
                m as f64
            } else {
                ((d as f64).powi(m as i32) - 1.0) / (d as f64 - 1.0)
            };
            lambda.powf(e)
        })
        .collect()
}

/// Root of F_d on coordinates 0..=K with Σr = 1, by Newton iteration from
/// the supermarket tails. The first equation is replaced by the mass
/// constraint; the Jacobian is the closed-form G_d on zero-sum directions.
pub fn powerd_fixed_point(d: usize, lambda: f64, max_level: usize) -> Result<QueuePmf> {
    if d == 0 || !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::validation("lambda", "fixed point needs d >= 1 and 0 < lambda < 1"));
    }
    let dim = max_level + 1;
    let v = supermarket_tails(d, lambda, max_level + 1);
    let mut r: Vec<f64> = (0..dim).map(|j| v[j] - v[j + 1]).collect();
    let mass: f64 = r.iter().sum();
    r.iter_mut().for_each(|x| *x /= mass);
    for _ in 0..50 {
        let mut residual = drift_f_powerd_slice(&r, 0.0, d, lambda);
        residual[0] = r.iter().sum::<f64>() - 1.0;
        let norm = residual.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if norm <= 1e-14 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for m in 0..dim {
            let mut e = vec![0.0; dim];
            e[m] = 1.0;
            let col = drift_g_powerd_slice(&e, &r, 0.0, d, lambda);
            for i in 1..dim {
                jac[(i, m)] = col[i];
            }
            jac[(0, m)] = 1.0;
        }
        let step = jac
            .lu()
            .solve(&DVector::from_vec(residual))
            .ok_or_else(|| Error::validation("jacobian", "singular Newton system"))?;
        for (x, s) in r.iter_mut().zip(step.iter()) {
            *x -= s;
        }
    }
    QueuePmf::normalize(&r.iter().map(|&x| x.max(0.0)).collect::<Vec<_>>())
}
