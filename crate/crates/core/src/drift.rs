//! Drift of the fluctuation diffusion: G(x, r) is the derivative of the
//! mean-field drift F at r in direction x.
//!
//! The arrival part of F_j is λL!·[ζ̄(j−1) − ζ̄(j)], and ζ̄(j, r) is a
//! polynomial in three quantities: the mass below j, the mass at j and the
//! mass above j. Differentiating each factor gives the three arrival pieces
//! of G ([`XiTerm::Prefix`], [`XiTerm::Own`], [`XiTerm::Tail`]); the service
//! part is the difference operator [`XiTerm::Service`].

use crate::rates::{binomial_f, zeta_bar_terms, LevelSums};
use crate::types::{factorial, Code, FluctuationVector, QueuePmf, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiTerm {
    /// Derivative through the mass below j, times Σ_{m<j} x_m.
    Prefix,
    /// Derivative through r_j, times x_j.
    Own,
    /// Derivative through the mass above j, times Σ_{m>j} x_m.
    Tail,
    /// x_{j+1} − x_j.
    Service,
}

struct Directions {
    below: Vec<f64>,
}

impl Directions {
    fn new(x: &[f64]) -> Self {
        let mut below = Vec::with_capacity(x.len() + 1);
        let mut acc = 0.0;
        below.push(0.0);
        for v in x {
            acc += v;
            below.push(acc);
        }
        Directions { below }
    }

    fn below(&self, j: usize) -> f64 {
        self.below[j.min(self.below.len() - 1)]
    }

    /// Σ_{m>j} x_m = −Σ_{m≤j} x_m on the zero-sum space.
    fn above(&self, j: usize) -> f64 {
        -self.below(j + 1)
    }
}

fn xi_arrival(term: XiTerm, j: usize, x: &[f64], dirs: &Directions, sums: &LevelSums<'_>, code: Code) -> f64 {
    let ji = j as isize;
    let direction = match term {
        XiTerm::Prefix => dirs.below(j),
        XiTerm::Own => x.get(j).copied().unwrap_or(0.0),
        XiTerm::Tail => dirs.above(j),
        XiTerm::Service => unreachable!(),
    };
    if direction == 0.0 {
        return 0.0;
    }
    let poly = zeta_bar_terms(code, sums.below(ji), sums.at(ji), sums.above(ji), |i1, i2, i3, p, r, q| {
        let pp = p.powi(i1 as i32) / factorial(i1);
        let rr = r.powi(i2 as i32) / factorial(i2);
        let qq = q.powi(i3 as i32) / factorial(i3);
        match term {
            XiTerm::Prefix if i1 > 0 => p.powi(i1 as i32 - 1) / factorial(i1 - 1) * rr * qq,
            XiTerm::Own => pp * r.powi(i2 as i32 - 1) / factorial(i2 - 1) * qq,
            XiTerm::Tail if i3 > 0 => pp * rr * q.powi(i3 as i32 - 1) / factorial(i3 - 1),
            _ => 0.0,
        }
    });
    poly * direction
}

/// One of the four pieces of G at coordinate `j`.
pub fn xi_components(x: &FluctuationVector, r: &QueuePmf, code: Code, term: XiTerm, j: usize) -> f64 {
    let xs = x.coords();
    match term {
        XiTerm::Service => xs.get(j + 1).copied().unwrap_or(0.0) - xs.get(j).copied().unwrap_or(0.0),
        _ => {
            let sums = LevelSums::new(r.probs(), r.tail_mass());
            let dirs = Directions::new(xs);
            xi_arrival(term, j, xs, &dirs, &sums, code)
        }
    }
}

/// G(x, r) on coordinates 0..=K for raw slices. `x` must have the same length as `probs`.
pub fn drift_g_slice(x: &[f64], probs: &[f64], tail: f64, lambda: f64, code: Code) -> Vec<f64> {
    debug_assert_eq!(x.len(), probs.len());
    let sums = LevelSums::new(probs, tail);
    let dirs = Directions::new(x);
    let scale = lambda * factorial(code.width);
    let k = code.threshold as f64;
    let xi: Vec<f64> = (0..x.len())
        .map(|j| {
            [XiTerm::Prefix, XiTerm::Own, XiTerm::Tail]
                .into_iter()
                .map(|t| xi_arrival(t, j, x, &dirs, &sums, code))
                .sum()
        })
        .collect();
    (0..x.len())
        .map(|j| {
            let prev = if j == 0 { 0.0 } else { xi[j - 1] };
            let next = x.get(j + 1).copied().unwrap_or(0.0);
            let own = if j == 0 { 0.0 } else { x[j] };
            scale * (prev - xi[j]) + k * (next - own)
        })
        .collect()
}

/// Fluctuation drift G(x, r). Linear in x; services never leave level 0.
pub fn drift_g(x: &FluctuationVector, r: &QueuePmf, params: &SystemParams) -> Vec<f64> {
    drift_g_slice(x.coords(), r.probs(), r.tail_mass(), params.lambda, params.code)
}

/// Directional derivative of the power-of-d drift, in closed form.
pub fn drift_g_powerd(x: &FluctuationVector, r: &QueuePmf, d: usize, lambda: f64) -> Vec<f64> {
    drift_g_powerd_slice(x.coords(), r.probs(), r.tail_mass(), d, lambda)
}

pub fn drift_g_powerd_slice(x: &[f64], probs: &[f64], tail: f64, d: usize, lambda: f64) -> Vec<f64> {
    let sums = LevelSums::new(probs, tail);
    let dirs = Directions::new(x);
    // derivative of P(min of d samples = j)
    let dmin: Vec<f64> = (0..x.len())
        .map(|j| {
            let ji = j as isize;
            let (r, q) = (sums.at(ji), sums.above(ji));
            let (dr, dq) = (x[j], dirs.above(j));
            (1..=d)
                .map(|i| {
                    let own = i as f64 * r.powi(i as i32 - 1) * q.powi((d - i) as i32) * dr;
                    let rest = if i < d {
                        (d - i) as f64 * r.powi(i as i32) * q.powi((d - i - 1) as i32) * dq
                    } else {
                        0.0
                    };
                    binomial_f(d, i) * (own + rest)
                })
                .sum()
        })
        .collect();
    (0..x.len())
        .map(|j| {
            let prev = if j == 0 { 0.0 } else { dmin[j - 1] };
            let next = x.get(j + 1).copied().unwrap_or(0.0);
            let own = if j == 0 { 0.0 } else { x[j] };
            lambda * (prev - dmin[j]) + next - own
        })
        .collect()
}

/// Matrix of the linear map x ↦ G(x, r) on coordinates 0..=K, with
/// Σ_{m>j} x_m taken as −Σ_{m≤j} x_m. Row i, column m.
pub fn drift_g_matrix(r: &QueuePmf, params: &SystemParams) -> Vec<Vec<f64>> {
    let dim = r.max_level() + 1;
    let mut cols = Vec::with_capacity(dim);
    for m in 0..dim {
        let mut e = vec![0.0; dim];
        e[m] = 1.0;
        cols.push(drift_g_slice(&e, r.probs(), r.tail_mass(), params.lambda, params.code));
    }
    (0..dim).map(|i| (0..dim).map(|m| cols[m][i]).collect()).collect()
}
