//! Domain types shared by every module: model constants, truncation policy,
//! truncated probability vectors over queue lengths, exact occupancy counts,
//! zero-sum fluctuation vectors and dense symmetric covariance matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;
const ZERO_SUM_TOL: f64 = 1e-10;

/// An MDS(L,k) code: each file is split over `width` servers and any
/// `threshold` pieces reconstruct it. Requests are routed to the
/// `threshold` shortest of the `width` sampled queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Code {
    pub width: usize,
    pub threshold: usize,
}

impl Code {
    pub fn new(width: usize, threshold: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::validation("L", "L must be positive"));
        }
        if threshold == 0 {
            return Err(Error::validation("k", "k must be positive"));
        }
        if threshold > width {
            return Err(Error::validation("k", "k must satisfy k <= L"));
        }
        Ok(Code { width, threshold })
    }

    /// Power-of-d routing: sample `d` queues, join the shortest.
    pub fn power_of(d: usize) -> Result<Self> {
        Code::new(d, 1)
    }
}

/// Model constants of the n-server system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n: usize,
    /// Per-server request arrival rate.
    pub lambda: f64,
    pub code: Code,
    /// Files per L-subset. Recorded only; it never enters a rate.
    pub files_per_subset: usize,
    pub horizon: f64,
}

impl SystemParams {
    /// `lambda == 0` is accepted as the degenerate pure-service system.
    pub fn new(n: usize, lambda: f64, code: Code, files_per_subset: usize, horizon: f64) -> Result<Self> {
        if code.width > n {
            return Err(Error::validation("L", "L must satisfy L <= n"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::validation("lambda", "lambda must be finite and nonnegative"));
        }
        if files_per_subset == 0 {
            return Err(Error::validation("c", "c must be at least 1"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::validation("T", "T must be positive"));
        }
        Ok(SystemParams {
            n,
            lambda,
            code,
            files_per_subset,
            horizon,
        })
    }

    pub fn width(&self) -> usize {
        self.code.width
    }

    pub fn threshold(&self) -> usize {
        self.code.threshold
    }

    /// λ·L!, the prefactor of every arrival term in the limit.
    pub fn arrival_scale(&self) -> f64 {
        self.lambda * factorial(self.code.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    /// Highest retained queue length K; coordinates are 0..=K.
    pub max_level: usize,
    /// Warning threshold on mass that leaks past `max_level`.
    pub leak_tol: f64,
}

impl TruncationConfig {
    pub fn new(max_level: usize, leak_tol: f64) -> Result<Self> {
        if max_level < 2 {
            return Err(Error::validation("K", "K must be at least 2"));
        }
        if !(leak_tol >= 0.0) {
            return Err(Error::validation("leak_tol", "leak_tol must be nonnegative"));
        }
        Ok(TruncationConfig { max_level, leak_tol })
    }

    pub fn dim(&self) -> usize {
        self.max_level + 1
    }
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            max_level: 20,
            leak_tol: 1e-6,
        }
    }
}

/// Probability vector over queue lengths 0..=K plus the mass sitting beyond K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePmf {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl QueuePmf {
    pub fn new(probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::validation("probs", "empty probability vector"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || !(tail_mass >= 0.0) {
            return Err(Error::validation("probs", "probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum::<f64>() + tail_mass;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::validation("probs", format!("total mass {total} differs from 1")));
        }
        Ok(QueuePmf { probs, tail_mass })
    }

    /// Rescales a nonnegative vector to unit mass.
    pub fn normalize(v: &[f64]) -> Result<Self> {
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::validation("v", "entries must be finite and nonnegative"));
        }
        let total: f64 = v.iter().sum();
        if !(total > 0.0) {
            return Err(Error::validation("v", "vector has zero mass"));
        }
        QueuePmf::new(v.iter().map(|x| x / total).collect(), 0.0)
    }

    /// Point mass at queue length `level` on coordinates 0..=max_level.
    pub fn point_mass(level: usize, max_level: usize) -> Self {
        assert!(level <= max_level);
        let mut probs = vec![0.0; max_level + 1];
        probs[level] = 1.0;
        QueuePmf { probs, tail_mass: 0.0 }
    }

    /// Empirical measure of a count vector, truncated at `max_level`.
    pub fn from_counts(counts: &CountVector, max_level: usize) -> Self {
        let n = counts.n() as f64;
        let probs: Vec<f64> = (0..=max_level).map(|j| counts.get(j) as f64 / n).collect();
        let beyond: u64 = counts.counts().iter().skip(max_level + 1).sum();
        QueuePmf {
            probs,
            tail_mass: beyond as f64 / n,
        }
    }

    /// Builds a pmf from an integrator state: negatives are clamped to zero,
    /// the leaked mass becomes the tail, and the result is rescaled to unit
    /// mass. Returns the pmf, the clamped magnitude and the rescaling defect.
    pub(crate) fn from_state_clamped(state: &[f64], leak: f64) -> (Self, f64, f64) {
        let mut clamped = 0.0;
        let probs: Vec<f64> = state
            .iter()
            .map(|&p| {
                if p < 0.0 {
                    clamped += -p;
                    0.0
                } else {
                    p
                }
            })
            .collect();
        let tail = leak.max(0.0);
        let total = probs.iter().sum::<f64>() + tail;
        let probs = probs.into_iter().map(|p| p / total).collect();
        (
            QueuePmf {
                probs,
                tail_mass: tail / total,
            },
            clamped,
            (total - 1.0).abs(),
        )
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// K, the highest retained level.
    pub fn max_level(&self) -> usize {
        self.probs.len() - 1
    }

    /// r_j, with r_j = 0 outside 0..=K (so r_{-1} = 0).
    pub fn prob(&self, j: isize) -> f64 {
        if j < 0 {
            0.0
        } else {
            self.probs.get(j as usize).copied().unwrap_or(0.0)
        }
    }

    /// Copy re-truncated at a different `max_level`; mass cut off is moved to the tail.
    pub fn retruncate(&self, max_level: usize) -> Self {
        let mut probs = vec![0.0; max_level + 1];
        let mut tail = self.tail_mass;
        for (j, &p) in self.probs.iter().enumerate() {
            if j <= max_level {
                probs[j] = p;
            } else {
                tail += p;
            }
        }
        QueuePmf { probs, tail_mass: tail }
    }
}

/// Number of servers at each queue length for the exact chain. Never truncated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<u64>,
    n: u64,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::validation("counts", "at least one server required"));
        }
        let mut cv = CountVector { counts, n };
        cv.trim();
        Ok(cv)
    }

    /// All `n` queues empty.
    pub fn empty_start(n: usize) -> Result<Self> {
        CountVector::new(vec![n as u64])
    }

    /// Rounds `n·pmf` to integers by largest remainder so the counts sum to `n`.
    /// Tail mass is placed at level K+1.
    pub fn from_pmf(pmf: &QueuePmf, n: usize) -> Result<Self> {
        let mut weights: Vec<f64> = pmf.probs().to_vec();
        weights.push(pmf.tail_mass());
        let scaled: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
        let mut counts: Vec<u64> = scaled.iter().map(|s| s.floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut order: Vec<usize> = (0..scaled.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = scaled[a] - scaled[a].floor();
            let fb = scaled[b] - scaled[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &idx in order.iter().take((n as u64).saturating_sub(assigned) as usize) {
            counts[idx] += 1;
        }
        CountVector::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, level: usize) -> u64 {
        self.counts.get(level).copied().unwrap_or(0)
    }

    /// Servers with at least one job.
    pub fn busy(&self) -> u64 {
        self.n - self.get(0)
    }

    pub fn jobs_total(&self) -> u64 {
        self.counts.iter().enumerate().map(|(j, c)| j as u64 * c).sum()
    }

    /// Highest occupied level.
    pub fn max_level(&self) -> usize {
        self.counts.len() - 1
    }

    /// Moves one server from level `from` to level `to`.
    pub(crate) fn shift(&mut self, from: usize, to: usize) {
        debug_assert!(self.get(from) > 0, "no server at level {from}");
        if to >= self.counts.len() {
            self.counts.resize(to + 1, 0);
        }
        self.counts[from] -= 1;
        self.counts[to] += 1;
        self.trim();
    }

    fn trim(&mut self) {
        while self.counts.len() > 1 && *self.counts.last().unwrap() == 0 {
            self.counts.pop();
        }
    }
}

/// Truncated element of the zero-sum fluctuation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationVector {
    coords: Vec<f64>,
}

impl FluctuationVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let sum: f64 = coords.iter().sum();
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("x", "coordinates must be finite"));
        }
        if sum.abs() > ZERO_SUM_TOL {
            return Err(Error::validation("x", format!("coordinates sum to {sum:e}, not 0")));
        }
        Ok(FluctuationVector { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        FluctuationVector {
            coords: vec![0.0; dim],
        }
    }

    /// Orthogonal projection onto the zero-sum hyperplane; also returns |mean| removed.
    pub fn project(mut coords: Vec<f64>) -> (Self, f64) {
        let mean = coords.iter().sum::<f64>() / coords.len() as f64;
        for c in coords.iter_mut() {
            *c -= mean;
        }
        (FluctuationVector { coords }, mean.abs())
    }

    /// Centered, scaled deviation sqrt(n)·(empirical − limit).
    pub fn centered(empirical: &QueuePmf, limit: &QueuePmf, n: u64) -> Result<Self> {
        if empirical.max_level() != limit.max_level() {
            return Err(Error::validation("pmf", "truncation levels differ"));
        }
        let s = (n as f64).sqrt();
        let coords = empirical
            .probs()
            .iter()
            .zip(limit.probs())
            .map(|(a, b)| s * (a - b))
            .collect();
        Ok(FluctuationVector::project(coords).0)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CovMatrix {
    pub fn zeros(dim: usize) -> Self {
        CovMatrix {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CovMatrix::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = CovMatrix::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.entries[i * diag.len() + i] = *d;
        }
        m
    }

    /// Rejects matrices that are not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::validation("entries", "matrix must be square"));
        }
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(Error::validation("entries", format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(CovMatrix { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Writes both (i,j) and (j,i).
    pub(crate) fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Plain matrix product; the result is symmetrized, so only use it where
    /// the product is symmetric in exact arithmetic (e.g. a·a for symmetric a).
    pub fn mul_sym(&self, other: &CovMatrix) -> CovMatrix {
        let d = self.dim;
        let mut out = CovMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for m in 0..d {
                    s += self.get(i, m) * other.get(m, j);
                }
                out.set_sym(i, j, s);
            }
        }
        out
    }

    pub fn sub(&self, other: &CovMatrix) -> CovMatrix {
        CovMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> CovMatrix {
        CovMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|a| a * s).collect(),
        }
    }

    pub(crate) fn from_raw(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        CovMatrix { dim, entries }
    }
}

pub(crate) fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(QueuePmf::normalize(&[1.0, 0.0, 0.0]).unwrap().probs(), &[1.0, 0.0, 0.0]);
        assert_eq!(QueuePmf::normalize(&[2.0, 2.0]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(QueuePmf::normalize(&[1.0, 1.0, 2.0]).unwrap().probs(), &[0.25, 0.25, 0.5]);
        assert_eq!(QueuePmf::normalize(&[1.0, 1.0]).unwrap().tail_mass(), 0.0);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(QueuePmf::normalize(&[0.0, 0.0]).is_err());
        assert!(QueuePmf::normalize(&[1.0, -0.5]).is_err());
        assert!(QueuePmf::normalize(&[]).is_err());
    }

    #[test]
    fn pmf_from_counts_examples() {
        let c = CountVector::new(vec![3, 0]).unwrap();
        let p = QueuePmf::from_counts(&c, 2);
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0]);
        assert_eq!(p.tail_mass(), 0.0);

        let c = CountVector::new(vec![1, 2, 1]).unwrap();
        let p = QueuePmf::from_counts(&c, 2);
        assert_eq!(p.probs(), &[0.25, 0.5, 0.25]);
        assert_eq!(p.tail_mass(), 0.0);

        let c = CountVector::new(vec![0, 0, 0, 4]).unwrap();
        let p = QueuePmf::from_counts(&c, 2);
        assert_eq!(p.probs(), &[0.0, 0.0, 0.0]);
        assert_eq!(p.tail_mass(), 1.0);
    }

    #[test]
    fn params_validation_names_field() {
        let err = Code::new(2, 3).unwrap_err();
        assert!(err.to_string().contains("k must satisfy k <= L"));
        let code = Code::new(3, 2).unwrap();
        assert!(SystemParams::new(2, 0.9, code, 1, 10.0).is_err());
        assert!(SystemParams::new(5, -1.0, code, 1, 10.0).is_err());
        assert!(SystemParams::new(5, 0.9, code, 0, 10.0).is_err());
        assert!(SystemParams::new(5, 0.9, code, 1, 0.0).is_err());
        assert!(TruncationConfig::new(1, 1e-6).is_err());
    }

    #[test]
    fn pmf_rejects_mass_defect() {
        assert!(QueuePmf::new(vec![0.5, 0.4], 0.0).is_err());
        assert!(QueuePmf::new(vec![0.5, 0.4], 0.1).is_ok());
    }

    #[test]
    fn from_pmf_rounds_to_n() {
        let p = QueuePmf::normalize(&[1.0, 1.0, 1.0]).unwrap();
        let c = CountVector::from_pmf(&p, 100).unwrap();
        assert_eq!(c.n(), 100);
        assert_eq!(c.counts(), &[34, 33, 33]);
    }

    #[test]
    fn fluctuation_projection() {
        let (x, removed) = FluctuationVector::project(vec![1.0, 2.0, 3.0]);
        assert!((removed - 2.0).abs() < 1e-15);
        assert_eq!(x.coords(), &[-1.0, 0.0, 1.0]);
        assert!(FluctuationVector::new(vec![1.0, 0.0]).is_err());
    }
}
