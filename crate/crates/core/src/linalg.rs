//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::types::CovMatrix;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (unsorted) and eigenvectors, column `c` of `vectors` stored
/// at `vectors[r * dim + c]`.
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub dim: usize,
    pub sweeps: usize,
}

/// Cyclic Jacobi, sweeping until the off-diagonal Frobenius norm is at most
/// `1e-13 · ‖A‖_F` (or exactly zero for the zero matrix).
pub fn symmetric_eigen(m: &CovMatrix) -> SymmetricEigen {
    let n = m.dim();
    let mut a = m.entries().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.frobenius();
    let target = 1e-13 * scale;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    SymmetricEigen {
        values: (0..n).map(|i| a[i * n + i]).collect(),
        vectors: v,
        dim: n,
        sweeps,
    }
}

impl SymmetricEigen {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// V · diag(f(λ)) · Vᵀ, symmetric by construction.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> CovMatrix {
        let n = self.dim;
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for c in 0..n {
                    s += self.vectors[i * n + c] * mapped[c] * self.vectors[j * n + c];
                }
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        CovMatrix::from_raw(n, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::rng;
    use rand::Rng;

    #[test]
    fn agrees_with_nalgebra() {
        let mut g = rng(4);
        for _ in 0..50 {
            let n = g.gen_range(1..=12);
            let mut rows = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i..n {
                    let x: f64 = g.gen_range(-1.0..1.0);
                    rows[i][j] = x;
                    rows[j][i] = x;
                }
            }
            let m = CovMatrix::from_rows(&rows).unwrap();
            let ours = symmetric_eigen(&m);
            let mut mine = ours.values.clone();
            mine.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let na = nalgebra::DMatrix::from_row_slice(n, n, m.entries());
            let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in mine.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-10);
            }
            let back = ours.reconstruct(|l| l);
            assert!(back.sub(&m).frobenius() < 1e-11);
        }
    }

    #[test]
    fn zero_matrix_needs_no_sweeps() {
        let e = symmetric_eigen(&CovMatrix::zeros(4));
        assert_eq!(e.sweeps, 0);
        assert!(e.values.iter().all(|&v| v == 0.0));
    }
}
