//! Instantaneous covariance Φ of the limit diffusion and its square root.
//!
//! Every arrival term of Φ is a moment of the routed-job counts over the
//! sampled configuration. Only a handful of levels are visible to an entry
//! (i−1, i, j−1, j); all other levels are lumped into range bins, and the
//! moment is a finite sum over how many of the L sampled queues fall in each
//! bin. The same machinery, with binomial instead of power weights, gives the
//! prelimit quadratic-variation kernels on integer counts.

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::rates::{min_at_level, LevelSums};
use crate::types::{factorial, Code, CountVector, CovMatrix, QueuePmf, SystemParams};

const PSD_TOL: f64 = 1e-10;

/// Run of queue lengths treated as one class when drawing the sample.
#[derive(Debug, Clone, Copy)]
struct Bin {
    lo: usize,
    hi: Option<usize>,
    /// Set when the bin is a single level whose routed jobs are tracked.
    exact: bool,
}

/// Splits ℕ₀ around the sorted, deduplicated `exact` levels.
fn bins_around(exact: &[usize]) -> Vec<Bin> {
    let mut bins = Vec::new();
    let mut next = 0usize;
    for &e in exact {
        if e > next {
            bins.push(Bin {
                lo: next,
                hi: Some(e - 1),
                exact: false,
            });
        }
        bins.push(Bin {
            lo: e,
            hi: Some(e),
            exact: true,
        });
        next = e + 1;
    }
    bins.push(Bin {
        lo: next,
        hi: None,
        exact: false,
    });
    bins
}

fn visible_levels(i: usize, j: usize) -> Vec<usize> {
    let mut levels: Vec<usize> = [i as isize - 1, i as isize, j as isize - 1, j as isize]
        .into_iter()
        .filter(|&l| l >= 0)
        .map(|l| l as usize)
        .collect();
    levels.sort_unstable();
    levels.dedup();
    levels
}

/// Σ over compositions (n_b) of L into bins of Π_b weight(b, n_b) · Δ_i Δ_j,
/// where the k shortest sampled queues are routed bin by bin in level order.
fn routing_covariation(bins: &[Bin], code: Code, i: usize, j: usize, weight: &dyn Fn(usize, usize) -> f64) -> f64 {
    let mut counts = vec![0usize; bins.len()];
    let mut total = 0.0;
    compose(bins, code, i, j, weight, 0, code.width, 1.0, &mut counts, &mut total);
    total
}

#[allow(clippy::too_many_arguments)]
fn compose(
    bins: &[Bin],
    code: Code,
    i: usize,
    j: usize,
    weight: &dyn Fn(usize, usize) -> f64,
    b: usize,
    remaining: usize,
    acc: f64,
    counts: &mut [usize],
    total: &mut f64,
) {
    if b == bins.len() - 1 {
        let w = acc * weight(b, remaining);
        if w == 0.0 {
            return;
        }
        counts[b] = remaining;
        let (mut di, mut dj) = (0i64, 0i64);
        let mut slots = code.threshold;
        for (bin, &c) in bins.iter().zip(counts.iter()) {
            let routed = c.min(slots);
            slots -= routed;
            if bin.exact && routed > 0 {
                let r = routed as i64;
                let level = bin.lo;
                if level == i {
                    di -= r;
                }
                if level + 1 == i {
                    di += r;
                }
                if level == j {
                    dj -= r;
                }
                if level + 1 == j {
                    dj += r;
                }
            }
        }
        *total += w * (di * dj) as f64;
        return;
    }
    for c in 0..=remaining {
        let w = acc * weight(b, c);
        if w == 0.0 {
            continue;
        }
        counts[b] = c;
        compose(bins, code, i, j, weight, b + 1, remaining - c, w, counts, total);
    }
}

fn bin_mass(bin: &Bin, sums: &LevelSums<'_>) -> f64 {
    match bin.hi {
        None => sums.above(bin.lo as isize - 1),
        Some(hi) if bin.lo == hi => sums.at(hi as isize),
        Some(hi) => sums.below(hi as isize + 1) - sums.below(bin.lo as isize),
    }
}

fn bin_count(bin: &Bin, x: &CountVector) -> u64 {
    match bin.hi {
        None => x.counts().iter().skip(bin.lo).sum(),
        Some(hi) => (bin.lo..=hi).map(|l| x.get(l)).sum(),
    }
}

fn zbar_sums(i: usize, j: usize, sums: &LevelSums<'_>, code: Code) -> f64 {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let bins = bins_around(&visible_levels(i, j));
    let masses: Vec<f64> = bins.iter().map(|b| bin_mass(b, sums)).collect();
    let weight = |b: usize, c: usize| masses[b].powi(c as i32) / factorial(c);
    routing_covariation(&bins, code, i, j, &weight)
}

/// Z̄(j, r): limit second moment of the arrival jump at coordinate j, per L!.
pub fn zbar_diag(j: usize, r: &QueuePmf, code: Code) -> f64 {
    zbar_offdiag(j, j, r, code)
}

/// Z̄(i, j, r) for any pair; symmetric in (i, j) and equal to
/// [`zbar_diag`] on the diagonal.
pub fn zbar_offdiag(i: usize, j: usize, r: &QueuePmf, code: Code) -> f64 {
    let sums = LevelSums::new(r.probs(), r.tail_mass());
    zbar_sums(i, j, &sums, code)
}

/// Prelimit quadratic-variation kernel Z(i, j, x) on integer counts
/// (binomial weights); Z(j, x) when i = j.
pub fn z_prelimit(i: usize, j: usize, x: &CountVector, code: Code) -> f64 {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let bins = bins_around(&visible_levels(i, j));
    let counts: Vec<u64> = bins.iter().map(|b| bin_count(b, x)).collect();
    let weight = |b: usize, c: usize| crate::rates::binomial(counts[b], c as u64);
    routing_covariation(&bins, code, i, j, &weight)
}

pub fn z_prelimit_diag(j: usize, x: &CountVector, code: Code) -> f64 {
    z_prelimit(j, j, x, code)
}

fn add_service(phi: &mut CovMatrix, probs: &[f64], rate: f64) {
    let dim = phi.dim();
    for level in 1..dim {
        let w = rate * probs[level];
        if w == 0.0 {
            continue;
        }
        let (a, b) = (level - 1, level);
        phi.set_sym(a, a, phi.get(a, a) + w);
        phi.set_sym(b, b, phi.get(b, b) + w);
        phi.set_sym(a, b, phi.get(a, b) - w);
    }
}

/// Φ(r) on coordinates 0..=K: the principal block of the limit covariance
/// operator. Only the upper triangle is computed; it is mirrored.
pub fn phi_matrix(r: &QueuePmf, params: &SystemParams) -> CovMatrix {
    let dim = r.max_level() + 1;
    let sums = LevelSums::new(r.probs(), r.tail_mass());
    let scale = params.arrival_scale();
    let mut phi = CovMatrix::zeros(dim);
    if scale > 0.0 {
        for i in 0..dim {
            for j in i..dim {
                let z = zbar_sums(i, j, &sums, params.code);
                if z != 0.0 {
                    phi.set_sym(i, j, scale * z);
                }
            }
        }
    }
    add_service(&mut phi, r.probs(), params.threshold() as f64);
    phi
}

/// Power-of-d covariance Φ_d(r), written with the law of the shortest of
/// d sampled queues.
pub fn phi_powerd(r: &QueuePmf, d: usize, lambda: f64) -> CovMatrix {
    let dim = r.max_level() + 1;
    let sums = LevelSums::new(r.probs(), r.tail_mass());
    let mut phi = CovMatrix::zeros(dim);
    for j in 0..dim {
        let w = lambda * min_at_level(j as isize, &sums, d);
        if w == 0.0 {
            continue;
        }
        phi.set_sym(j, j, phi.get(j, j) + w);
        if j + 1 < dim {
            phi.set_sym(j + 1, j + 1, phi.get(j + 1, j + 1) + w);
            phi.set_sym(j, j + 1, phi.get(j, j + 1) - w);
        }
    }
    add_service(&mut phi, r.probs(), 1.0);
    phi
}

/// Symmetric PSD square root via Jacobi eigendecomposition. Eigenvalues
/// down to −1e-10·λ_max are clamped to zero; anything more negative is an error.
pub fn sqrt_psd(phi: &CovMatrix) -> Result<CovMatrix> {
    let eig = symmetric_eigen(phi);
    let (lmin, lmax) = (eig.min(), eig.max());
    if lmin < -PSD_TOL * lmax.max(0.0) && lmin < 0.0 {
        return Err(Error::NotPsd {
            min_eig: lmin,
            max_eig: lmax,
        });
    }
    Ok(eig.reconstruct(|l| l.max(0.0).sqrt()))
}

/// Smallest and largest eigenvalue.
pub fn eigen_range(phi: &CovMatrix) -> (f64, f64) {
    let eig = symmetric_eigen(phi);
    (eig.min(), eig.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{enumerate_configs, jump_vector, configuration_weight};
    use crate::test_support::{random_pmf, rng};
    use rand::Rng;

    fn params(l: usize, k: usize, lambda: f64) -> SystemParams {
        SystemParams::new(100, lambda, Code::new(l, k).unwrap(), 1, 10.0).unwrap()
    }

    /// Σ_ℓ Δ_ℓΔ_ℓᵀ Π r^ρ/ρ! over configurations with levels ≤ K.
    fn enumeration_z(r: &QueuePmf, code: Code) -> Vec<Vec<f64>> {
        let kk = r.max_level();
        let mut z = vec![vec![0.0; kk + 2]; kk + 2];
        for cfg in enumerate_configs(kk, code.width) {
            let w = configuration_weight(&cfg, r);
            if w == 0.0 {
                continue;
            }
            let d = jump_vector(&cfg, code.threshold, kk);
            for a in 0..d.len() {
                for b in 0..d.len() {
                    z[a][b] += w * (d[a] * d[b]) as f64;
                }
            }
        }
        z
    }

    #[test]
    fn bins_partition() {
        let b = bins_around(&[0, 1]);
        assert_eq!(b.len(), 3);
        assert!(b[0].exact && b[1].exact && !b[2].exact && b[2].lo == 2);
        let b = bins_around(&[2, 3, 6, 7]);
        let kinds: Vec<(usize, Option<usize>, bool)> = b.iter().map(|x| (x.lo, x.hi, x.exact)).collect();
        assert_eq!(
            kinds,
            vec![
                (0, Some(1), false),
                (2, Some(2), true),
                (3, Some(3), true),
                (4, Some(5), false),
                (6, Some(6), true),
                (7, Some(7), true),
                (8, None, false)
            ]
        );
    }

    #[test]
    fn zbar_examples() {
        let e0 = QueuePmf::point_mass(0, 5);
        let p = params(2, 1, 0.9);
        assert!((p.arrival_scale() * zbar_diag(1, &e0, p.code) - 0.9).abs() < 1e-14);
        assert!((p.arrival_scale() * zbar_offdiag(0, 1, &e0, p.code) + 0.9).abs() < 1e-14);
        let r = QueuePmf::new(vec![0.0, 0.0, 0.5, 0.5, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(zbar_diag(0, &r, p.code), 0.0);
        assert_eq!(zbar_diag(1, &r, p.code), 0.0);
        assert_eq!(zbar_offdiag(1, 4, &r, Code::new(3, 2).unwrap()), 0.0);
    }

    #[test]
    fn zbar_matches_enumeration() {
        let mut g = rng(31);
        for l in 1..=4 {
            for k in 1..=l {
                let code = Code::new(l, k).unwrap();
                for _ in 0..15 {
                    let r = random_pmf(&mut g, 8, 8);
                    let oracle = enumeration_z(&r, code);
                    for i in 0..=8 {
                        for j in 0..=8 {
                            let z = zbar_offdiag(i, j, &r, code);
                            assert!((z - oracle[i][j]).abs() < 1e-10, "L={l} k={k} ({i},{j}) {z} vs {}", oracle[i][j]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn phi_examples() {
        let e0 = QueuePmf::point_mass(0, 4);
        for (l, k) in [(2, 1), (3, 2), (4, 3), (3, 3)] {
            let p = params(l, k, 0.9);
            let phi = phi_matrix(&e0, &p);
            let v = 0.9 * (k * k) as f64;
            assert!((phi.get(0, 0) - v).abs() < 1e-13);
            assert!((phi.get(1, 1) - v).abs() < 1e-13);
            assert!((phi.get(0, 1) + v).abs() < 1e-13);
            let rest: f64 = (0..5)
                .flat_map(|i| (0..5).map(move |j| (i, j)))
                .filter(|&(i, j)| i > 1 || j > 1)
                .map(|(i, j)| phi.get(i, j).abs())
                .sum();
            assert_eq!(rest, 0.0);
        }
    }

    #[test]
    fn phi_matches_enumeration_and_annihilates_ones() {
        let mut g = rng(37);
        for l in 1..=3 {
            for k in 1..=l {
                let p = params(l, k, g.gen_range(0.2..1.2));
                for _ in 0..10 {
                    let kk = g.gen_range(3..=8);
                    let r = random_pmf(&mut g, kk, kk - 1);
                    let phi = phi_matrix(&r, &p);
                    let z = enumeration_z(&r, p.code);
                    for i in 0..=kk {
                        for j in 0..=kk {
                            let mut expect = p.arrival_scale() * z[i][j];
                            let kf = k as f64;
                            if i == j {
                                expect += kf * (if i == 0 { 0.0 } else { r.prob(i as isize) } + r.prob(i as isize + 1));
                            } else if i + 1 == j || j + 1 == i {
                                expect -= kf * r.prob(i.max(j) as isize);
                            }
                            assert!((phi.get(i, j) - expect).abs() < 1e-10);
                        }
                    }
                    let ones = vec![1.0; kk + 1];
                    let rows = phi.mul_vec(&ones);
                    for row in rows.iter().take(kk) {
                        assert!(row.abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn phi_is_psd_and_trace_bounded() {
        let mut g = rng(41);
        for _ in 0..300 {
            let l = g.gen_range(1..=5);
            let k = g.gen_range(1..=l);
            let p = params(l, k, g.gen_range(0.1..1.5));
            let r = { let s = g.gen_range(1..=14); random_pmf(&mut g, 12, s) };
            let phi = phi_matrix(&r, &p);
            let (lmin, lmax) = eigen_range(&phi);
            assert!(lmin >= -1e-10 * lmax, "lmin={lmin} lmax={lmax}");
            let bound = p.arrival_scale() * ((k * k) as f64 * 4f64.powi(l as i32) / factorial(l)) * 2.0 + 2.0 * k as f64;
            assert!(phi.trace() <= bound);
        }
    }

    #[test]
    fn powerd_specialization() {
        let mut g = rng(43);
        for _ in 0..300 {
            let d = g.gen_range(1..=5);
            let lambda = g.gen_range(0.1..1.5);
            let r = { let s = g.gen_range(1..=12); random_pmf(&mut g, 10, s) };
            let a = phi_matrix(&r, &params(d, 1, lambda));
            let b = phi_powerd(&r, d, lambda);
            assert!(a.sub(&b).entries().iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn powerd_examples() {
        let e0 = QueuePmf::point_mass(0, 3);
        let phi = phi_powerd(&e0, 2, 0.9);
        assert!((phi.get(0, 0) - 0.9).abs() < 1e-15);
        assert!((phi.get(1, 1) - 0.9).abs() < 1e-15);
        assert!((phi.get(0, 1) + 0.9).abs() < 1e-15);

        // d = 1, r = (1/2, 1/2) on 0..=2: arrivals 0.45 at j=0 and j=1, services 1/2 from level 1.
        let half = QueuePmf::new(vec![0.5, 0.5, 0.0], 0.0).unwrap();
        let lam = 0.9;
        let phi = phi_powerd(&half, 1, lam);
        let a = lam * 0.5;
        let expect = [
            [a + 0.5, -a - 0.5, 0.0],
            [-a - 0.5, a + a + 0.5, -a],
            [0.0, -a, a],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((phi.get(i, j) - expect[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }

        // all mass at 0: no services
        let phi = phi_powerd(&QueuePmf::point_mass(0, 3), 3, 0.0);
        assert!(phi.entries().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sqrt_examples() {
        let id = CovMatrix::identity(4);
        let s = sqrt_psd(&id).unwrap();
        assert!(s.sub(&id).frobenius() < 1e-14);

        let d = CovMatrix::from_diag(&[4.0, 9.0, 0.0]);
        let s = sqrt_psd(&d).unwrap();
        assert!(s.sub(&CovMatrix::from_diag(&[2.0, 3.0, 0.0])).frobenius() < 1e-14);

        let phi = phi_matrix(&QueuePmf::point_mass(0, 3), &params(2, 1, 0.9));
        let a = sqrt_psd(&phi).unwrap();
        let c = 0.9f64.sqrt() / 2f64.sqrt();
        assert!((a.get(0, 0) - c).abs() < 1e-12);
        assert!((a.get(1, 1) - c).abs() < 1e-12);
        assert!((a.get(0, 1) + c).abs() < 1e-12);
        assert!(a.get(2, 2).abs() < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = CovMatrix::from_diag(&[1.0, -0.5]);
        assert!(matches!(sqrt_psd(&m), Err(Error::NotPsd { .. })));
        let tiny = CovMatrix::from_diag(&[1.0, -1e-13]);
        assert!(sqrt_psd(&tiny).is_ok());
    }

    #[test]
    fn sqrt_contract_on_random_states() {
        let mut g = rng(47);
        for _ in 0..100 {
            let l = g.gen_range(1..=5);
            let k = g.gen_range(1..=l);
            let p = params(l, k, g.gen_range(0.1..1.5));
            let r = { let s = g.gen_range(1..=17); random_pmf(&mut g, 15, s) };
            let phi = phi_matrix(&r, &p);
            let a = sqrt_psd(&phi).unwrap();
            let err = a.mul_sym(&a).sub(&phi).frobenius();
            assert!(err <= 1e-8 * phi.frobenius().max(1.0));
        }
    }

    /// Labelled-server brute force for the prelimit second moments.
    fn brute_force_z(x: &CountVector, code: Code) -> Vec<Vec<f64>> {
        let mut servers = Vec::new();
        for (level, &c) in x.counts().iter().enumerate() {
            servers.extend(std::iter::repeat(level).take(c as usize));
        }
        let n = servers.len();
        let top = x.max_level() + 2;
        let mut z = vec![vec![0.0; top]; top];
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != code.width {
                continue;
            }
            let mut chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| servers[i]).collect();
            chosen.sort_unstable();
            let mut d = vec![0i64; top];
            for &lv in chosen.iter().take(code.threshold) {
                d[lv] -= 1;
                d[lv + 1] += 1;
            }
            for a in 0..top {
                for b in 0..top {
                    z[a][b] += (d[a] * d[b]) as f64;
                }
            }
        }
        z
    }

    #[test]
    fn z_prelimit_examples() {
        let x = CountVector::new(vec![3]).unwrap();
        assert_eq!(z_prelimit_diag(1, &x, Code::new(2, 1).unwrap()), 3.0);
        let x = CountVector::new(vec![0, 0, 2, 2]).unwrap();
        assert_eq!(z_prelimit_diag(1, &x, Code::new(2, 1).unwrap()), 0.0);
    }

    #[test]
    fn z_prelimit_matches_brute_force() {
        let mut g = rng(53);
        for _ in 0..200 {
            let n = g.gen_range(3..=6usize);
            let l = g.gen_range(1..=3usize.min(n));
            let k = g.gen_range(1..=l);
            let levels = g.gen_range(1..=4usize);
            let mut counts = vec![0u64; levels];
            for _ in 0..n {
                counts[g.gen_range(0..levels)] += 1;
            }
            let x = CountVector::new(counts).unwrap();
            let code = Code::new(l, k).unwrap();
            let bf = brute_force_z(&x, code);
            for i in 0..bf.len() {
                for j in 0..bf.len() {
                    assert_eq!(z_prelimit(i, j, &x, code), bf[i][j], "x={:?} ({i},{j})", x.counts());
                }
            }
        }
    }
}
