//! Brute-force oracles shared by the integration targets. None of this calls
//! into the library's own formulas.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random pmf on 0..=max_level with some zero entries. `tail` puts a random
/// amount of mass beyond max_level; `interior` keeps level max_level empty.
pub fn random_probs(g: &mut ChaCha8Rng, max_level: usize, tail: bool, interior: bool) -> (Vec<f64>, f64) {
    let top = if interior { max_level - 1 } else { max_level };
    let support = g.gen_range(1..=top + 1);
    let mut w: Vec<f64> = (0..=max_level)
        .map(|j| if j < support && g.gen_bool(0.85) { g.gen::<f64>() } else { 0.0 })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    let t = if tail { g.gen_range(0.0..0.3) } else { 0.0 };
    let s: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|v| v / s * (1.0 - t)).collect();
    let t = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    (probs, if tail { t } else { 0.0 })
}

/// Strictly positive pmf with no mass at max_level, so ± small zero-sum
/// perturbations stay valid.
pub fn random_interior_probs(g: &mut ChaCha8Rng, max_level: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..max_level).map(|_| g.gen_range(0.05..1.0)).collect();
    w.push(0.0);
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

pub fn random_zero_sum(g: &mut ChaCha8Rng, dim: usize, last_zero: bool) -> Vec<f64> {
    let live = if last_zero { dim - 1 } else { dim };
    let mut x: Vec<f64> = (0..live).map(|_| g.gen_range(-1.0..1.0)).collect();
    let mean = x.iter().sum::<f64>() / live as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
    x.resize(dim, 0.0);
    x
}

/// First and second moments of the arrival jump when L queue lengths are
/// drawn i.i.d. from (probs, tail) and one job goes to each of the k
/// shortest. Levels beyond max_level are one bin; a job landing at
/// max_level + 1 leaves the tracked coordinates.
pub fn arrival_moments(probs: &[f64], tail: f64, width: usize, threshold: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dim = probs.len();
    let bins = dim + 1;
    let weight = |b: usize| if b == dim { tail } else { probs[b] };
    let mut mean = vec![0.0; dim];
    let mut second = vec![vec![0.0; dim]; dim];
    let mut idx = vec![0usize; width];
    loop {
        let w: f64 = idx.iter().map(|&b| weight(b)).product();
        if w > 0.0 {
            let mut levels = idx.clone();
            levels.sort_unstable();
            let mut delta = vec![0.0; dim];
            for &lv in &levels[..threshold] {
                if lv < dim {
                    delta[lv] -= 1.0;
                    if lv + 1 < dim {
                        delta[lv + 1] += 1.0;
                    }
                }
            }
            for i in 0..dim {
                mean[i] += w * delta[i];
                if delta[i] != 0.0 {
                    for j in 0..dim {
                        second[i][j] += w * delta[i] * delta[j];
                    }
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == width {
                return (mean, second);
            }
            idx[pos] += 1;
            if idx[pos] < bins {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Service part of the drift: a busy server at level m moves to m − 1 at rate k.
pub fn service_drift(probs: &[f64], threshold: usize) -> Vec<f64> {
    let k = threshold as f64;
    (0..probs.len())
        .map(|j| {
            let inflow = probs.get(j + 1).copied().unwrap_or(0.0);
            let outflow = if j >= 1 { probs[j] } else { 0.0 };
            k * (inflow - outflow)
        })
        .collect()
}

pub fn service_second(probs: &[f64], threshold: usize) -> Vec<Vec<f64>> {
    let dim = probs.len();
    let k = threshold as f64;
    let mut out = vec![vec![0.0; dim]; dim];
    for m in 1..dim {
        out[m][m] += k * probs[m];
        out[m - 1][m - 1] += k * probs[m];
        out[m][m - 1] -= k * probs[m];
        out[m - 1][m] -= k * probs[m];
    }
    out
}

/// Exact outgoing transitions of the n-server chain from per-server queue
/// lengths: resulting count vector (by level, trailing zeros trimmed) to rate.
pub fn generator_row(levels: &[usize], lambda: f64, width: usize, threshold: usize) -> BTreeMap<Vec<u64>, f64> {
    let n = levels.len();
    let mut out = BTreeMap::new();
    let subsets = subsets_of(n, width);
    let per_subset = n as f64 * lambda / subsets.len() as f64;
    for s in subsets {
        let mut chosen = s.clone();
        chosen.sort_by_key(|&i| (levels[i], i));
        let mut next = levels.to_vec();
        for &i in &chosen[..threshold] {
            next[i] += 1;
        }
        *out.entry(count_vector(&next)).or_insert(0.0) += per_subset;
    }
    for (i, &lv) in levels.iter().enumerate() {
        if lv > 0 {
            let mut next = levels.to_vec();
            next[i] -= 1;
            *out.entry(count_vector(&next)).or_insert(0.0) += threshold as f64;
        }
    }
    out
}

pub fn count_vector(levels: &[usize]) -> Vec<u64> {
    let top = levels.iter().copied().max().unwrap_or(0);
    let mut c = vec![0u64; top + 1];
    for &lv in levels {
        c[lv] += 1;
    }
    c
}

pub fn trim(counts: &[u64]) -> Vec<u64> {
    let mut v = counts.to_vec();
    while v.len() > 1 && *v.last().unwrap() == 0 {
        v.pop();
    }
    v
}

fn subsets_of(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

/// Sorted per-server level lists for n servers with at most `max_jobs` jobs.
pub fn small_states(n: usize, max_jobs: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, lo: usize, budget: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for lv in lo..=budget {
            let rest = n - cur.len() - 1;
            if lv * (rest + 1) > budget {
                break;
            }
            cur.push(lv);
            rec(n, lv, budget - lv, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, 0, max_jobs, &mut Vec::new(), &mut out);
    out
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}
