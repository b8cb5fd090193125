//! Arrival and service rates of the empirical-measure chain and of its
//! mean-field limit.
//!
//! An arrival samples a uniform L-subset of servers; only the multiset of
//! their queue lengths (a [`Configuration`]) matters, and the request adds one
//! job to each of the k shortest. The limit drift F collects the resulting
//! flux through each level via the kernel [`zeta_bar`]: the expected number
//! of routed jobs that land on a queue of length exactly j, times L!.

use crate::error::{Error, Result};
use crate::types::{factorial, Code, CountVector, QueuePmf, SystemParams};

/// Nondecreasing L-tuple of sampled queue lengths.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    levels: Vec<usize>,
}

impl Configuration {
    /// Levels are sorted on construction.
    pub fn new(mut levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("levels", "configuration must be nonempty"));
        }
        levels.sort_unstable();
        Ok(Configuration { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn width(&self) -> usize {
        self.levels.len()
    }

    /// How many sampled queues have length exactly `level`.
    pub fn multiplicity(&self, level: usize) -> usize {
        self.levels.iter().filter(|&&l| l == level).count()
    }

    /// `(level, multiplicity)` pairs in increasing level order.
    pub fn multiplicities(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &l in &self.levels {
            match out.last_mut() {
                Some((lv, m)) if *lv == l => *m += 1,
                _ => out.push((l, 1)),
            }
        }
        out
    }
}

/// Change in occupancy counts caused by one arrival with configuration `cfg`:
/// each of the `k` smallest sampled levels loses a server to the level above.
/// Returned with length `max_level + 2` so the top coordinate can receive flux.
pub fn jump_vector(cfg: &Configuration, k: usize, max_level: usize) -> Vec<i64> {
    let mut delta = vec![0i64; max_level + 2];
    for &l in cfg.levels.iter().take(k) {
        assert!(l <= max_level, "configuration level {l} exceeds truncation {max_level}");
        delta[l] -= 1;
        delta[l + 1] += 1;
    }
    delta
}

/// Iterator over all nondecreasing `width`-tuples with entries in 0..=max_level.
pub struct Configurations {
    current: Option<Vec<usize>>,
    max_level: usize,
}

impl Iterator for Configurations {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        let cur = self.current.take()?;
        let out = Configuration { levels: cur.clone() };
        if let Some(pos) = cur.iter().rposition(|&l| l < self.max_level) {
            let mut next = cur;
            let v = next[pos] + 1;
            for slot in next[pos..].iter_mut() {
                *slot = v;
            }
            self.current = Some(next);
        }
        Some(out)
    }
}

/// Enumerates the configuration set truncated to levels ≤ `max_level`;
/// yields C(max_level + width, width) items.
pub fn enumerate_configs(max_level: usize, width: usize) -> Configurations {
    Configurations {
        current: (width > 0).then(|| vec![0; width]),
        max_level,
    }
}

/// Prefix and suffix sums of a truncated pmf. `above(j)` includes the tail mass.
pub(crate) struct LevelSums<'a> {
    probs: &'a [f64],
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl<'a> LevelSums<'a> {
    pub(crate) fn new(probs: &'a [f64], tail: f64) -> Self {
        let mut prefix = Vec::with_capacity(probs.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for p in probs {
            acc += p;
            prefix.push(acc);
        }
        let mut suffix = vec![tail; probs.len() + 1];
        for j in (0..probs.len()).rev() {
            suffix[j] = suffix[j + 1] + probs[j];
        }
        LevelSums { probs, prefix, suffix }
    }

    pub(crate) fn at(&self, j: isize) -> f64 {
        if j < 0 {
            0.0
        } else {
            self.probs.get(j as usize).copied().unwrap_or(0.0)
        }
    }

    /// Σ_{m<j} r_m
    pub(crate) fn below(&self, j: isize) -> f64 {
        if j <= 0 {
            0.0
        } else {
            self.prefix[(j as usize).min(self.probs.len())]
        }
    }

    /// Σ_{m>j} r_m including the tail beyond K.
    pub(crate) fn above(&self, j: isize) -> f64 {
        let idx = (j + 1).max(0) as usize;
        self.suffix[idx.min(self.probs.len())]
    }
}

/// Kernel sum shared by [`zeta_bar`] and the ξ decomposition of the drift's
/// derivative: Σ_{i1<k} Σ_{i2≥1} weight(i1,i2,i3) · [i2 ∧ (k−i1)] with
/// i3 = L − i1 − i2 the number of sampled queues above level j.
pub(crate) fn zeta_bar_terms(
    code: Code,
    below: f64,
    at: f64,
    above: f64,
    mut weight: impl FnMut(usize, usize, usize, f64, f64, f64) -> f64,
) -> f64 {
    let (l, k) = (code.width, code.threshold);
    let mut total = 0.0;
    for i1 in 0..k.min(l + 1) {
        for i2 in 1..=(l - i1) {
            let i3 = l - i1 - i2;
            let routed = i2.min(k - i1) as f64;
            total += routed * weight(i1, i2, i3, below, at, above);
        }
    }
    total
}

fn zeta_bar_sums(j: isize, sums: &LevelSums<'_>, code: Code) -> f64 {
    if j < 0 {
        return 0.0;
    }
    let at = sums.at(j);
    if at == 0.0 {
        return 0.0;
    }
    zeta_bar_terms(code, sums.below(j), at, sums.above(j), |i1, i2, i3, p, r, q| {
        p.powi(i1 as i32) / factorial(i1) * r.powi(i2 as i32) / factorial(i2) * q.powi(i3 as i32)
            / factorial(i3)
    })
}

/// ζ̄(j, r). Returns 0 for j = −1 and whenever r_j = 0.
pub fn zeta_bar(j: isize, r: &QueuePmf, code: Code) -> f64 {
    let sums = LevelSums::new(r.probs(), r.tail_mass());
    zeta_bar_sums(j, &sums, code)
}

/// Limit drift F on coordinates 0..=K for a raw truncated state. `tail` is
/// the mass beyond K; it counts as "longer queues" in the routing kernel.
/// Services never leave level 0, and inflow from level K+1 is taken as 0.
pub fn drift_f_slice(probs: &[f64], tail: f64, lambda: f64, code: Code) -> Vec<f64> {
    let sums = LevelSums::new(probs, tail);
    let scale = lambda * factorial(code.width);
    let k = code.threshold as f64;
    let zb: Vec<f64> = (0..probs.len()).map(|j| zeta_bar_sums(j as isize, &sums, code)).collect();
    (0..probs.len())
        .map(|j| {
            let prev = if j == 0 { 0.0 } else { zb[j - 1] };
            let next = probs.get(j + 1).copied().unwrap_or(0.0);
            let own = if j == 0 { 0.0 } else { probs[j] };
            scale * (prev - zb[j]) + k * (next - own)
        })
        .collect()
}

/// Limit drift F(r) on coordinates 0..=K.
pub fn drift_f(r: &QueuePmf, params: &SystemParams) -> Vec<f64> {
    drift_f_slice(r.probs(), r.tail_mass(), params.lambda, params.code)
}

/// Arrival flux leaving the top retained level K: λL!·ζ̄(K, r). This is
/// exactly the amount by which Σ_j F_j(r) falls short of zero.
pub fn leak_rate_slice(probs: &[f64], tail: f64, lambda: f64, code: Code) -> f64 {
    let sums = LevelSums::new(probs, tail);
    lambda * factorial(code.width) * zeta_bar_sums(probs.len() as isize - 1, &sums, code)
}

pub(crate) fn binomial_f(n: usize, i: usize) -> f64 {
    factorial(n) / (factorial(i) * factorial(n - i))
}

/// P(shortest of d sampled queues has length exactly j) under r.
pub(crate) fn min_at_level(j: isize, sums: &LevelSums<'_>, d: usize) -> f64 {
    if j < 0 {
        return 0.0;
    }
    let at = sums.at(j);
    let above = sums.above(j);
    (1..=d)
        .map(|i| binomial_f(d, i) * at.powi(i as i32) * above.powi((d - i) as i32))
        .sum()
}

/// Power-of-d drift F_d(r), written directly in terms of the law of the
/// minimum of d sampled queue lengths.
pub fn drift_f_powerd(r: &QueuePmf, d: usize, lambda: f64) -> Vec<f64> {
    drift_f_powerd_slice(r.probs(), r.tail_mass(), d, lambda)
}

pub fn drift_f_powerd_slice(probs: &[f64], tail: f64, d: usize, lambda: f64) -> Vec<f64> {
    let sums = LevelSums::new(probs, tail);
    (0..probs.len())
        .map(|j| {
            let j_i = j as isize;
            let arrivals = lambda * (min_at_level(j_i - 1, &sums, d) - min_at_level(j_i, &sums, d));
            let next = probs.get(j + 1).copied().unwrap_or(0.0);
            let own = if j == 0 { 0.0 } else { probs[j] };
            arrivals + next - own
        })
        .collect()
}

/// C(a, b) as f64. Exact in 128-bit integers while the running product
/// fits, floating point otherwise.
pub fn binomial(a: u64, b: u64) -> f64 {
    if b > a {
        return 0.0;
    }
    let b = b.min(a - b);
    let mut exact: Option<u128> = Some(1);
    let mut approx = 1.0f64;
    for i in 0..b {
        let num = (a - i) as u128;
        let den = (i + 1) as u128;
        exact = exact.and_then(|c| c.checked_mul(num)).map(|c| c / den);
        approx *= num as f64 / den as f64;
    }
    match exact {
        Some(c) => c as f64,
        None => approx,
    }
}

/// Prelimit kernel ζ(j, x) on occupancy counts: the number of (L-subset,
/// routed job) pairs whose job lands on a queue of length exactly j.
pub fn zeta_exact(j: isize, x: &CountVector, code: Code) -> f64 {
    if j < 0 {
        return 0.0;
    }
    let ju = j as usize;
    let at = x.get(ju);
    if at == 0 {
        return 0.0;
    }
    let below: u64 = x.counts().iter().take(ju).sum();
    let above: u64 = x.counts().iter().skip(ju + 1).sum();
    let (l, k) = (code.width, code.threshold);
    let mut total = 0.0;
    for i1 in 0..k.min(l + 1) {
        let c1 = binomial(below, i1 as u64);
        if c1 == 0.0 {
            continue;
        }
        for i2 in 1..=(l - i1) {
            let routed = i2.min(k - i1) as f64;
            total += c1 * routed * binomial(at, i2 as u64) * binomial(above, (l - i1 - i2) as u64);
        }
    }
    total
}

/// Arrival part of F_j by direct summation over configurations with levels
/// ≤ K: λL!·Σ_ℓ ⟨Δ_ℓ, e_j⟩ Π_i r_i^{ρ_i}/ρ_i!. Exact when r has no tail mass.
pub fn arrival_component_oracle(j: usize, r: &QueuePmf, params: &SystemParams) -> f64 {
    let max_level = r.max_level();
    let k = params.threshold();
    let mut total = 0.0;
    for cfg in enumerate_configs(max_level, params.width()) {
        let delta = jump_vector(&cfg, k, max_level);
        let dj = delta[j];
        if dj == 0 {
            continue;
        }
        total += dj as f64 * configuration_weight(&cfg, r);
    }
    params.arrival_scale() * total
}

/// Π_i r_i^{ρ_i(ℓ)}/ρ_i(ℓ)!
pub fn configuration_weight(cfg: &Configuration, r: &QueuePmf) -> f64 {
    cfg.multiplicities()
        .into_iter()
        .map(|(level, m)| r.prob(level as isize).powi(m as i32) / factorial(m))
        .product()
}
