//! Exact event-driven simulation of the n-server chain on level counts.
//!
//! The state is the vector of how many servers hold j jobs; server identities
//! are never stored. Total event rate is nλ + k·(busy servers). An arrival
//! samples a uniform L-subset of servers and adds one job to each of the k
//! shortest; a departure removes one job from a busy server chosen uniformly,
//! which serves at rate k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Hypergeometric};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::MetricSample;
use crate::rates::Configuration;
use crate::types::{CountVector, QueuePmf, SystemParams};

/// Widest code sampled by explicit urn draws; wider codes use sequential
/// hypergeometric draws per level.
const URN_MAX_WIDTH: usize = 8;

/// Queue lengths of a uniform L-subset of the servers described by `counts`.
pub fn sample_configuration<R: Rng + ?Sized>(counts: &CountVector, width: usize, rng: &mut R) -> Result<Configuration> {
    if (counts.n() as usize) < width {
        return Err(Error::validation("L", "L must satisfy L <= n"));
    }
    let levels = if width <= URN_MAX_WIDTH {
        urn_draw(counts.counts(), width, rng)
    } else {
        hypergeometric_draw(counts.counts(), width, rng)
    };
    Configuration::new(levels)
}

fn urn_draw<R: Rng + ?Sized>(counts: &[u64], width: usize, rng: &mut R) -> Vec<usize> {
    let mut levels: Vec<usize> = Vec::with_capacity(width);
    let mut remaining: u64 = counts.iter().sum();
    for _ in 0..width {
        let mut u = rng.gen_range(0..remaining);
        for (j, &c) in counts.iter().enumerate() {
            let avail = c - levels.iter().filter(|&&l| l == j).count() as u64;
            if u < avail {
                levels.push(j);
                break;
            }
            u -= avail;
        }
        remaining -= 1;
    }
    levels
}

fn hypergeometric_draw<R: Rng + ?Sized>(counts: &[u64], width: usize, rng: &mut R) -> Vec<usize> {
    let mut population: u64 = counts.iter().sum();
    let mut slots = width as u64;
    let mut levels = Vec::with_capacity(width);
    for (j, &c) in counts.iter().enumerate() {
        if slots == 0 {
            break;
        }
        let h = if c == population {
            slots
        } else if c == 0 {
            0
        } else {
            Hypergeometric::new(population, c, slots).expect("valid urn").sample(rng)
        };
        levels.extend(std::iter::repeat_n(j, h as usize));
        slots -= h;
        population -= c;
    }
    levels
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EventKind {
    /// Levels of the k shortest sampled queues, each of which gained one job.
    Arrival { routed: Vec<usize> },
    /// Level of the server that completed a job.
    Departure { level: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
}

/// Chain state plus the generator that drives it.
#[derive(Debug, Clone)]
pub struct CtmcState {
    counts: CountVector,
    t: f64,
    rng: ChaCha8Rng,
    jobs_total: u64,
}

impl CtmcState {
    pub fn new(counts: CountVector, rng: ChaCha8Rng) -> Self {
        let jobs_total = counts.jobs_total();
        CtmcState {
            counts,
            t: 0.0,
            rng,
            jobs_total,
        }
    }

    pub fn seeded(counts: CountVector, seed: u64) -> Self {
        CtmcState::new(counts, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn counts(&self) -> &CountVector {
        &self.counts
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn jobs_total(&self) -> u64 {
        self.jobs_total
    }

    /// Replaces the generator, keeping counts and time. Used to replay one
    /// step many times from the same state.
    pub fn reseed(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// Total event rate nλ + k·busy.
    pub fn total_rate(&self, p: &SystemParams) -> f64 {
        self.counts.n() as f64 * p.lambda + p.threshold() as f64 * self.counts.busy() as f64
    }

    /// Time to the next event, or `None` if no event can ever happen.
    fn holding_time(&mut self, p: &SystemParams) -> Option<f64> {
        let rate = self.total_rate(p);
        if rate <= 0.0 {
            return None;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        Some(e / rate)
    }

    /// Chooses and applies the event type at the current state.
    fn fire(&mut self, p: &SystemParams) -> EventKind {
        let arrivals = self.counts.n() as f64 * p.lambda;
        let rate = arrivals + p.threshold() as f64 * self.counts.busy() as f64;
        let kind = if self.rng.gen::<f64>() * rate < arrivals {
            let cfg = sample_configuration(&self.counts, p.width(), &mut self.rng).expect("n >= L checked at start");
            let routed: Vec<usize> = cfg.levels()[..p.threshold()].to_vec();
            for &l in &routed {
                self.counts.shift(l, l + 1);
            }
            self.jobs_total += routed.len() as u64;
            EventKind::Arrival { routed }
        } else {
            let mut u = self.rng.gen_range(0..self.counts.busy());
            let mut level = 1;
            for (j, &c) in self.counts.counts().iter().enumerate().skip(1) {
                if u < c {
                    level = j;
                    break;
                }
                u -= c;
            }
            self.counts.shift(level, level - 1);
            self.jobs_total -= 1;
            EventKind::Departure { level }
        };
        debug_assert_eq!(self.jobs_total, self.counts.jobs_total());
        kind
    }

    /// Advances by exactly one event. Returns `None` in the absorbing state
    /// (λ = 0, all queues empty), leaving the state untouched.
    pub fn step(&mut self, p: &SystemParams) -> Option<EventRecord> {
        let dt = self.holding_time(p)?;
        self.t += dt;
        let kind = self.fire(p);
        Some(EventRecord { time: self.t, kind })
    }
}

/// State of the chain at one requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub counts: CountVector,
}

impl Snapshot {
    pub fn pmf(&self, max_level: usize) -> QueuePmf {
        QueuePmf::from_counts(&self.counts, max_level)
    }

    pub fn metrics(&self) -> MetricSample {
        MetricSample::from_counts(&self.counts)
    }
}

#[derive(Debug, Clone)]
pub struct CtmcTrajectory {
    pub snapshots: Vec<Snapshot>,
    pub events: u64,
    /// Present only when requested; about nλT(1 + k) entries.
    pub log: Option<Vec<EventRecord>>,
}

impl CtmcTrajectory {
    pub fn terminal(&self) -> &Snapshot {
        self.snapshots.last().expect("at least one sample time")
    }
}

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::validation("sample_times", "at least one sample time required"));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::validation("sample_times", "sample times must be sorted"));
    }
    if times[0] < 0.0 || times[times.len() - 1] > horizon {
        return Err(Error::validation("sample_times", "sample times must lie in [0, T]"));
    }
    Ok(())
}

/// Runs the chain from `state` up to the horizon, recording the state at each
/// sample time (the last state whose jump time does not exceed it).
pub fn run(state: &mut CtmcState, p: &SystemParams, sample_times: &[f64], record_events: bool) -> Result<CtmcTrajectory> {
    check_times(sample_times, p.horizon)?;
    if state.counts.n() != p.n as u64 {
        return Err(Error::validation("n", "initial counts must describe n servers"));
    }
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    let mut events = 0u64;
    let mut log = record_events.then(Vec::new);
    loop {
        let next_time = state.holding_time(p).map_or(f64::INFINITY, |dt| state.t + dt);
        while next_sample < sample_times.len() && sample_times[next_sample] < next_time {
            snapshots.push(Snapshot {
                time: sample_times[next_sample],
                counts: state.counts.clone(),
            });
            next_sample += 1;
        }
        if next_time > p.horizon {
            break;
        }
        state.t = next_time;
        let kind = state.fire(p);
        events += 1;
        if let Some(log) = log.as_mut() {
            log.push(EventRecord { time: state.t, kind });
        }
    }
    Ok(CtmcTrajectory { snapshots, events, log })
}

/// Deterministic in (params, init, sample_times, seed).
pub fn simulate(p: &SystemParams, init: CountVector, sample_times: &[f64], seed: u64) -> Result<CtmcTrajectory> {
    run(&mut CtmcState::seeded(init, seed), p, sample_times, false)
}
