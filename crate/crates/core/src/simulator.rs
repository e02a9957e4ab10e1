//! Monte-Carlo simulation of the multi-class priority M/M/c queue.
//!
//! The chain is simulated through its jump process: one merged arrival stream
//! thinned into classes plus `b mu` for completions. Within a level clients
//! are served FIFO, which does not affect the counts tracked here.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const BATCHES: usize = 32;
/// Two-sided 95% Student-t quantile with `BATCHES - 1` degrees of freedom.
const T_QUANTILE: f64 = 2.0395;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Occupancy weighted by sojourn time.
    #[default]
    TimeAveraged,
    /// State observed once per event (embedded chain).
    EventAveraged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    #[default]
    NonPreemptive,
    /// An arrival displaces the lowest-priority client in service if it has lower priority.
    Preemptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelParams,
    pub warmup_events: u64,
    pub sample_events: u64,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub discipline: Discipline,
}

impl SimConfig {
    pub fn new(model: ModelParams, warmup_events: u64, sample_events: u64, seed: u64) -> Self {
        Self {
            model,
            warmup_events,
            sample_events,
            seed,
            sampling: SamplingMode::default(),
            discipline: Discipline::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Per-level queue-length histograms, highest priority first.
    pub level_histograms: Vec<Vec<f64>>,
    /// 95% batch-means half-widths matching `level_histograms`.
    pub level_half_widths: Vec<Vec<f64>>,
    /// Fraction of time with `b` busy servers, `b = 0..=c`.
    pub busy_histogram: Vec<f64>,
    pub empty_fraction: f64,
    pub empty_std_error: f64,
    pub mean_queue: Vec<f64>,
    pub mean_queue_std_error: Vec<f64>,
    pub total_time: f64,
    pub events: u64,
}

#[derive(Default, Clone)]
struct Accumulator {
    levels: Vec<Vec<f64>>,
    busy: Vec<f64>,
    weight: f64,
}

impl Accumulator {
    fn new(levels: usize, servers: usize) -> Self {
        Self {
            levels: vec![Vec::new(); levels],
            busy: vec![0.0; servers + 1],
            weight: 0.0,
        }
    }

    fn record(&mut self, queues: &[u64], busy: usize, w: f64) {
        for (hist, &q) in self.levels.iter_mut().zip(queues) {
            let q = q as usize;
            if hist.len() <= q {
                hist.resize(q + 1, 0.0);
            }
            hist[q] += w;
        }
        self.busy[busy] += w;
        self.weight += w;
    }

    fn normalized(&self, level: usize, len: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.levels[level].iter().map(|v| v / self.weight).collect();
        out.resize(len, 0.0);
        out
    }
}

fn mean_and_std_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct Queue<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    queues: Vec<u64>,
    in_service: Vec<u64>,
    busy: usize,
    cumulative: Vec<f64>,
    arrival_rate: f64,
}

impl<'a> Queue<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let rates = cfg.model.arrival_rates();
        let arrival_rate: f64 = rates.iter().sum();
        let mut acc = 0.0;
        let cumulative = rates
            .iter()
            .map(|r| {
                acc += r;
                acc / arrival_rate
            })
            .collect();
        let levels = cfg.model.levels();
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            queues: vec![0; levels],
            in_service: vec![0; levels],
            busy: 0,
            cumulative,
            arrival_rate,
        }
    }

    fn highest_waiting(&self) -> Option<usize> {
        self.queues.iter().position(|&q| q > 0)
    }

    /// Advances one event, first recording the sojourn in the pre-event state; returns its length.
    fn step(&mut self, record: Option<&mut Accumulator>) -> f64 {
        let servers = self.cfg.model.servers();
        let service_rate = self.busy as f64 * self.cfg.model.mu();
        let total = self.arrival_rate + service_rate;
        let u: f64 = self.rng.random();
        let dt = -(1.0 - u).ln() / total;
        if let Some(acc) = record {
            let w = match self.cfg.sampling {
                SamplingMode::TimeAveraged => dt,
                SamplingMode::EventAveraged => 1.0,
            };
            acc.record(&self.queues, self.busy, w);
        }
        let pick: f64 = self.rng.random::<f64>() * total;
        if pick < self.arrival_rate {
            let v: f64 = self.rng.random();
            let class = self
                .cumulative
                .iter()
                .position(|&c| v < c)
                .unwrap_or(self.cumulative.len() - 1);
            self.arrive(class, servers);
        } else {
            self.complete();
        }
        debug_assert!(
            self.busy == servers || self.queues.iter().all(|&q| q == 0),
            "idle server with waiting clients"
        );
        dt
    }

    fn arrive(&mut self, class: usize, servers: usize) {
        if self.busy < servers {
            self.busy += 1;
            self.in_service[class] += 1;
            return;
        }
        if self.cfg.discipline == Discipline::Preemptive {
            if let Some(victim) = (class + 1..self.in_service.len())
                .rev()
                .find(|&j| self.in_service[j] > 0)
            {
                self.in_service[victim] -= 1;
                self.queues[victim] += 1;
                self.in_service[class] += 1;
                return;
            }
        }
        self.queues[class] += 1;
    }

    fn complete(&mut self) {
        if self.cfg.discipline == Discipline::Preemptive {
            // the finishing client's class matters only when service can be displaced
            let mut v = self.rng.random_range(0..self.busy as u64);
            let class = self
                .in_service
                .iter()
                .position(|&s| {
                    if v < s {
                        true
                    } else {
                        v -= s;
                        false
                    }
                })
                .expect("a busy server exists");
            self.in_service[class] -= 1;
        }
        match self.highest_waiting() {
            Some(next) => {
                self.queues[next] -= 1;
                self.in_service[next] += 1;
            }
            None => self.busy -= 1,
        }
    }
}

/// Runs one replication; deterministic for a given configuration.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    if cfg.sample_events < BATCHES as u64 {
        return Err(Error::InvalidParameter(format!(
            "at least {BATCHES} sample events are needed"
        )));
    }
    if cfg.sample_events < 10 * cfg.warmup_events {
        log::warn!(
            "sample events ({}) fewer than ten times the warm-up ({})",
            cfg.sample_events,
            cfg.warmup_events
        );
    }
    let levels = cfg.model.levels();
    let servers = cfg.model.servers();
    let mut queue = Queue::new(cfg);
    for _ in 0..cfg.warmup_events {
        queue.step(None);
    }

    let per_batch = cfg.sample_events / BATCHES as u64;
    let mut batches = Vec::with_capacity(BATCHES);
    let mut total_time = 0.0;
    for b in 0..BATCHES {
        let events = if b + 1 == BATCHES {
            cfg.sample_events - per_batch * (BATCHES as u64 - 1)
        } else {
            per_batch
        };
        let mut acc = Accumulator::new(levels, servers);
        for _ in 0..events {
            total_time += queue.step(Some(&mut acc));
        }
        batches.push(acc);
    }

    let mut overall = Accumulator::new(levels, servers);
    for acc in &batches {
        for (k, hist) in acc.levels.iter().enumerate() {
            if overall.levels[k].len() < hist.len() {
                overall.levels[k].resize(hist.len(), 0.0);
            }
            for (o, v) in overall.levels[k].iter_mut().zip(hist) {
                *o += v;
            }
        }
        for (o, v) in overall.busy.iter_mut().zip(&acc.busy) {
            *o += v;
        }
        overall.weight += acc.weight;
    }

    let mut level_histograms = Vec::with_capacity(levels);
    let mut level_half_widths = Vec::with_capacity(levels);
    let mut mean_queue = Vec::with_capacity(levels);
    let mut mean_queue_std_error = Vec::with_capacity(levels);
    for k in 0..levels {
        let len = overall.levels[k].len();
        let per: Vec<Vec<f64>> = batches.iter().map(|a| a.normalized(k, len)).collect();
        let widths = (0..len)
            .map(|n| {
                let col: Vec<f64> = per.iter().map(|h| h[n]).collect();
                T_QUANTILE * mean_and_std_error(&col).1
            })
            .collect();
        let means: Vec<f64> = per
            .iter()
            .map(|h| h.iter().enumerate().map(|(n, p)| n as f64 * p).sum())
            .collect();
        let hist = overall.normalized(k, len);
        mean_queue.push(hist.iter().enumerate().map(|(n, p)| n as f64 * p).sum());
        mean_queue_std_error.push(mean_and_std_error(&means).1);
        level_histograms.push(hist);
        level_half_widths.push(widths);
    }
    let busy_histogram: Vec<f64> = overall.busy.iter().map(|v| v / overall.weight).collect();
    let empties: Vec<f64> = batches.iter().map(|a| a.busy[0] / a.weight).collect();

    Ok(SimResult {
        level_histograms,
        level_half_widths,
        empty_fraction: busy_histogram[0],
        empty_std_error: mean_and_std_error(&empties).1,
        busy_histogram,
        mean_queue,
        mean_queue_std_error,
        total_time,
        events: cfg.sample_events,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    /// 1-based level, 1 = highest priority.
    pub level: usize,
    pub total_variation: f64,
    /// Largest `|simulated - analytic|` in units of the bin's standard error.
    pub max_z: f64,
}

/// Per-level total-variation distance and worst standardized deviation against full analytic marginals.
pub fn compare_marginals(
    res: &SimResult,
    analytic: &[Vec<f64>],
) -> Result<Vec<MarginalComparison>> {
    if analytic.len() != res.level_histograms.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} analytic marginals for {} simulated levels",
            analytic.len(),
            res.level_histograms.len()
        )));
    }
    let rows = res
        .level_histograms
        .iter()
        .zip(&res.level_half_widths)
        .zip(analytic)
        .enumerate()
        .map(|(k, ((sim, widths), exact))| {
            let len = sim.len().max(exact.len());
            let mut tv = 0.0;
            let mut max_z: f64 = 0.0;
            for n in 0..len {
                let a = sim.get(n).copied().unwrap_or(0.0);
                let b = exact.get(n).copied().unwrap_or(0.0);
                tv += (a - b).abs();
                let se = widths.get(n).copied().unwrap_or(0.0) / T_QUANTILE;
                if se > 0.0 {
                    max_z = max_z.max((a - b).abs() / se);
                }
            }
            MarginalComparison {
                level: k + 1,
                total_variation: 0.5 * tv,
                max_z,
            }
        })
        .collect();
    Ok(rows)
}

/// `level,n,mass,half_width` rows (1-based level).
pub fn histogram_csv(res: &SimResult) -> String {
    let mut out = String::from("level,n,mass,half_width\n");
    for (k, (hist, widths)) in res
        .level_histograms
        .iter()
        .zip(&res.level_half_widths)
        .enumerate()
    {
        for (n, (m, w)) in hist.iter().zip(widths).enumerate() {
            let _ = writeln!(out, "{},{},{:?},{:?}", k + 1, n, m, w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(rates: Vec<f64>, servers: usize, events: u64, seed: u64) -> SimConfig {
        SimConfig::new(
            ModelParams::new(servers, 1.0, rates).unwrap(),
            events / 20,
            events,
            seed,
        )
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate(&config(vec![0.3, 0.2], 2, 20_000, 3)).unwrap();
        let b = simulate(&config(vec![0.3, 0.2], 2, 20_000, 3)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&config(vec![0.3, 0.2], 2, 20_000, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn histograms_are_normalized() {
        let res = simulate(&config(vec![0.4, 0.3, 0.1], 3, 50_000, 9)).unwrap();
        for hist in &res.level_histograms {
            assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(hist.iter().all(|&v| v >= 0.0));
        }
        assert!((res.busy_histogram.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mm1_mean_queue() {
        let res = simulate(&config(vec![0.5], 1, 2_000_000, 1)).unwrap();
        let se = res.mean_queue_std_error[0];
        assert!(
            (res.mean_queue[0] - 0.5).abs() < 4.0 * se,
            "{} +- {se}",
            res.mean_queue[0]
        );
        assert!((res.empty_fraction - 0.5).abs() < 4.0 * res.empty_std_error);
    }

    #[test]
    fn identical_inputs_have_zero_distance() {
        let res = simulate(&config(vec![0.3, 0.2], 1, 10_000, 2)).unwrap();
        let rows = compare_marginals(&res, &res.level_histograms).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.total_variation == 0.0 && r.max_z == 0.0));
        assert!(matches!(
            compare_marginals(&res, &res.level_histograms[..1]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn csv_has_every_bin() {
        let res = simulate(&config(vec![0.3, 0.2], 1, 10_000, 2)).unwrap();
        let csv = histogram_csv(&res);
        let bins: usize = res.level_histograms.iter().map(Vec::len).sum();
        assert_eq!(csv.lines().count(), bins + 1);
    }
}
