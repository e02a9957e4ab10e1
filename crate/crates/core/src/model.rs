//! Model parameters of the non-preemptive priority M/M/c queue and the
//! closed-form scalar quantities of the aggregate system.
//!
//! Level index 0 is always the *highest* priority. Every other module derives
//! level traffic intensities, partial sums and the total load from
//! [`ModelParams`], never from its own copy of the rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Servers, service rate and per-level traffic intensities `r_k = lambda_k / (c mu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct ModelParams {
    servers: usize,
    mu: f64,
    rates: Vec<f64>,
    #[serde(skip)]
    partial: Vec<f64>,
}

impl ModelParams {
    /// Builds a model from level traffic intensities, highest priority first.
    pub fn new(servers: usize, mu: f64, rates: Vec<f64>) -> Result<Self> {
        if servers == 0 {
            return Err(Error::InvalidParameter(
                "server count must be at least 1".into(),
            ));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "service rate must be positive, got {mu}"
            )));
        }
        if rates.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one priority level is required".into(),
            ));
        }
        if let Some(bad) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "level traffic intensities must be finite and non-negative, got {bad}"
            )));
        }
        let partial = partial_sums(&rates);
        let total = partial[rates.len()];
        if total >= 1.0 {
            return Err(Error::NonErgodic { r: total });
        }
        if total == 0.0 {
            return Err(Error::ZeroRates);
        }
        Ok(Self {
            servers,
            mu,
            rates,
            partial,
        })
    }

    /// Builds a model from per-level Poisson arrival rates.
    pub fn from_arrivals(arrivals: &[f64], mu: f64, servers: usize) -> Result<Self> {
        if servers == 0 {
            return Err(Error::InvalidParameter(
                "server count must be at least 1".into(),
            ));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "service rate must be positive, got {mu}"
            )));
        }
        let capacity = servers as f64 * mu;
        Self::new(servers, mu, arrivals.iter().map(|l| l / capacity).collect())
    }

    /// Builds a model from a total load `r` and unnormalized level fractions `nu`,
    /// setting `r_k = r nu_k / |nu|_1`.
    pub fn from_fractions(r: f64, nu: &[f64], servers: usize, mu: f64) -> Result<Self> {
        if !(r.is_finite() && r < 1.0) {
            return Err(Error::NonErgodic { r });
        }
        if r <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "total load must be positive, got {r}"
            )));
        }
        if nu.is_empty() {
            return Err(Error::InvalidFractions("fraction vector is empty".into()));
        }
        if let Some(bad) = nu.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidFractions(format!(
                "negative or non-finite entry {bad}"
            )));
        }
        let norm: f64 = nu.iter().sum();
        if norm == 0.0 {
            return Err(Error::InvalidFractions("all fractions are zero".into()));
        }
        Self::new(servers, mu, nu.iter().map(|v| r * v / norm).collect())
    }

    /// Copy of this model with different level intensities but the same servers and service rate.
    pub fn with_rates(&self, rates: Vec<f64>) -> Result<Self> {
        Self::new(self.servers, self.mu, rates)
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Number of priority levels `K`.
    pub fn levels(&self) -> usize {
        self.rates.len()
    }

    /// Level traffic intensities, highest priority first.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Traffic intensity of level `k` (0-based, 0 = highest priority).
    pub fn rate(&self, k: usize) -> f64 {
        self.rates[k]
    }

    /// Total traffic intensity `r`; identical to `sigma(K)`.
    pub fn total(&self) -> f64 {
        self.partial[self.rates.len()]
    }

    /// Partial sum of the `p` highest-priority intensities; `sigma(0) = 0`, `sigma(K) = r`.
    pub fn sigma(&self, p: usize) -> f64 {
        self.partial[p]
    }

    /// Offered load `rho = lambda / mu = c r`.
    pub fn offered_load(&self) -> f64 {
        self.servers as f64 * self.total()
    }

    /// Poisson arrival rate of each level.
    pub fn arrival_rates(&self) -> Vec<f64> {
        let capacity = self.servers as f64 * self.mu;
        self.rates.iter().map(|r| r * capacity).collect()
    }

    /// Closed-form Erlang quantities of the aggregate M/M/c system.
    pub fn erlang(&self) -> ErlangQuantities {
        ErlangQuantities::new(self)
    }

    /// Full (unconditional) probability of `ell` highest-priority clients in the queue.
    pub fn high_priority_marginal(&self, ell: usize) -> f64 {
        high_priority_marginal(self, ell)
    }
}

#[derive(Deserialize)]
struct RawModel {
    servers: usize,
    mu: f64,
    rates: Vec<f64>,
}

impl TryFrom<RawModel> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        Self::new(raw.servers, raw.mu, raw.rates)
    }
}

fn partial_sums(rates: &[f64]) -> Vec<f64> {
    let mut partial = Vec::with_capacity(rates.len() + 1);
    let mut acc = 0.0;
    partial.push(acc);
    for r in rates {
        acc += r;
        partial.push(acc);
    }
    partial
}

/// Empty-system, no-wait and all-busy-empty-queue probabilities of the aggregate M/M/c queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErlangQuantities {
    /// Probability that the system is empty.
    pub p0: f64,
    /// Probability that an arrival finds a free server.
    pub p_no_wait: f64,
    /// Probability that all servers are busy and every queue is empty (`p_c`).
    pub p_all_busy_empty: f64,
}

impl ErlangQuantities {
    pub fn new(model: &ModelParams) -> Self {
        let c = model.servers();
        let rho = model.offered_load();
        let r = model.total();

        // Terms t_k = rho^k / k! are kept relative to t_c so that neither the
        // factorials nor the powers overflow for large server counts.
        let mut below = 0.0; // sum_{k<c} t_k / t_c
        let mut t = 1.0;
        for k in (1..=c).rev() {
            t *= k as f64 / rho;
            below += t;
        }
        let p_all_busy_empty = 1.0 / (below + 1.0 + r / (1.0 - r));
        let ln_tc: f64 = (1..=c).map(|k| (rho / k as f64).ln()).sum();
        let p0 = (p_all_busy_empty.ln() - ln_tc).exp();
        let p_no_wait = p_all_busy_empty * below;
        Self {
            p0,
            p_no_wait,
            p_all_busy_empty,
        }
    }

    /// `p_c` recovered through `(1 - r)(1 - P_NW)`.
    pub fn all_busy_empty_from_no_wait(&self, r: f64) -> f64 {
        (1.0 - r) * (1.0 - self.p_no_wait)
    }
}

/// `Psi(ell) = P_NW delta_{ell 0} + (1 - P_NW)(1 - r_1) r_1^ell`.
pub fn high_priority_marginal(model: &ModelParams, ell: usize) -> f64 {
    let p_nw = model.erlang().p_no_wait;
    let r1 = model.rate(0);
    let geometric = (1.0 - r1) * r1.powi(ell as i32);
    let tail = (1.0 - p_nw) * geometric;
    if ell == 0 {
        p_nw + tail
    } else {
        tail
    }
}
