//! Ratio-function probe and error decomposition for the geometric test PGF.

use serde::{Deserialize, Serialize};

use super::fft::NdInverseFft;
use super::scheme::{plan_for_intensity, MixtureScheme, SchemeOptions};
use super::{contour_phases, invert_marginal};
use crate::error::{Error, Result};
use crate::pgf::C64;

/// `R_N(xi, n)` computed by FFT for `n = 0..N`, and its exact value `1 / (1 - xi^N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioProbe {
    pub xi: f64,
    pub n: usize,
    pub measured: Vec<f64>,
    pub exact: f64,
}

pub fn ratio_probe(xi: f64, n: usize) -> Result<RatioProbe> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(format!("xi = {xi} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter(
            "transform size must be positive".into(),
        ));
    }
    let mut grid: Vec<C64> = contour_phases(n)
        .iter()
        .map(|&w| 1.0 / (1.0 - xi * w))
        .collect();
    NdInverseFft::new(1, n).process(&mut grid);
    let log_xi = xi.ln();
    let measured = grid
        .iter()
        .enumerate()
        .map(|(k, v)| (-(k as f64) * log_xi).exp() * v.re / n as f64)
        .collect();
    let exact = 1.0 / (1.0 - xi.powi(n as i32));
    Ok(RatioProbe {
        xi,
        n,
        measured,
        exact,
    })
}

/// Relative error curves of the inverted geometric PMF `(1 - r) r^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub r: f64,
    pub scheme: MixtureScheme,
    pub exact: Vec<f64>,
    /// `|P_fft(n) / P(n) - 1|`.
    pub overall: Vec<f64>,
    /// `|sum_m f_m R_fft(xi_m, n) - sum_m f_m / (1 - xi_m^N)|`.
    pub fft: Vec<f64>,
    /// `|sum_m f_m / (1 - xi_m^N) - 1|`, independent of `n`.
    pub discretization: f64,
}

impl ErrorBudget {
    /// Worst overall error over `n` with `P(n) >= tail`.
    pub fn worst_overall_above(&self, tail: f64) -> f64 {
        self.exact
            .iter()
            .zip(&self.overall)
            .filter(|(p, _)| **p >= tail)
            .fold(0.0, |acc, (_, e)| acc.max(*e))
    }
}

/// Error decomposition for the single-level (r_hi = 0) geometric case.
pub fn error_budget(r: f64, n_max: usize, options: &SchemeOptions) -> Result<ErrorBudget> {
    let scheme = plan_for_intensity(r, n_max, options)?;
    let n = scheme.n_fft;
    let exact: Vec<f64> = (0..=n_max).map(|k| (1.0 - r) * r.powi(k as i32)).collect();
    let inverted = invert_marginal(|z| (1.0 - r) / (1.0 - r * z), &scheme, n_max)?;
    let overall = inverted
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a / b - 1.0).abs())
        .collect();

    let discretized: f64 = scheme
        .xi
        .iter()
        .zip(&scheme.coefficients)
        .map(|(&x, &f)| f / (1.0 - x.powi(n as i32)))
        .sum();
    let mut mixed = vec![0.0; n_max + 1];
    for (&x, &f) in scheme.xi.iter().zip(&scheme.coefficients) {
        let probe = ratio_probe(x, n)?;
        for (acc, v) in mixed.iter_mut().zip(&probe.measured) {
            *acc += f * v;
        }
    }
    let fft = mixed.iter().map(|v| (v - discretized).abs()).collect();
    Ok(ErrorBudget {
        r,
        scheme,
        exact,
        overall,
        fft,
        discretization: (discretized - 1.0).abs(),
    })
}
