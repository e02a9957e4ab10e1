use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const DEFAULT_RADII: usize = 4;
pub const DEFAULT_SPREAD: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 12.0;
/// Assumed relative round-off of a single FFT output.
pub const DEFAULT_EPS_FFT: f64 = 1e-15;

/// Knobs for [`plan_scheme`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeOptions {
    pub radii: usize,
    pub spread: f64,
    pub alpha: f64,
    /// Overrides the default transform size; must exceed `N_max`.
    pub n_fft: Option<usize>,
    /// Permit transform sizes that are not powers of two.
    pub allow_any_size: bool,
    pub eps_fft: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            radii: DEFAULT_RADII,
            spread: DEFAULT_SPREAD,
            alpha: DEFAULT_ALPHA,
            n_fft: None,
            allow_any_size: false,
            eps_fft: DEFAULT_EPS_FFT,
        }
    }
}

/// Radii and weights of the mixture-of-radii trapezoidal inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureScheme {
    pub radii_count: usize,
    pub spread: f64,
    pub alpha: f64,
    pub eps_fft: f64,
    pub n_fft: usize,
    /// Total intensity used to map unit-disc radii to the z-plane.
    pub r: f64,
    pub varsigma: Vec<f64>,
    pub g: f64,
    pub xi_base: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl MixtureScheme {
    /// Accuracy lost per targeted decimal by shrinking the smallest radius, in decimal digits.
    pub fn chi(&self) -> f64 {
        let headroom = -self.eps_fft.log10() - self.alpha;
        (self.g / self.varsigma[self.radii_count - 1]).log10() / headroom
    }

    /// Largest z-plane radius.
    pub fn max_eta(&self) -> f64 {
        self.eta[0]
    }
}

/// Smallest power of two strictly greater than `n_max`.
pub fn fft_size_for(n_max: usize) -> usize {
    (n_max + 1).next_power_of_two()
}

/// Plans the scheme for a model (radii scaled by `1 / r`).
pub fn plan_scheme(
    model: &ModelParams,
    n_max: usize,
    options: &SchemeOptions,
) -> Result<MixtureScheme> {
    plan_for_intensity(model.total(), n_max, options)
}

/// Plans the scheme for a PGF whose nearest singularity sits at `1 / r`.
pub fn plan_for_intensity(r: f64, n_max: usize, options: &SchemeOptions) -> Result<MixtureScheme> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("N_max must be at least 1".into()));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "intensity {r} outside (0, 1)"
        )));
    }
    let m = options.radii;
    if m == 0 {
        return Err(Error::InvalidParameter(
            "at least one radius is required".into(),
        ));
    }
    if !(options.alpha > 0.0) || !(options.eps_fft > 0.0 && options.eps_fft < 1.0) {
        return Err(Error::InvalidParameter(
            "alpha and eps_fft must be positive".into(),
        ));
    }
    let n_fft = match options.n_fft {
        Some(n) => {
            if n <= n_max {
                return Err(Error::InvalidParameter(format!(
                    "N_fft = {n} must exceed N_max = {n_max}"
                )));
            }
            if !options.allow_any_size && !n.is_power_of_two() {
                return Err(Error::InvalidParameter(format!(
                    "N_fft = {n} is not a power of two"
                )));
            }
            n
        }
        None => fft_size_for(n_max),
    };
    let s = options.spread;
    if m > 1 && !(s > 0.0) {
        return Err(Error::DegenerateSpread(s));
    }
    if !(s < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "spread {s} must be below 1"
        )));
    }
    let varsigma: Vec<f64> = if m == 1 {
        vec![1.0]
    } else {
        (0..m)
            .map(|i| 1.0 - s * i as f64 / (m - 1) as f64)
            .collect()
    };
    let g = (varsigma.iter().map(|v| v.ln()).sum::<f64>() / m as f64).exp();
    let xi_base = 10f64.powf(-options.alpha / (m * n_fft) as f64) / g;
    let xi: Vec<f64> = varsigma.iter().map(|v| v * xi_base).collect();
    if xi[0] >= 1.0 {
        return Err(Error::RadiusExceedsConvergence {
            radius: xi[0] / r,
            limit: 1.0 / r,
        });
    }
    let eta: Vec<f64> = xi.iter().map(|x| x / r).collect();
    let coefficients = mixture_coefficients(&eta, n_fft)?;
    Ok(MixtureScheme {
        radii_count: m,
        spread: s,
        alpha: options.alpha,
        eps_fft: options.eps_fft,
        n_fft,
        r,
        varsigma,
        g,
        xi_base,
        xi,
        eta,
        coefficients,
    })
}

/// Weights `f_m` with `1 / f_m = prod_{l != m} (1 - (eta_m / eta_l)^N)`.
pub fn mixture_coefficients(radii: &[f64], n: usize) -> Result<Vec<f64>> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("no radii given".into()));
    }
    if radii.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(
            "radii must be positive and finite".into(),
        ));
    }
    for (i, a) in radii.iter().enumerate() {
        if radii[..i].contains(a) {
            return Err(Error::DuplicateRadii);
        }
    }
    let n = n as f64;
    let coefficients = radii
        .iter()
        .enumerate()
        .map(|(m, &eta_m)| {
            let mut inverse = 1.0;
            for (l, &eta_l) in radii.iter().enumerate() {
                if l != m {
                    // (eta_m / eta_l)^N in log space; exp_m1 keeps ratios near one accurate
                    let log_ratio = n * (eta_m / eta_l).ln();
                    inverse *= -log_ratio.exp_m1();
                }
            }
            1.0 / inverse
        })
        .collect();
    Ok(coefficients)
}

/// Scaled residuals of the aliasing-cancellation system.
///
/// Returns `|sum f_m - 1|` and the worst `|sum_m f_m x_m^j| / sum_m |f_m x_m^j|`
/// over `j = 1..M-1`, where `x_m = (eta_m / eta_max)^N`.
pub fn vandermonde_residuals(radii: &[f64], n: usize, coefficients: &[f64]) -> (f64, f64) {
    let first = (coefficients.iter().sum::<f64>() - 1.0).abs();
    let top = radii.iter().cloned().fold(f64::MIN, f64::max);
    let mut worst: f64 = 0.0;
    for j in 1..radii.len() {
        let mut sum = 0.0;
        let mut scale = 0.0;
        for (&eta, &f) in radii.iter().zip(coefficients) {
            let term = f * ((j * n) as f64 * (eta / top).ln()).exp();
            sum += term;
            scale += term.abs();
        }
        if scale > 0.0 {
            worst = worst.max(sum.abs() / scale);
        }
    }
    (first, worst)
}
