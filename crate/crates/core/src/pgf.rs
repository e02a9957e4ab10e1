//! Closed-form multivariate PGF of the wait-conditional joint queue lengths.
//!
//! All vector arguments are z-ordered: index 0 is `z_1`, the LOWEST priority
//! level, and index `K - 2` is `z_{K-1}`, the second highest. The highest
//! level is carried by the power `ell` in `G_ell`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub type C64 = Complex64;

const POLE_FLOOR: f64 = 1e-13;
const DEGENERATE_DISCRIMINANT: f64 = 1e-14;

/// Which of the two equivalent product forms of `G_0` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductForm {
    /// Ratio of `1 - z zeta_+` factors; has removable singularities at `z = 1`.
    Plus,
    /// Ratio of `1 - z zeta_-` factors; regular on the inversion contours.
    Minus,
}

/// Roots of `zeta^2 - b zeta + sigma = 0`, ordered by modulus.
///
/// The larger root comes from the quadratic formula with the square-root sign
/// aligned to `b`; the smaller one is `sigma / zeta_+`.
pub fn quadratic_roots(b: C64, sigma: f64) -> (C64, C64) {
    let disc = b * b - 4.0 * sigma;
    let mut root = disc.sqrt();
    if (b * root.conj()).re < 0.0 {
        root = -root;
    }
    if disc.norm() < DEGENERATE_DISCRIMINANT {
        log::trace!("near-degenerate roots: discriminant {disc}");
    }
    let plus = 0.5 * (b + root);
    let minus = if sigma == 0.0 || plus == C64::new(0.0, 0.0) {
        C64::new(0.0, 0.0)
    } else {
        sigma / plus
    };
    (plus, minus)
}

/// Larger root `zeta_+(z)` of the two-level system with intensities `r_hi`, `r_lo`.
pub fn two_level_zeta_plus(z: C64, r_hi: f64, r_lo: f64) -> C64 {
    let b = C64::new(1.0 + r_hi + r_lo, 0.0) - r_lo * z;
    quadratic_roots(b, r_hi).0
}

#[derive(Debug, Clone)]
pub struct PgfEvaluator {
    model: ModelParams,
    /// `sigma[p] = r_1 + ... + r_p`, `sigma[0] = 0`.
    sigma: Vec<f64>,
    /// `(r_K, r_{K-1}, ..., r_1)`; `beta` pairs `z[j]` with `reversed[j]`.
    reversed: Vec<f64>,
}

impl PgfEvaluator {
    pub fn new(model: &ModelParams) -> Self {
        let sigma = (0..=model.levels()).map(|p| model.sigma(p)).collect();
        let reversed = model.rates().iter().rev().copied().collect();
        Self {
            model: model.clone(),
            sigma,
            reversed,
        }
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn levels(&self) -> usize {
        self.reversed.len()
    }

    pub fn total(&self) -> f64 {
        self.sigma[self.levels()]
    }

    fn check_prefix(&self, z: &[C64], kappa: usize) -> Result<()> {
        let levels = self.levels();
        if kappa + 1 > levels || z.len() < kappa {
            return Err(Error::PrefixOutOfRange { kappa, levels });
        }
        Ok(())
    }

    /// `beta(z_1..z_kappa) = sum_k z_k r_{K+1-k}`.
    pub fn beta(&self, z: &[C64], kappa: usize) -> Result<C64> {
        self.check_prefix(z, kappa)?;
        Ok(z[..kappa]
            .iter()
            .zip(&self.reversed)
            .map(|(&zk, &r)| zk * r)
            .sum())
    }

    /// `(zeta_+, zeta_-)` for the prefix `z_1..z_kappa`.
    pub fn zeta_pm(&self, z: &[C64], kappa: usize) -> Result<(C64, C64)> {
        let beta = self.beta(z, kappa)?;
        Ok(self.roots_for_beta(beta, kappa))
    }

    fn roots_for_beta(&self, beta: C64, kappa: usize) -> (C64, C64) {
        if kappa == 0 {
            return (C64::new(1.0, 0.0), C64::new(self.total(), 0.0));
        }
        let b = C64::new(1.0 + self.total(), 0.0) - beta;
        quadratic_roots(b, self.sigma[self.levels() - kappa])
    }

    fn check_full(&self, z: &[C64]) -> Result<()> {
        let expected = self.levels() - 1;
        if z.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: z.len(),
            });
        }
        Ok(())
    }

    /// `G_0(z_1..z_{K-1})`.
    pub fn g0(&self, z: &[C64], form: ProductForm) -> Result<C64> {
        self.g0_and_w(z, form).map(|(g, _)| g)
    }

    /// `G_0(z)` together with `w = zeta_-(z_1..z_{K-1})`, so that `G_ell = G_0 w^ell`.
    pub fn g0_and_w(&self, z: &[C64], form: ProductForm) -> Result<(C64, C64)> {
        self.check_full(z)?;
        let one = C64::new(1.0, 0.0);
        let mut value = C64::new(1.0 - self.total(), 0.0);
        let mut beta = C64::new(0.0, 0.0);
        let mut previous = self.roots_for_beta(beta, 0);
        for (j, &zk) in z.iter().enumerate() {
            beta += zk * self.reversed[j];
            let current = self.roots_for_beta(beta, j + 1);
            let (num, den) = match form {
                ProductForm::Plus => (one - zk * previous.0, one - zk * current.0),
                ProductForm::Minus => (one - zk * current.1, one - zk * previous.1),
            };
            let modulus = den.norm();
            if modulus < POLE_FLOOR {
                return Err(Error::PoleProximity { modulus });
            }
            value *= num / den;
            previous = current;
        }
        Ok((value, previous.1))
    }

    /// `G_ell(z) = G_0(z) zeta_-(z)^ell`.
    pub fn g_ell(&self, ell: usize, z: &[C64]) -> Result<C64> {
        let (g, w) = self.g0_and_w(z, ProductForm::Minus)?;
        Ok(g * w.powu(ell as u32))
    }

    fn reduced_pair(&self, p: usize) -> Result<(f64, f64, f64)> {
        let levels = self.levels();
        if p == 0 || p >= levels {
            return Err(Error::LevelOutOfRange {
                level: p,
                max: levels.saturating_sub(1),
            });
        }
        let r_lo = self.reversed[p - 1];
        let r_hi = self.sigma[levels - p];
        let r_sum = self.sigma[levels + 1 - p];
        Ok((r_hi, r_lo, r_sum))
    }

    /// Wait-conditional PGF of the `p`-th lowest level (`1 <= p <= K - 1`).
    pub fn marginal_pgf(&self, p: usize, z: C64) -> Result<C64> {
        let (r_hi, r_lo, r_sum) = self.reduced_pair(p)?;
        let plus = two_level_zeta_plus(z, r_hi, r_lo);
        Ok((1.0 - r_sum) / (plus - r_sum))
    }

    /// Geometric PGF of the aggregated top `p` levels (`1 <= p <= K`).
    pub fn agg_pgf(&self, p: usize, u: C64) -> Result<C64> {
        let levels = self.levels();
        if p == 0 || p > levels {
            return Err(Error::LevelOutOfRange {
                level: p,
                max: levels,
            });
        }
        let s = self.sigma[p];
        Ok((1.0 - s) / (1.0 - s * u))
    }

    /// `zeta_-(0)`, the geometric ratio of the exclusively-high slice.
    pub fn xhi_ratio(&self) -> f64 {
        let r = self.total();
        let r1 = self.sigma[1];
        // rationalized form: no cancellation when r1 is small
        2.0 * r1 / (1.0 + r + ((1.0 + r) * (1.0 + r) - 4.0 * r1).max(0.0).sqrt())
    }

    /// `P(ell, 0, ..., 0)`.
    pub fn xhi_pmf(&self, ell: usize) -> f64 {
        (1.0 - self.total()) * self.xhi_ratio().powi(ell as i32)
    }

    /// `P(0, ..., 0, n)` from the lowest-level marginal: `(1 - r) delta_{n0} + r_K P_lo(n - 1)`.
    pub fn xlo_pmf(&self, n: usize, marginal_lo: &[f64]) -> Result<f64> {
        if n == 0 {
            return Ok(1.0 - self.total());
        }
        let p_lo = marginal_lo
            .get(n - 1)
            .ok_or(Error::MissingMarginal { needed: n - 1 })?;
        Ok(self.reversed[0] * p_lo)
    }
}
