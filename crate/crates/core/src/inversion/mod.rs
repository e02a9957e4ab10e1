//! Trapezoidal Cauchy inversion of PGFs with the mixture-of-radii scheme.

mod fft;
mod probe;
mod scheme;

use std::f64::consts::PI;
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::memory::{lattice_bytes, MemoryLimit};
use crate::model::ModelParams;
use crate::pgf::{PgfEvaluator, ProductForm, C64};
use crate::pmf::{JointPmf, PmfKind};

pub use fft::NdInverseFft;
pub use probe::{error_budget, ratio_probe, ErrorBudget, RatioProbe};
pub use scheme::{
    fft_size_for, mixture_coefficients, plan_for_intensity, plan_scheme, vandermonde_residuals,
    MixtureScheme, SchemeOptions, DEFAULT_ALPHA, DEFAULT_EPS_FFT, DEFAULT_RADII, DEFAULT_SPREAD,
};

/// Largest tolerated imaginary part of any single radius contribution.
pub const IMAG_TOLERANCE: f64 = 1e-10;

/// `e^{-2 pi i k / n}` for `k = 0..n`.
fn contour_phases(n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
        .collect()
}

/// `eta^{-t}` for `t = 0..=max_power`.
fn inverse_powers(eta: f64, max_power: usize) -> Vec<f64> {
    let log_eta = eta.ln();
    (0..=max_power)
        .map(|t| (-(t as f64) * log_eta).exp())
        .collect()
}

fn check_scheme(scheme: &MixtureScheme, n_max: usize) -> Result<()> {
    if n_max >= scheme.n_fft {
        return Err(Error::InvalidParameter(format!(
            "N_max = {n_max} must be below the transform size {}",
            scheme.n_fft
        )));
    }
    Ok(())
}

/// Inverts a univariate PGF, returning `P(n)` for `n = 0..=N_max`.
pub fn invert_marginal<F>(pgf: F, scheme: &MixtureScheme, n_max: usize) -> Result<Vec<f64>>
where
    F: Fn(C64) -> C64 + Sync,
{
    check_scheme(scheme, n_max)?;
    let n = scheme.n_fft;
    let phases = contour_phases(n);
    let fft = NdInverseFft::new(1, n);
    let mut out = vec![0.0; n_max + 1];
    let mut imag = vec![0.0; n_max + 1];
    let mut grid = vec![C64::default(); n];
    for (&eta, &f) in scheme.eta.iter().zip(&scheme.coefficients) {
        for (slot, &phase) in grid.iter_mut().zip(&phases) {
            *slot = pgf(eta * phase);
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::AnalyticityViolation);
        }
        fft.process(&mut grid);
        let powers = inverse_powers(eta, n_max);
        let weight = f / n as f64;
        for k in 0..=n_max {
            out[k] += weight * powers[k] * grid[k].re;
            imag[k] += weight * powers[k] * grid[k].im;
        }
    }
    let eta_min = scheme.eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let residue = imag
        .iter()
        .zip(inverse_powers(eta_min, n_max))
        .fold(0.0f64, |a, (v, p)| a.max(v.abs() / p.max(1.0)));
    if residue > IMAG_TOLERANCE {
        return Err(Error::ImaginaryResidue { residue });
    }
    Ok(out)
}

/// Wait-conditional PMF of the lowest priority level on `0..=N_max`.
pub fn lowest_marginal(
    pgf: &PgfEvaluator,
    scheme: &MixtureScheme,
    n_max: usize,
) -> Result<Vec<f64>> {
    if pgf.levels() == 1 {
        invert_marginal(
            |z| pgf.agg_pgf(1, z).expect("level 1 exists"),
            scheme,
            n_max,
        )
    } else {
        invert_marginal(
            |z| pgf.marginal_pgf(1, z).expect("level 1 exists"),
            scheme,
            n_max,
        )
    }
}

/// Unconditional per-level queue-length marginals (highest priority first) on `0..=N_max`.
pub fn full_marginals(
    model: &ModelParams,
    scheme: &MixtureScheme,
    n_max: usize,
) -> Result<Vec<Vec<f64>>> {
    let pgf = PgfEvaluator::new(model);
    let levels = model.levels();
    let erlang = model.erlang();
    let mut out = Vec::with_capacity(levels);
    out.push(
        (0..=n_max)
            .map(|l| model.high_priority_marginal(l))
            .collect(),
    );
    for level in 2..=levels {
        let p = levels + 1 - level;
        let mut marginal = invert_marginal(
            |z| pgf.marginal_pgf(p, z).expect("p in range"),
            scheme,
            n_max,
        )?;
        for v in marginal.iter_mut() {
            *v *= 1.0 - erlang.p_no_wait;
        }
        marginal[0] += erlang.p_no_wait;
        out.push(marginal);
    }
    Ok(out)
}

/// Bytes [`invert_joint`] allocates for its grids and output.
pub fn joint_inversion_bytes(levels: usize, n_fft: usize, n_max: usize) -> u128 {
    3 * lattice_bytes(n_fft, levels - 1, 16) + lattice_bytes(n_max + 1, levels, 8)
}

/// Fills `g0` and `w` with `G_0` and `zeta_-` on the contour grid of radius `eta`.
///
/// The grid's last (fastest) digit is `z_1`, matching the output axis order.
fn evaluate_grid(
    pgf: &PgfEvaluator,
    eta: f64,
    phases: &[C64],
    g0: &mut [C64],
    w: &mut [C64],
) -> Result<()> {
    let n = phases.len();
    let dims = pgf.levels() - 1;
    let failed = g0
        .par_chunks_mut(n)
        .zip(w.par_chunks_mut(n))
        .enumerate()
        .map(|(row, (g_row, w_row))| {
            let mut z = vec![C64::default(); dims];
            let mut rest = row;
            for slot in z.iter_mut().skip(1) {
                *slot = eta * phases[rest % n];
                rest /= n;
            }
            for k in 0..n {
                z[0] = eta * phases[k];
                match pgf.g0_and_w(&z, ProductForm::Minus) {
                    Ok((g, zeta)) if g.is_finite() && zeta.is_finite() => {
                        g_row[k] = g;
                        w_row[k] = zeta;
                    }
                    _ => return true,
                }
            }
            false
        })
        .reduce(|| false, |a, b| a || b);
    if failed {
        Err(Error::AnalyticityViolation)
    } else {
        Ok(())
    }
}

/// Inverts the joint PGF on `[0, N_max]^K`; axis 0 is the highest priority level.
pub fn invert_joint(
    pgf: &PgfEvaluator,
    scheme: &MixtureScheme,
    n_max: usize,
    memory_limit: MemoryLimit,
) -> Result<JointPmf> {
    let levels = pgf.levels();
    if levels < 2 {
        return Err(Error::InvalidParameter(
            "joint inversion needs at least two levels; the single-level PMF is geometric".into(),
        ));
    }
    check_scheme(scheme, n_max)?;
    let n = scheme.n_fft;
    memory_limit.check(joint_inversion_bytes(levels, n, n_max))?;

    let dims = levels - 1;
    let extent = n_max + 1;
    let grid_len = n.pow(dims as u32);
    let slab_len = extent.pow(dims as u32);
    let phases = contour_phases(n);
    let fft = NdInverseFft::new(dims, n);

    let mut values = vec![0.0; slab_len * extent];
    let mut current = vec![C64::default(); grid_len];
    let mut ratio = vec![C64::default(); grid_len];
    let mut work = vec![C64::default(); grid_len];

    for (m, (&eta, &f)) in scheme.eta.iter().zip(&scheme.coefficients).enumerate() {
        info!(
            "joint inversion: radius {}/{} (eta = {eta})",
            m + 1,
            scheme.radii_count
        );
        evaluate_grid(pgf, eta, &phases, &mut current, &mut ratio)?;
        let powers = inverse_powers(eta, dims * n_max);
        let weight = f / grid_len as f64;
        for ell in 0..extent {
            work.copy_from_slice(&current);
            fft.process(&mut work);
            let slab = &mut values[ell * slab_len..(ell + 1) * slab_len];
            let residue = accumulate_slab(slab, &work, extent, n, dims, weight, &powers);
            if residue > IMAG_TOLERANCE {
                return Err(Error::ImaginaryResidue { residue });
            }
            if ell + 1 < extent {
                current
                    .par_iter_mut()
                    .zip(ratio.par_iter())
                    .for_each(|(c, r)| *c *= r);
            }
        }
    }

    // round-off in the transform output is magnified by eta^{-|n|} once it is rescaled
    let eta_min = scheme.eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut pmf = JointPmf::from_values(
        pgf.model().clone(),
        extent,
        values,
        PmfKind::WaitConditional,
    )?;
    pmf.clamp_scaled(|index| {
        let lower: usize = index[1..].iter().sum();
        eta_min.powi(-(lower as i32)).max(1.0)
    })?;
    Ok(pmf)
}

/// Adds `weight * eta^{-|n|} * Re(work[n])` for `n` in `[0, N_max]^D`.
///
/// Returns the largest imaginary term, measured before any `eta^{-|n|} > 1` magnification.
fn accumulate_slab(
    slab: &mut [f64],
    work: &[C64],
    extent: usize,
    n: usize,
    dims: usize,
    weight: f64,
    powers: &[f64],
) -> f64 {
    slab.par_chunks_mut(extent)
        .enumerate()
        .map(|(row, out)| {
            let mut rest = row;
            let mut offset = 0;
            let mut outer = 0;
            let mut stride = n;
            for _ in 1..dims {
                let digit = rest % extent;
                rest /= extent;
                offset += digit * stride;
                outer += digit;
                stride *= n;
            }
            let mut residue: f64 = 0.0;
            for (k, slot) in out.iter_mut().enumerate() {
                let v = work[offset + k];
                let scale = weight * powers[outer + k];
                *slot += scale * v.re;
                residue = residue.max((scale * v.im).abs() / powers[outer + k].max(1.0));
            }
            residue
        })
        .reduce(|| 0.0, f64::max)
}

/// Wall-clock comparison of the mixture against a single radius at the enlarged size.
#[derive(Debug, Clone, Copy)]
pub struct MixtureTiming {
    /// `M` grid evaluations and transforms of size `N^{K-1}`.
    pub mixture_secs: f64,
    /// One grid evaluation and transform of size `(M N)^{K-1}`.
    pub single_secs: f64,
}

impl MixtureTiming {
    pub fn ratio(&self) -> f64 {
        self.single_secs / self.mixture_secs
    }
}

/// Times one contour pass (grid evaluation plus transform) for both strategies, keeping the best of `repeats`.
pub fn time_mixture(
    pgf: &PgfEvaluator,
    scheme: &MixtureScheme,
    repeats: usize,
) -> Result<MixtureTiming> {
    let levels = pgf.levels();
    if levels < 2 {
        return Err(Error::InvalidParameter(
            "timing needs at least two levels".into(),
        ));
    }
    let dims = levels - 1;
    let m = scheme.radii_count;
    let n = scheme.n_fft;
    let big = m * n;
    let mut best = MixtureTiming {
        mixture_secs: f64::INFINITY,
        single_secs: f64::INFINITY,
    };

    let small_fft = NdInverseFft::new(dims, n);
    let big_fft = NdInverseFft::new(dims, big);
    let small_phases = contour_phases(n);
    let big_phases = contour_phases(big);
    let mut g0 = vec![C64::default(); big.pow(dims as u32)];
    let mut w = vec![C64::default(); g0.len()];
    let small_len = small_fft.len();
    // single circle with the same aliasing level: xi^{MN} = 10^{-alpha}
    let single_eta = scheme.xi_base * scheme.g / scheme.r;

    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        for &eta in &scheme.eta {
            evaluate_grid(
                pgf,
                eta,
                &small_phases,
                &mut g0[..small_len],
                &mut w[..small_len],
            )?;
            small_fft.process(&mut g0[..small_len]);
        }
        best.mixture_secs = best.mixture_secs.min(start.elapsed().as_secs_f64());

        let start = Instant::now();
        evaluate_grid(pgf, single_eta, &big_phases, &mut g0, &mut w)?;
        big_fft.process(&mut g0);
        best.single_secs = best.single_secs.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}
