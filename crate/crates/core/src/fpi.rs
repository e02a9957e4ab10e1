//! Direct solution of the stationary balance equations on a truncated lattice.
//!
//! The lattice `[0, N_max]^K` is embedded in a zero-padded grid covering
//! `[-1, N_max + 1]^K`; ghost cells stay zero, which realizes the convention
//! that out-of-range subscripts carry no probability. Each sweep reads the old
//! buffer and writes a new one (Jacobi style).

use log::{debug, info};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::memory::{lattice_bytes, MemoryLimit};
use crate::model::ModelParams;
use crate::pmf::{pairwise_sum, JointPmf, PmfKind};

/// Default convergence tolerance on `|P' - P|_inf`.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

const PROGRESS_EVERY: usize = 10_000;

/// Zero-padded K-dimensional lattice of extent `N_max + 3` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedLattice {
    levels: usize,
    n_max: usize,
    data: Vec<f64>,
}

impl PaddedLattice {
    pub fn zeros(levels: usize, n_max: usize) -> Self {
        let side = n_max + 3;
        Self {
            levels,
            n_max,
            data: vec![0.0; side.pow(levels as u32)],
        }
    }

    /// Unit mass at the origin.
    pub fn delta(levels: usize, n_max: usize) -> Self {
        let mut lattice = Self::zeros(levels, n_max);
        let origin = lattice.origin();
        lattice.data[origin] = 1.0;
        lattice
    }

    /// Pads a PMF's values with a ghost layer.
    pub fn from_pmf(pmf: &JointPmf) -> Self {
        let mut lattice = Self::zeros(pmf.levels(), pmf.n_max());
        let extent = pmf.extent();
        for (row, chunk) in pmf.values().chunks(extent).enumerate() {
            let start = lattice.row_start(row);
            lattice.data[start..start + extent].copy_from_slice(chunk);
        }
        lattice
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn side(&self) -> usize {
        self.n_max + 3
    }

    fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.levels - 1 - axis) as u32)
    }

    fn origin(&self) -> usize {
        (0..self.levels).map(|a| self.stride(a)).sum()
    }

    /// Padded offset of the first interior cell of lattice row `row` (row-major over all but the last axis).
    fn row_start(&self, mut row: usize) -> usize {
        let extent = self.n_max + 1;
        let mut offset = 1;
        for axis in (0..self.levels.saturating_sub(1)).rev() {
            offset += (row % extent + 1) * self.stride(axis);
            row /= extent;
        }
        offset
    }

    /// Value at lattice index `index` (each entry in `0..=N_max`).
    pub fn get(&self, index: &[usize]) -> f64 {
        let offset: usize = index
            .iter()
            .enumerate()
            .map(|(a, &i)| (i + 1) * self.stride(a))
            .sum();
        self.data[offset]
    }

    /// Sum over the lattice; ghosts are zero so this equals the interior sum.
    pub fn l1(&self) -> f64 {
        pairwise_sum(&self.data)
    }

    /// Unpadded copy as a PMF of the given kind.
    pub fn to_pmf(&self, model: &ModelParams, kind: PmfKind) -> Result<JointPmf> {
        let extent = self.n_max + 1;
        let rows = extent.pow((self.levels - 1) as u32);
        let mut values = Vec::with_capacity(rows * extent);
        for row in 0..rows {
            let start = self.row_start(row);
            values.extend_from_slice(&self.data[start..start + extent]);
        }
        JointPmf::from_values(model.clone(), extent, values, kind)
    }
}

/// One application of the sum-preserving balance map `A' = M(A)`.
pub fn balance_map(src: &PaddedLattice, model: &ModelParams) -> Result<PaddedLattice> {
    if src.levels != model.levels() {
        return Err(Error::DimensionMismatch {
            expected: model.levels(),
            actual: src.levels,
        });
    }
    let mut dst = PaddedLattice::zeros(src.levels, src.n_max);
    sweep(src, &mut dst, model);
    Ok(dst)
}

fn sweep(src: &PaddedLattice, dst: &mut PaddedLattice, model: &ModelParams) {
    let levels = src.levels;
    let side = src.side();
    let n_max = src.n_max;
    let strides: Vec<usize> = (0..levels).map(|a| src.stride(a)).collect();
    let rates = model.rates();
    let scale = 1.0 / (1.0 + model.total());
    let input = &src.data;

    dst.data
        .par_chunks_mut(side)
        .enumerate()
        .for_each(|(chunk, out)| {
            // Decode the padded outer coordinates of this row; rows touching a ghost layer stay zero.
            let mut rest = chunk;
            let mut first_nonzero = levels - 1;
            let mut outer_all_zero = true;
            for axis in (0..levels - 1).rev() {
                let p = rest % side;
                rest /= side;
                if p == 0 || p == side - 1 {
                    return;
                }
                if p != 1 {
                    first_nonzero = axis;
                    outer_all_zero = false;
                }
            }
            let base = chunk * side;
            for j in 1..=n_max + 1 {
                let centre = base + j;
                let mut acc = 0.0;
                for (k, &stride) in strides.iter().enumerate() {
                    acc += rates[k] * input[centre - stride];
                }
                // Upward flow along axis k requires every higher-priority axis to be empty.
                let (last_up, at_origin) = if outer_all_zero && j == 1 {
                    (levels - 1, true)
                } else {
                    (first_nonzero, false)
                };
                for &stride in &strides[..=last_up] {
                    acc += input[centre + stride];
                }
                if at_origin {
                    acc += input[centre];
                }
                out[j] = acc * scale;
            }
        });
}

/// Options for [`run_fpi`].
#[derive(Debug, Clone, Copy)]
pub struct FpiOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub memory_limit: MemoryLimit,
}

impl Default for FpiOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            memory_limit: MemoryLimit::default(),
        }
    }
}

/// Result of a converged fixed-point iteration.
#[derive(Debug, Clone)]
pub struct FpiRun {
    /// Wait-conditional joint PMF on `[0, N_max]^K`.
    pub pmf: JointPmf,
    pub iterations: usize,
    pub final_delta: f64,
    /// `|P' - P|_inf` after every iteration.
    pub deltas: Vec<f64>,
    /// Iterations (after the initial transient) at which the delta increased.
    pub non_monotone_steps: usize,
}

/// Solves the truncated balance equations by fixed-point iteration with uniform leakage amortization.
pub fn run_fpi(model: &ModelParams, n_max: usize, options: &FpiOptions) -> Result<FpiRun> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("N_max must be at least 1".into()));
    }
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let levels = model.levels();
    options
        .memory_limit
        .check(2 * lattice_bytes(n_max + 3, levels, 8))?;
    if model.total() > 0.95 {
        log::warn!(
            "fixed-point iteration converges very slowly at r = {}; expect many iterations",
            model.total()
        );
    }

    let interior_cells = ((n_max + 1) as f64).powi(levels as i32);
    let mut current = PaddedLattice::delta(levels, n_max);
    let mut next = PaddedLattice::zeros(levels, n_max);
    let origin = current.origin();
    let side = current.side();
    let mut deltas = Vec::new();
    let mut non_monotone_steps = 0;
    let transient = 10;
    let mut current_l1 = current.l1();

    loop {
        sweep(&current, &mut next, model);
        // round-off can make the measured leak slightly negative; the true leak is not
        let leak = (current_l1 - next.l1()).max(0.0);
        let fill = leak / interior_cells;
        let inv_origin = 1.0 / (next.data[origin] + fill);

        let delta = next
            .data
            .par_chunks_mut(side)
            .zip(current.data.par_chunks(side))
            .enumerate()
            .map(|(chunk, (out, old))| {
                if is_ghost_row(chunk, levels, side) {
                    return 0.0;
                }
                let mut worst: f64 = 0.0;
                for j in 1..side - 1 {
                    let v = (out[j] + fill) * inv_origin;
                    out[j] = v;
                    worst = worst.max((v - old[j]).abs());
                }
                worst
            })
            .reduce(|| 0.0, f64::max);

        std::mem::swap(&mut current, &mut next);
        current_l1 = current.l1();
        if let Some(&previous) = deltas.last() {
            if deltas.len() > transient && delta > previous {
                non_monotone_steps += 1;
                debug!(
                    "delta increased at iteration {}: {previous:e} -> {delta:e}",
                    deltas.len() + 1
                );
            }
        }
        deltas.push(delta);
        let iterations = deltas.len();
        if iterations % PROGRESS_EVERY == 0 {
            info!("fpi iteration {iterations}: delta = {delta:e}");
        }
        if delta <= options.tolerance {
            break;
        }
        if iterations >= options.max_iterations {
            return Err(Error::NoConvergence { iterations, delta });
        }
    }

    let r = model.total();
    for v in current.data.iter_mut() {
        *v *= 1.0 - r;
    }
    let pmf = current.to_pmf(model, PmfKind::WaitConditional)?;
    let final_delta = *deltas.last().unwrap_or(&f64::INFINITY);
    Ok(FpiRun {
        pmf,
        iterations: deltas.len(),
        final_delta,
        deltas,
        non_monotone_steps,
    })
}

fn is_ghost_row(mut chunk: usize, levels: usize, side: usize) -> bool {
    for _ in 0..levels - 1 {
        let p = chunk % side;
        if p == 0 || p == side - 1 {
            return true;
        }
        chunk /= side;
    }
    false
}

/// `|ln P(n) - ln P_nn(n)|` with `P_nn(n) = [P(n + e_1) + sum_k r_k P(n - e_k)] / (1 + r)`.
pub fn interior_balance_residual(pmf: &JointPmf, index: &[usize]) -> Result<f64> {
    let levels = pmf.levels();
    if index.len() != levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            actual: index.len(),
        });
    }
    if index.contains(&0) {
        return Err(Error::OnBoundary {
            index: index.to_vec(),
        });
    }
    if index[0] + 1 >= pmf.extent() || index.iter().any(|&i| i >= pmf.extent()) {
        return Err(Error::OutsideGrid {
            index: index.to_vec(),
        });
    }
    let flat = pmf.flat_index(index).expect("checked above");
    nn_log_residual(pmf, flat).ok_or_else(|| Error::NonPositiveProbability {
        index: index.to_vec(),
    })
}

/// Residual at a flat position already known to be interior with an in-grid upper neighbour.
pub(crate) fn nn_log_residual(pmf: &JointPmf, flat: usize) -> Option<f64> {
    let values = pmf.values();
    let model = pmf.model();
    let centre = values[flat];
    let up = values[flat + pmf.stride(0)];
    let mut acc = up;
    for (k, &rate) in model.rates().iter().enumerate() {
        acc += rate * values[flat - pmf.stride(k)];
    }
    let predicted = acc / (1.0 + model.total());
    if centre > 0.0 && predicted > 0.0 {
        Some((centre.ln() - predicted.ln()).abs())
    } else {
        None
    }
}
