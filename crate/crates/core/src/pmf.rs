//! Dense K-dimensional joint queue-length PMF.
//!
//! Values are stored row-major with axis 0 the highest priority level, so the
//! last axis (lowest priority) is contiguous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErlangQuantities, ModelParams};

/// Entries above this (negative) value are treated as round-off and clamped on export.
pub const NEGATIVE_FLOOR: f64 = -1e-12;

/// Normalization of a [`JointPmf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfKind {
    /// Conditioned on all servers being busy; the value at the origin is `1 - r`.
    WaitConditional,
    /// Unconditional: `P_NW delta(n) + (1 - P_NW) P(n)`.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    extent: usize,
    levels: usize,
    values: Vec<f64>,
    kind: PmfKind,
    model: ModelParams,
}

impl JointPmf {
    /// Wraps a row-major array with `extent` entries per axis and one axis per model level.
    pub fn from_values(
        model: ModelParams,
        extent: usize,
        values: Vec<f64>,
        kind: PmfKind,
    ) -> Result<Self> {
        let levels = model.levels();
        let expected = cell_count(extent, levels)
            .ok_or_else(|| Error::InvalidParameter("lattice size overflows usize".into()))?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            extent,
            levels,
            values,
            kind,
            model,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Entries per axis (`N_max + 1`).
    pub fn extent(&self) -> usize {
        self.extent
    }

    /// Largest queue length represented on each axis.
    pub fn n_max(&self) -> usize {
        self.extent - 1
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.extent; self.levels]
    }

    pub fn kind(&self) -> PmfKind {
        self.kind
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Row-major stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.extent.pow((self.levels - 1 - axis) as u32)
    }

    pub fn flat_index(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.levels || index.iter().any(|&i| i >= self.extent) {
            return None;
        }
        Some(index.iter().fold(0, |acc, &i| acc * self.extent + i))
    }

    /// Multi-index of a flat position.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.extent;
            flat /= self.extent;
        }
    }

    /// Value at `index`; `None` outside the grid.
    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.flat_index(index).map(|i| self.values[i])
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.get(index).expect("lattice index out of range")
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.values)
    }

    /// `P(ell, 0, ..., 0)` for `ell = 0..=N_max`.
    pub fn exclusively_high(&self) -> Vec<f64> {
        let stride = self.stride(0);
        (0..self.extent).map(|l| self.values[l * stride]).collect()
    }

    /// `P(0, ..., 0, n)` for `n = 0..=N_max`.
    pub fn exclusively_low(&self) -> Vec<f64> {
        self.values[..self.extent].to_vec()
    }

    /// Sums over all but one axis.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let stride = self.stride(axis);
        let mut out = vec![0.0; self.extent];
        for (flat, v) in self.values.iter().enumerate() {
            out[(flat / stride) % self.extent] += v;
        }
        out
    }

    /// Shell sums `sum_{|n| = k} P(n)` for `k = 0..=N_max` (complete shells only).
    pub fn shell_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.extent];
        let mut index = vec![0usize; self.levels];
        let mut total = 0usize;
        for v in &self.values {
            if total < self.extent {
                out[total] += v;
            }
            // advance the odometer and keep |n| in step
            for axis in (0..self.levels).rev() {
                index[axis] += 1;
                total += 1;
                if index[axis] < self.extent {
                    break;
                }
                total -= index[axis];
                index[axis] = 0;
            }
        }
        out
    }

    /// Copy with tiny negative round-off clamped to zero; errors on anything below [`NEGATIVE_FLOOR`].
    pub fn clamped(&self) -> Result<Self> {
        let mut out = self.clone();
        out.clamp_in_place()?;
        Ok(out)
    }

    pub fn clamp_in_place(&mut self) -> Result<()> {
        self.clamp_scaled(|_| 1.0)
    }

    /// Clamps with the floor at `n` widened to `NEGATIVE_FLOOR * widen(n)` (`widen >= 1`).
    pub(crate) fn clamp_scaled(&mut self, widen: impl Fn(&[usize]) -> f64) -> Result<()> {
        let mut index = vec![0; self.levels];
        for flat in 0..self.values.len() {
            let v = self.values[flat];
            if v < 0.0 {
                if v.is_nan() || v < NEGATIVE_FLOOR {
                    self.unflatten(flat, &mut index);
                    if v.is_nan() || v < NEGATIVE_FLOOR * widen(&index) {
                        return Err(Error::NegativeProbability { index, value: v });
                    }
                }
                self.values[flat] = 0.0;
            }
        }
        Ok(())
    }

    /// Unconditional PMF `P_NW delta(n) + (1 - P_NW) P(n)`.
    pub fn to_full(&self) -> Result<Self> {
        full_pmf(self, &self.model.erlang())
    }
}

/// Converts a wait-conditional PMF to the unconditional one.
pub fn full_pmf(pmf: &JointPmf, erlang: &ErlangQuantities) -> Result<JointPmf> {
    if pmf.kind != PmfKind::WaitConditional {
        return Err(Error::WrongKind);
    }
    let p_nw = erlang.p_no_wait;
    let busy = 1.0 - p_nw;
    let mut values: Vec<f64> = pmf.values.iter().map(|v| busy * v).collect();
    values[0] += p_nw;
    Ok(JointPmf {
        extent: pmf.extent,
        levels: pmf.levels,
        values,
        kind: PmfKind::Full,
        model: pmf.model.clone(),
    })
}

/// `extent^levels`, or `None` on overflow.
pub fn cell_count(extent: usize, levels: usize) -> Option<usize> {
    let mut n: usize = 1;
    for _ in 0..levels {
        n = n.checked_mul(extent)?;
    }
    Some(n)
}

/// Pairwise summation; deterministic and independent of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 256;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}
