//! Unnormalized multi-dimensional inverse DFT on a cubic row-major grid.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::pgf::C64;

const BATCH_LINES: usize = 64;

/// Inverse DFT `x(n) = sum_k X(k) e^{+2 pi i k.n / N}` over `dims` axes of length `n`.
pub struct NdInverseFft {
    dims: usize,
    n: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl NdInverseFft {
    pub fn new(dims: usize, n: usize) -> Self {
        let plan = FftPlanner::new().plan_fft_inverse(n);
        Self { dims, n, plan }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn process(&self, data: &mut [C64]) {
        assert_eq!(
            data.len(),
            self.len(),
            "grid size does not match the transform"
        );
        if self.dims == 0 {
            return;
        }
        let n = self.n;
        let scratch_len = self.plan.get_inplace_scratch_len();

        // last axis: contiguous lines
        data.par_chunks_mut(n * BATCH_LINES).for_each_init(
            || vec![C64::default(); scratch_len],
            |scratch, lines| self.plan.process_with_scratch(lines, scratch),
        );

        for axis in (0..self.dims - 1).rev() {
            let stride = n.pow((self.dims - 1 - axis) as u32);
            data.par_chunks_mut(n * stride).for_each_init(
                || {
                    (
                        vec![C64::default(); n * BATCH_LINES.min(stride)],
                        vec![C64::default(); scratch_len],
                    )
                },
                |(buffer, scratch), block| {
                    let mut start = 0;
                    while start < stride {
                        let width = BATCH_LINES.min(stride - start);
                        let lines = &mut buffer[..n * width];
                        for k in 0..n {
                            let row = &block[k * stride + start..k * stride + start + width];
                            for (b, &v) in row.iter().enumerate() {
                                lines[b * n + k] = v;
                            }
                        }
                        self.plan.process_with_scratch(lines, scratch);
                        for k in 0..n {
                            let row = &mut block[k * stride + start..k * stride + start + width];
                            for (b, v) in row.iter_mut().enumerate() {
                                *v = lines[b * n + k];
                            }
                        }
                        start += width;
                    }
                },
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(data: &[C64], dims: usize, n: usize) -> Vec<C64> {
        let len = n.pow(dims as u32);
        let digits = |mut i: usize| {
            let mut d = vec![0; dims];
            for slot in d.iter_mut().rev() {
                *slot = i % n;
                i /= n;
            }
            d
        };
        (0..len)
            .map(|out| {
                let a = digits(out);
                data.iter()
                    .enumerate()
                    .map(|(inp, &v)| {
                        let b = digits(inp);
                        let phase: usize = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                        v * C64::from_polar(1.0, 2.0 * PI * (phase % n) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for (dims, n) in [(1usize, 8usize), (2, 4), (3, 4), (2, 6)] {
            let len = n.pow(dims as u32);
            let input: Vec<C64> = (0..len)
                .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
                .collect();
            let mut fast = input.clone();
            NdInverseFft::new(dims, n).process(&mut fast);
            let slow = naive(&input, dims, n);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10, "dims {dims}, n {n}");
            }
        }
    }

    #[test]
    fn wide_strides_use_several_batches() {
        let (dims, n) = (2, 128);
        let mut data = vec![C64::default(); n * n];
        data[n + 3] = C64::new(1.0, 0.0);
        NdInverseFft::new(dims, n).process(&mut data);
        for a in 0..n {
            for b in 0..n {
                let expected = C64::from_polar(1.0, 2.0 * PI * ((a + 3 * b) % n) as f64 / n as f64);
                assert!((data[a * n + b] - expected).norm() < 1e-12);
            }
        }
    }
}
