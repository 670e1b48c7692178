//! Unscaled n-dimensional FFT passes over flat row-major arrays.
//!
//! Plans are cached per thread and per length. The axis passes move data
//! through a transposed scratch buffer so rustfft always sees contiguous
//! batches; results are bit-reproducible run to run.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                let dir = if inverse {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                };
                planner.plan_fft(n, dir)
            })
            .clone()
    })
}

/// Unscaled DFT along every axis of a `[n; d]` row-major array.
///
/// Forward uses the `e^{-i xi x}` sign; inverse is its unscaled adjoint, so a
/// forward-inverse round trip multiplies the data by `n^d`.
pub fn ndfft(data: &mut [Complex64], d: usize, n: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(d as u32), "data length mismatch");
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
    // Last axis is contiguous: one batched pass over the whole buffer.
    fft.process_with_scratch(data, &mut scratch);
    if d == 1 {
        return;
    }
    let mut tmp = vec![Complex64::ZERO; data.len()];
    for axis in 0..d - 1 {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = n * stride;
        for base in (0..data.len()).step_by(block) {
            // Transpose the [n, stride] block so the axis becomes contiguous.
            let src = &data[base..base + block];
            let dst = &mut tmp[..block];
            for t in 0..n {
                let row = &src[t * stride..(t + 1) * stride];
                for (j, &v) in row.iter().enumerate() {
                    dst[j * n + t] = v;
                }
            }
            fft.process_with_scratch(dst, &mut scratch);
            let dst = &tmp[..block];
            let src = &mut data[base..base + block];
            for t in 0..n {
                let row = &mut src[t * stride..(t + 1) * stride];
                for (j, v) in row.iter_mut().enumerate() {
                    *v = dst[j * n + t];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft_in_2d() {
        let (d, n) = (2, 4);
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos()))
            .collect();
        let original = data.clone();
        ndfft(&mut data, d, n, false);
        // direct O(n^4) check
        for k0 in 0..n {
            for k1 in 0..n {
                let mut acc = Complex64::ZERO;
                for x0 in 0..n {
                    for x1 in 0..n {
                        let phase = -2.0 * std::f64::consts::PI
                            * ((k0 * x0 + k1 * x1) as f64)
                            / n as f64;
                        acc += original[x0 * n + x1] * Complex64::from_polar(1.0, phase);
                    }
                }
                let got = data[k0 * n + k1];
                assert!((got - acc).norm() < 1e-10, "mismatch at ({k0},{k1})");
            }
        }
    }

    #[test]
    fn round_trip_restores_input_up_to_volume() {
        let (d, n) = (3, 8);
        let mut data: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.13).sin(), (i as f64 * 0.31).cos()))
            .collect();
        let original = data.clone();
        ndfft(&mut data, d, n, false);
        ndfft(&mut data, d, n, true);
        let vol = (n * n * n) as f64;
        for (a, b) in data.iter().zip(&original) {
            assert!((a / vol - b).norm() < 1e-12);
        }
    }
}
