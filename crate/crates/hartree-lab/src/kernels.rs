//! Minimal-image sampling of radial kernels and FFT-based periodic
//! convolution.
//!
//! A kernel sample array `K` lives on the same flat layout as physical field
//! data, with the origin at flat index 0. Its frequency response is
//! `dx^d * DFT(K)`, so `convolve` computes the quadrature-weighted periodic
//! convolution `(K * A)(x) = dx^d sum_y K(x - y) A(y)`.

use crate::fft::ndfft;
use crate::grid::Grid;
use num_complex::Complex64;

/// Average of `|x|^{-gamma}` over the ball of radius `dx/2`, the replacement
/// value at the singular origin sample. Requires `gamma < d`.
pub fn half_cell_average(d: usize, gamma: f64, dx: f64) -> f64 {
    (d as f64 / (d as f64 - gamma)) * (dx / 2.0).powf(-gamma)
}

/// Sample `|x|^{-gamma}` at minimal-image lattice points, origin replaced by
/// the half-cell ball average.
pub fn sample_power_kernel(grid: Grid, gamma: f64) -> Vec<f64> {
    let origin = half_cell_average(grid.dim(), gamma, grid.spacing());
    sample_radial(grid, origin, |r| r.powf(-gamma))
}

/// Sample a radial function of the minimal-image distance; `origin` is used
/// at `x = 0`.
pub fn sample_radial(grid: Grid, origin: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let coords = grid.coord_table();
    let mut out = vec![0.0f64; grid.points()];
    grid.for_each_index(|flat, idx| {
        let r2: f64 = idx.iter().map(|&k| coords[k] * coords[k]).sum();
        out[flat] = if flat == 0 { origin } else { f(r2.sqrt()) };
    });
    out
}

/// Sample the direction kernel `x_axis/|x|` (odd; 0 at the origin).
pub fn sample_direction_kernel(grid: Grid, axis: usize) -> Vec<f64> {
    let coords = grid.coord_table();
    let mut out = vec![0.0f64; grid.points()];
    grid.for_each_index(|flat, idx| {
        if flat == 0 {
            return;
        }
        let r2: f64 = idx.iter().map(|&k| coords[k] * coords[k]).sum();
        out[flat] = coords[idx[axis]] / r2.sqrt();
    });
    out
}

fn raw_dft(grid: Grid, samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ndfft(&mut buf, grid.dim(), grid.points_per_axis(), false);
    buf
}

/// Frequency response of an even real kernel: `dx^d Re(DFT(K))`.
pub fn real_response(grid: Grid, samples: &[f64]) -> Vec<f64> {
    let vol = grid.spacing().powi(grid.dim() as i32);
    raw_dft(grid, samples).iter().map(|v| v.re * vol).collect()
}

/// Frequency response of an odd real kernel, returned as the imaginary part:
/// the full response is `i * imag`.
pub fn imag_response(grid: Grid, samples: &[f64]) -> Vec<f64> {
    let vol = grid.spacing().powi(grid.dim() as i32);
    raw_dft(grid, samples).iter().map(|v| v.im * vol).collect()
}

/// Periodic convolution of physical data with a real frequency response.
pub fn convolve(grid: Grid, physical: &[Complex64], response: &[f64]) -> Vec<Complex64> {
    let mut hat = physical.to_vec();
    ndfft(&mut hat, grid.dim(), grid.points_per_axis(), false);
    for (v, &r) in hat.iter_mut().zip(response) {
        *v *= r;
    }
    ndfft(&mut hat, grid.dim(), grid.points_per_axis(), true);
    let inv_vol = 1.0 / grid.points() as f64;
    for v in &mut hat {
        *v *= inv_vol;
    }
    hat
}

/// Direct O(n^{2d}) periodic convolution sum, for use as a test oracle.
pub fn convolve_direct(grid: Grid, physical: &[Complex64], samples: &[f64]) -> Vec<Complex64> {
    let n = grid.points_per_axis() as i64;
    let d = grid.dim();
    let vol = grid.spacing().powi(d as i32);
    let mut idx_x = vec![[0usize; 5]; grid.points()];
    grid.for_each_index(|flat, idx| {
        for (a, &k) in idx.iter().enumerate() {
            idx_x[flat][a] = k;
        }
    });
    let mut out = vec![Complex64::ZERO; grid.points()];
    for (fx, o) in out.iter_mut().enumerate() {
        let xi = &idx_x[fx];
        let mut acc = Complex64::ZERO;
        for (fy, &val) in physical.iter().enumerate() {
            let yi = &idx_x[fy];
            let mut flat_k = 0usize;
            for a in 0..d {
                let diff = (xi[a] as i64 - yi[a] as i64).rem_euclid(n) as usize;
                flat_k = flat_k * n as usize + diff;
            }
            acc += val * samples[flat_k];
        }
        *o = acc * vol;
    }
    out
}

/// Riesz constant for the non-symmetric transform pairing:
/// `int |x|^{-gamma} e^{-i x xi} dx = c(d, gamma) |xi|^{gamma - d}`.
pub fn riesz_constant(d: usize, gamma: f64) -> f64 {
    use statrs::function::gamma::gamma as gamma_fn;
    2.0f64.powf(d as f64 - gamma) * std::f64::consts::PI.powf(d as f64 / 2.0)
        * gamma_fn((d as f64 - gamma) / 2.0)
        / gamma_fn(gamma / 2.0)
}

/// Check two complex slices for relative agreement in sup norm.
pub fn max_rel_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<Grid>();
}

pub use crate::error::Error as KernelError;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let g = Grid::new(2, 12, 6.0).unwrap();
        let kernel = sample_power_kernel(g, 0.7);
        let mut rng = crate::rng::SplitMix64::new(19);
        let data: Vec<Complex64> = (0..g.points())
            .map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian()))
            .collect();
        let resp = real_response(g, &kernel);
        let fast = convolve(g, &data, &resp);
        let slow = convolve_direct(g, &data, &kernel);
        assert!(max_rel_error(&fast, &slow) < 1e-11);
    }

    #[test]
    fn riesz_constant_known_values() {
        // d=3, gamma=2 gives the Coulomb value 2 pi^2.
        let c = riesz_constant(3, 2.0);
        assert!((c - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-10);
        // d=5, gamma=4 evaluates to 2 pi^3.
        let c = riesz_constant(5, 4.0);
        assert!((c - 2.0 * std::f64::consts::PI.powi(3)).abs() < 1e-9);
    }

    #[test]
    fn riesz_constant_matches_radial_quadrature() {
        // Numerical oracle for the continuum symbol: in d = 1 the transform of
        // |x|^{-g} truncated to a large interval approximates c(1,g)|xi|^{g-1}.
        let gamma = 0.5;
        let xi = 1.0f64;
        let mut acc = 0.0;
        let h = 1e-4;
        let cutoff = 400_000;
        for i in 0..cutoff {
            let x = (i as f64 + 0.5) * h;
            acc += 2.0 * x.powf(-gamma) * (x * xi).cos() * h;
        }
        let expect = riesz_constant(1, gamma) * xi.powf(gamma - 1.0);
        assert!(
            (acc - expect).abs() < 2e-2 * expect.abs(),
            "quadrature {acc} vs constant {expect}"
        );
    }
}
