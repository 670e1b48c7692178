//! The discretized periodic box and complex fields living on it.
//!
//! Physical sample `k` along an axis sits at the minimal-image coordinate
//! `x(k) = signed(k) * dx` with `signed(k) in [-n/2, n/2)`, so the box is
//! centered at the origin. The frequency lattice is `xi(k) = 2 pi signed(k)/L`.
//! Transforms use the symmetric convention: forward carries a factor
//! `(2 pi)^{-d/2} dx^d`, inverse `(2 pi)^{-d/2} dxi^d`, which makes Plancherel
//! exact on the lattice.

use crate::error::{Error, Result};
use crate::fft::ndfft;
use num_complex::Complex64;

/// Default cap on `n^d`: 2^24 points (256 MiB of complex data per field).
pub const DEFAULT_POINT_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    d: usize,
    n: usize,
    len: f64,
}

impl Grid {
    /// A `d`-dimensional periodic box with `n` points per axis and side `len`.
    pub fn new(d: usize, n: usize, len: f64) -> Result<Self> {
        Self::with_budget(d, n, len, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(d: usize, n: usize, len: f64, budget: usize) -> Result<Self> {
        if d < 1 || d > 5 {
            return Err(Error::DimensionOutOfRange(d));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::GridSize(n));
        }
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::BoxLength(len));
        }
        let points = (0..d).try_fold(1usize, |acc, _| acc.checked_mul(n));
        match points {
            Some(p) if p <= budget => Ok(Self { d, n, len }),
            Some(p) => Err(Error::MemoryBudget { points: p, budget }),
            None => Err(Error::MemoryBudget {
                points: usize::MAX,
                budget,
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.len
    }

    pub fn points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Grid spacing `dx = L/n`.
    pub fn spacing(&self) -> f64 {
        self.len / self.n as f64
    }

    /// Frequency lattice spacing `dxi = 2 pi / L`.
    pub fn freq_step(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.len
    }

    /// Largest per-axis frequency magnitude, `pi n / L`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / self.len
    }

    /// Largest Euclidean frequency magnitude on the lattice.
    pub fn max_freq(&self) -> f64 {
        self.nyquist() * (self.d as f64).sqrt()
    }

    /// Signed index in `[-n/2, n/2)` for axis position `k`.
    #[inline]
    pub fn signed_index(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Frequency component of axis position `k`.
    #[inline]
    pub fn freq(&self, k: usize) -> f64 {
        self.freq_step() * self.signed_index(k) as f64
    }

    /// Minimal-image coordinate of axis position `k`, in `[-L/2, L/2)`.
    #[inline]
    pub fn coord(&self, k: usize) -> f64 {
        self.spacing() * self.signed_index(k) as f64
    }

    /// Per-axis frequency table of length `n`.
    pub fn freq_table(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.freq(k)).collect()
    }

    /// Per-axis coordinate table of length `n`.
    pub fn coord_table(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.coord(k)).collect()
    }

    /// Visit every lattice point. The closure receives the flat index and the
    /// per-axis positions `idx[..d]`.
    pub fn for_each_index(&self, mut f: impl FnMut(usize, &[usize])) {
        let d = self.d;
        let n = self.n;
        let mut idx = [0usize; 5];
        for flat in 0..self.points() {
            f(flat, &idx[..d]);
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Frequency,
}

/// A complex-valued function on the grid, stored row-major.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    rep: Representation,
    data: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: Grid, rep: Representation) -> Self {
        Self {
            grid,
            rep,
            data: vec![Complex64::ZERO; grid.points()],
        }
    }

    pub fn from_data(grid: Grid, rep: Representation, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.points() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, rep, data })
    }

    /// Sample a function of the minimal-image physical coordinates.
    pub fn from_physical_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let coords = grid.coord_table();
        let mut data = vec![Complex64::ZERO; grid.points()];
        let mut x = [0.0f64; 5];
        grid.for_each_index(|flat, idx| {
            for (a, &k) in idx.iter().enumerate() {
                x[a] = coords[k];
            }
            data[flat] = f(&x[..grid.dim()]);
        });
        Self {
            grid,
            rep: Representation::Physical,
            data,
        }
    }

    /// Sample frequency coefficients as a function of the lattice frequency.
    pub fn from_frequency_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let freqs = grid.freq_table();
        let mut data = vec![Complex64::ZERO; grid.points()];
        let mut xi = [0.0f64; 5];
        grid.for_each_index(|flat, idx| {
            for (a, &k) in idx.iter().enumerate() {
                xi[a] = freqs[k];
            }
            data[flat] = f(&xi[..grid.dim()]);
        });
        Self {
            grid,
            rep: Representation::Frequency,
            data,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rep(&self) -> Representation {
        self.rep
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Transform in place to the physical representation (no-op if already).
    pub fn make_physical(&mut self) {
        if self.rep == Representation::Frequency {
            let g = self.grid;
            ndfft(&mut self.data, g.dim(), g.points_per_axis(), true);
            let scale = (2.0 * std::f64::consts::PI).powf(-(g.dim() as f64) / 2.0)
                * g.freq_step().powi(g.dim() as i32);
            for v in &mut self.data {
                *v *= scale;
            }
            self.rep = Representation::Physical;
        }
    }

    /// Transform in place to the frequency representation (no-op if already).
    pub fn make_frequency(&mut self) {
        if self.rep == Representation::Physical {
            let g = self.grid;
            ndfft(&mut self.data, g.dim(), g.points_per_axis(), false);
            let scale = (2.0 * std::f64::consts::PI).powf(-(g.dim() as f64) / 2.0)
                * g.spacing().powi(g.dim() as i32);
            for v in &mut self.data {
                *v *= scale;
            }
            self.rep = Representation::Frequency;
        }
    }

    /// A copy in the physical representation.
    pub fn to_physical(&self) -> Field {
        let mut out = self.clone();
        out.make_physical();
        out
    }

    /// A copy in the frequency representation.
    pub fn to_frequency(&self) -> Field {
        let mut out = self.clone();
        out.make_frequency();
        out
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        self.grid == other.grid
    }

    /// Pointwise sum; operands are aligned to the representation of `self`.
    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Pointwise difference; operands are aligned to the representation of `self`.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, factor: Complex64) -> Field {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        out
    }

    fn zip_with(
        &self,
        other: &Field,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Field> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let rhs = if other.rep == self.rep {
            None
        } else {
            let mut converted = other.clone();
            match self.rep {
                Representation::Physical => converted.make_physical(),
                Representation::Frequency => converted.make_frequency(),
            }
            Some(converted)
        };
        let rhs_data = rhs.as_ref().map(|f| f.data()).unwrap_or(other.data());
        let data = self
            .data
            .iter()
            .zip(rhs_data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field {
            grid: self.grid,
            rep: self.rep,
            data,
        })
    }

    /// Sup norm of the current representation's samples.
    pub fn sup(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = Grid::new(1, 8, 2.0 * std::f64::consts::PI).unwrap();
        let freqs: Vec<i64> = (0..8).map(|k| g.freq(k).round() as i64).collect();
        let mut sorted = freqs.clone();
        sorted.sort();
        assert_eq!(sorted, vec![-4, -3, -2, -1, 0, 1, 2, 3]);

        let g5 = Grid::new(5, 16, 40.0).unwrap();
        assert_eq!(g5.points(), 1_048_576);

        assert!(matches!(
            Grid::new(6, 8, 1.0),
            Err(Error::DimensionOutOfRange(6))
        ));
        assert!(matches!(Grid::new(2, 7, 1.0), Err(Error::GridSize(7))));
        assert!(matches!(
            Grid::with_budget(3, 64, 1.0, 1000),
            Err(Error::MemoryBudget { .. })
        ));
    }

    #[test]
    fn transform_round_trip() {
        let g = Grid::new(2, 16, 5.0).unwrap();
        let mut rng = crate::rng::SplitMix64::new(7);
        let data: Vec<Complex64> = (0..g.points())
            .map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian()))
            .collect();
        let f = Field::from_data(g, Representation::Physical, data.clone()).unwrap();
        let back = f.to_frequency().to_physical();
        let err: f64 = back
            .data()
            .iter()
            .zip(&data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale = f.sup();
        assert!(err / scale < 1e-12, "round trip error {err}");
    }

    #[test]
    fn plane_wave_lands_on_single_mode() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let xi0 = g.freq_step() * 3.0;
        let f = Field::from_physical_fn(g, |x| Complex64::from_polar(1.0, xi0 * x[0]));
        let fhat = f.to_frequency();
        let mut hits = 0;
        for k in 0..16 {
            let mag = fhat.data()[k].norm();
            if (g.freq(k) - xi0).abs() < 1e-9 {
                assert!(mag > 1e-8);
                hits += 1;
            } else {
                assert!(mag < 1e-10 * 16.0, "leakage at k={k}: {mag}");
            }
        }
        assert_eq!(hits, 1);
    }
}
