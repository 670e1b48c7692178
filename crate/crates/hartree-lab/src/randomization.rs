//! Frequency-cube randomization: the shrinking-cube partition of the lattice,
//! the per-cube projections, Gaussian coefficient sampling, the randomized
//! field, and the sharp high/low frequency split.
//!
//! Geometry follows the sup-norm cube construction: the central cube
//! `O_1 = {|xi_j| <= 1}`, then for each dyadic annulus `Q_N = O_{2N} \ O_N`
//! a subdivision into axis-aligned cells of side `max(N^{-a}, 2 pi / L)`.
//! On the lattice the unit partition is realized by exact indicator weights:
//! every lattice frequency belongs to exactly one cell, so the partition sums
//! to one exactly and the cube projections are exactly orthogonal.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation};
use crate::rng::{derive_seed, SplitMix64};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct RandomizationParams {
    pub s: f64,
    pub a: u32,
    /// Largest dyadic annulus height represented on the grid.
    pub n_max: f64,
}

impl RandomizationParams {
    pub fn new(s: f64, a: u32, grid: Grid) -> Result<Self> {
        let bound = Self::exponent_bound(s);
        if !(a as f64 > bound) {
            return Err(Error::CubeExponent { a, s, bound });
        }
        let mut n_max = 1.0f64;
        while 2.0 * n_max <= grid.nyquist() {
            n_max *= 2.0;
        }
        Ok(Self { s, a, n_max })
    }

    /// The right-hand side of the cube-shrink constraint
    /// `a > max{4 - 2s, 5 - 4s, -s/2, 3}`.
    pub fn exponent_bound(s: f64) -> f64 {
        (4.0 - 2.0 * s)
            .max(5.0 - 4.0 * s)
            .max(-0.5 * s)
            .max(3.0)
    }

    /// Smallest integer exponent satisfying the constraint at regularity `s`.
    pub fn min_admissible_a(s: f64) -> u32 {
        (Self::exponent_bound(s).floor() as i64 + 1).max(1) as u32
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnulusSummary {
    /// Dyadic height N of the annulus (0 marks the central cube).
    pub height: f64,
    pub cell_side: f64,
    pub cells: usize,
    pub lattice_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CubeSystemSummary {
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_length: f64,
    pub s: f64,
    pub a: u32,
    pub total_cubes: usize,
    pub annuli: Vec<AnnulusSummary>,
}

/// One frequency cell: its annulus index (0 = central cube) and the flat
/// indices of the lattice frequencies it owns.
#[derive(Debug, Clone)]
pub struct Cube {
    pub annulus: u32,
    pub points: Vec<usize>,
}

/// The cube partition of the full frequency lattice.
#[derive(Debug, Clone)]
pub struct CubeSystem {
    grid: Grid,
    params: RandomizationParams,
    cubes: Vec<Cube>,
    /// flat frequency index -> cube id; the exact indicator unit partition.
    assignment: Vec<u32>,
}

/// Build the cube partition for the grid. Cell side within the annulus at
/// height N is `N^{-a}` when that is at least the lattice spacing, otherwise
/// one lattice point per cell.
pub fn build_cube_system(grid: Grid, params: RandomizationParams) -> Result<CubeSystem> {
    let bound = RandomizationParams::exponent_bound(params.s);
    if !(params.a as f64 > bound) {
        return Err(Error::CubeExponent {
            a: params.a,
            s: params.s,
            bound,
        });
    }
    let freqs = grid.freq_table();
    let dxi = grid.freq_step();
    // key: (annulus index, cell coordinates); BTreeMap gives the deterministic
    // ordering: central cube first, then annuli ascending, cells lexicographic.
    let mut cells: BTreeMap<(u32, [i64; 5]), Vec<usize>> = BTreeMap::new();
    grid.for_each_index(|flat, idx| {
        let mut sup = 0.0f64;
        for &k in idx {
            sup = sup.max(freqs[k].abs());
        }
        let key = if sup <= 1.0 {
            (0u32, [0i64; 5])
        } else {
            let mut height = 1.0f64;
            let mut level = 1u32;
            while sup > 2.0 * height {
                height *= 2.0;
                level += 1;
            }
            let side = height.powi(-(params.a as i32)).max(dxi);
            let cells_per_axis = (4.0 * height / side).ceil() as i64;
            let mut coords = [0i64; 5];
            for (axis, &k) in idx.iter().enumerate() {
                let c = ((freqs[k] + 2.0 * height) / side).floor() as i64;
                coords[axis] = c.clamp(0, cells_per_axis - 1);
            }
            (level, coords)
        };
        cells.entry(key).or_default().push(flat);
    });

    let mut cubes = Vec::with_capacity(cells.len());
    let mut assignment = vec![0u32; grid.points()];
    for (id, ((annulus, _), points)) in cells.into_iter().enumerate() {
        for &flat in &points {
            assignment[flat] = id as u32;
        }
        cubes.push(Cube { annulus, points });
    }
    Ok(CubeSystem {
        grid,
        params,
        cubes,
        assignment,
    })
}

impl CubeSystem {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn params(&self) -> RandomizationParams {
        self.params
    }

    pub fn cube_count(&self) -> usize {
        self.cubes.len()
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    /// Cube id owning the lattice frequency at `flat`.
    pub fn cube_of(&self, flat: usize) -> u32 {
        self.assignment[flat]
    }

    pub fn summary(&self) -> CubeSystemSummary {
        let dxi = self.grid.freq_step();
        let mut by_annulus: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for cube in &self.cubes {
            let entry = by_annulus.entry(cube.annulus).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += cube.points.len();
        }
        let annuli = by_annulus
            .into_iter()
            .map(|(level, (cells, lattice_points))| {
                let (height, cell_side) = if level == 0 {
                    (0.0, 2.0)
                } else {
                    let h = 2.0f64.powi(level as i32 - 1);
                    (h, h.powi(-(self.params.a as i32)).max(dxi))
                };
                AnnulusSummary {
                    height,
                    cell_side,
                    cells,
                    lattice_points,
                }
            })
            .collect();
        CubeSystemSummary {
            dim: self.grid.dim(),
            points_per_axis: self.grid.points_per_axis(),
            box_length: self.grid.box_length(),
            s: self.params.s,
            a: self.params.a,
            total_cubes: self.cubes.len(),
            annuli,
        }
    }
}

/// Project onto cube `j`: multiply the frequency coefficients by the exact
/// indicator weight of the cell.
pub fn box_project(f: &Field, j: usize, cs: &CubeSystem) -> Result<Field> {
    if f.grid() != cs.grid {
        return Err(Error::GridMismatch);
    }
    if j >= cs.cubes.len() {
        return Err(Error::CubeIndex {
            index: j,
            count: cs.cubes.len(),
        });
    }
    let rep_in = f.rep();
    let mut out = f.to_frequency();
    {
        let data = out.data_mut();
        for (flat, v) in data.iter_mut().enumerate() {
            if cs.assignment[flat] != j as u32 {
                *v = Complex64::ZERO;
            }
        }
    }
    if rep_in == Representation::Physical {
        out.make_physical();
    }
    Ok(out)
}

/// Reproducible complex Gaussian draws, one per cube, with `E|g_j|^2 = 1`.
#[derive(Debug, Clone)]
pub struct RandomCoefficients {
    pub seed: u64,
    pub values: Vec<Complex64>,
}

/// Draw `count` coefficients. Each `g_j` is a pure function of `(seed, j)`,
/// so any order of evaluation reproduces the same values bit-exactly.
pub fn sample_coefficients(seed: u64, count: usize) -> RandomCoefficients {
    let values = (0..count)
        .map(|j| SplitMix64::new(derive_seed(seed, j as u64)).next_complex_gaussian())
        .collect();
    RandomCoefficients { seed, values }
}

/// The randomized field: frequency coefficients scaled by the per-cube draw.
pub fn randomize(f: &Field, cs: &CubeSystem, coeffs: &RandomCoefficients) -> Result<Field> {
    if f.grid() != cs.grid {
        return Err(Error::GridMismatch);
    }
    if coeffs.values.len() < cs.cubes.len() {
        return Err(Error::CoefficientShortage {
            have: coeffs.values.len(),
            need: cs.cubes.len(),
        });
    }
    let rep_in = f.rep();
    let mut out = f.to_frequency();
    {
        let data = out.data_mut();
        for (flat, v) in data.iter_mut().enumerate() {
            *v *= coeffs.values[cs.assignment[flat] as usize];
        }
    }
    if rep_in == Representation::Physical {
        out.make_physical();
    }
    Ok(out)
}

/// Sharp high/low split at the dyadic threshold: `v0` carries `|xi| >= N0`,
/// `w0` carries `|xi| < N0`, and `v0 + w0 = f` exactly.
pub fn split_high_low(f: &Field, n_zero: f64) -> Result<(Field, Field)> {
    if !crate::spectral::is_dyadic(n_zero) {
        return Err(Error::NotDyadic("split threshold N0", n_zero));
    }
    let grid = f.grid();
    if n_zero > grid.max_freq() {
        return Err(Error::ThresholdOffGrid(n_zero, grid.max_freq()));
    }
    let rep_in = f.rep();
    let hat = f.to_frequency();
    let freq_sq: Vec<f64> = grid.freq_table().iter().map(|x| x * x).collect();
    let mut high = Field::zeros(grid, Representation::Frequency);
    let mut low = Field::zeros(grid, Representation::Frequency);
    {
        let src = hat.data();
        let hi = high.data_mut();
        let lo = low.data_mut();
        let thresh = n_zero * n_zero;
        grid.for_each_index(|flat, idx| {
            let k2: f64 = idx.iter().map(|&k| freq_sq[k]).sum();
            if k2 >= thresh {
                hi[flat] = src[flat];
            } else {
                lo[flat] = src[flat];
            }
        });
    }
    if rep_in == Representation::Physical {
        high.make_physical();
        low.make_physical();
    }
    Ok((high, low))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{norm, Norm};

    #[test]
    fn exponent_gate_examples() {
        assert_eq!(RandomizationParams::min_admissible_a(0.0), 6);
        assert_eq!(RandomizationParams::min_admissible_a(-1.0), 10);
        let g = Grid::new(1, 16, 2.0 * std::f64::consts::PI).unwrap();
        assert!(RandomizationParams::new(0.0, 5, g).is_err());
        assert!(RandomizationParams::new(0.0, 6, g).is_ok());
        match RandomizationParams::new(-1.0, 9, g) {
            Err(Error::CubeExponent { bound, .. }) => assert_eq!(bound, 9.0),
            other => panic!("expected exponent error, got {other:?}"),
        }
    }

    #[test]
    fn one_dimensional_partition_matches_hand_count() {
        // d=1, n=16, L=2pi: lattice {-8..7}; central cube {-1,0,1}; every
        // other frequency sits in its own cell.
        let g = Grid::new(1, 16, 2.0 * std::f64::consts::PI).unwrap();
        let params = RandomizationParams::new(0.0, 6, g).unwrap();
        let cs = build_cube_system(g, params).unwrap();
        assert_eq!(cs.cube_count(), 13 + 1);
        assert_eq!(cs.cubes()[0].points.len(), 3);
        // the unit partition sums to one at every lattice frequency
        let mut counts = vec![0usize; g.points()];
        for cube in cs.cubes() {
            for &p in &cube.points {
                counts[p] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn box_projection_is_a_sharp_partition() {
        let g = Grid::new(2, 16, 7.0).unwrap();
        let params = RandomizationParams::new(0.0, 6, g).unwrap();
        let cs = build_cube_system(g, params).unwrap();

        // single-mode field: one cube owns it entirely
        let mut hat = Field::zeros(g, Representation::Frequency);
        let flat = 3 * 16 + 5;
        hat.data_mut()[flat] = Complex64::new(1.0, -2.0);
        let owner = cs.cube_of(flat) as usize;
        let proj = box_project(&hat, owner, &cs).unwrap();
        assert_eq!(proj.data(), hat.data());
        let other = box_project(&hat, (owner + 1) % cs.cube_count(), &cs).unwrap();
        assert!(other.sup() == 0.0);

        // reconstruction and exact L2 orthogonality
        let mut rng = SplitMix64::new(5);
        let f = Field::from_data(
            g,
            Representation::Frequency,
            (0..g.points())
                .map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian()))
                .collect(),
        )
        .unwrap();
        let mut sum = Field::zeros(g, Representation::Frequency);
        let mut l2_parts = 0.0;
        for j in 0..cs.cube_count() {
            let part = box_project(&f, j, &cs).unwrap();
            l2_parts += norm(&part, Norm::Lp(2.0)).unwrap().powi(2);
            sum = sum.add(&part).unwrap();
        }
        let max_hat = f.sup();
        for (a, b) in sum.data().iter().zip(f.data()) {
            assert!((a - b).norm() < 1e-14 * max_hat);
        }
        let total = norm(&f, Norm::Lp(2.0)).unwrap().powi(2);
        assert!((l2_parts - total).abs() < 1e-10 * total);

        assert!(matches!(
            box_project(&f, cs.cube_count(), &cs),
            Err(Error::CubeIndex { .. })
        ));
    }

    #[test]
    fn coefficients_are_deterministic() {
        let a = sample_coefficients(99, 257);
        let b = sample_coefficients(99, 257);
        assert_eq!(a.values, b.values);
        let c = sample_coefficients(100, 257);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn randomize_degenerate_coefficients() {
        let g = Grid::new(2, 16, 7.0).unwrap();
        let params = RandomizationParams::new(0.0, 6, g).unwrap();
        let cs = build_cube_system(g, params).unwrap();
        let f = Field::from_physical_fn(g, |x| {
            Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.3 * x[0])
        });

        let ones = RandomCoefficients {
            seed: 0,
            values: vec![Complex64::ONE; cs.cube_count()],
        };
        let out = randomize(&f, &cs, &ones).unwrap();
        assert!(crate::kernels::max_rel_error(out.data(), f.data()) < 1e-14);

        let zeros = RandomCoefficients {
            seed: 0,
            values: vec![Complex64::ZERO; cs.cube_count()],
        };
        let out = randomize(&f, &cs, &zeros).unwrap();
        assert!(out.sup() == 0.0);

        let short = RandomCoefficients {
            seed: 0,
            values: vec![Complex64::ONE; cs.cube_count() - 1],
        };
        assert!(matches!(
            randomize(&f, &cs, &short),
            Err(Error::CoefficientShortage { .. })
        ));
    }

    #[test]
    fn randomized_mass_matches_projection_sum_in_expectation() {
        let g = Grid::new(1, 32, 6.0).unwrap();
        let params = RandomizationParams::new(0.0, 6, g).unwrap();
        let cs = build_cube_system(g, params).unwrap();
        let f = Field::from_physical_fn(g, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0));

        // oracle: sum over cubes of the projected mass
        let mut expected = 0.0;
        for j in 0..cs.cube_count() {
            expected += norm(&box_project(&f, j, &cs).unwrap(), Norm::Lp(2.0))
                .unwrap()
                .powi(2);
        }

        let draws = 200;
        let mut samples = Vec::with_capacity(draws);
        for i in 0..draws {
            let coeffs = sample_coefficients(derive_seed(7, i as u64), cs.cube_count());
            let fo = randomize(&f, &cs, &coeffs).unwrap();
            samples.push(norm(&fo, Norm::Lp(2.0)).unwrap().powi(2));
        }
        let mean: f64 = samples.iter().sum::<f64>() / draws as f64;
        let var: f64 =
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (draws - 1) as f64;
        let stderr = (var / draws as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * stderr,
            "mean {mean} vs expected {expected} (3 SE = {})",
            3.0 * stderr
        );
    }

    #[test]
    fn sharp_split_is_exactly_complementary() {
        let g = Grid::new(2, 32, 8.0).unwrap();
        // band-limited below N0/2 -> all low
        let low_field = crate::spectral::lp_project(
            &Field::from_physical_fn(g, |x| Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0)),
            crate::spectral::Band::LowPass,
            1.0,
        )
        .unwrap();
        let (v, w) = split_high_low(&low_field, 4.0).unwrap();
        assert!(v.sup() < 1e-13);
        assert!(crate::kernels::max_rel_error(w.data(), low_field.data()) < 1e-12);

        // plane wave far above the cut -> all high
        let xi0 = g.freq_step() * 12.0;
        let wave = Field::from_physical_fn(g, |x| Complex64::from_polar(1.0, xi0 * x[0]));
        let (v, w) = split_high_low(&wave, 2.0).unwrap();
        assert!(w.sup() < 1e-13);
        assert!(crate::kernels::max_rel_error(v.data(), wave.data()) < 1e-12);

        // random field reassembles exactly
        let mut rng = SplitMix64::new(8);
        let f = Field::from_data(
            g,
            Representation::Physical,
            (0..g.points())
                .map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian()))
                .collect(),
        )
        .unwrap();
        let (v, w) = split_high_low(&f, 2.0).unwrap();
        let sum = v.add(&w).unwrap();
        assert!(crate::kernels::max_rel_error(sum.data(), f.data()) < 1e-14);

        assert!(matches!(
            split_high_low(&f, 3.0),
            Err(Error::NotDyadic(_, _))
        ));
    }
}
