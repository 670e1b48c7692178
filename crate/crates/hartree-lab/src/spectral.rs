//! Fourier calculus on the periodic grid: multiplier operators,
//! Littlewood-Paley projections, Sobolev/Lebesgue norms, the free propagator
//! and the scaling transform.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation};
use num_complex::Complex64;

/// A Fourier multiplier with an explicit zero-mode rule.
///
/// The evaluator is only consulted at nonzero lattice frequencies; the zero
/// mode always uses the stored finite value, never an evaluated singularity.
pub struct MultiplierSymbol {
    zero_mode: Complex64,
    eval: Box<dyn Fn(&[f64]) -> Complex64 + Send + Sync>,
}

impl MultiplierSymbol {
    pub fn new(
        zero_mode: Complex64,
        eval: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            zero_mode,
            eval: Box::new(eval),
        }
    }

    /// `|xi|^s` with zero mode 0 (the homogeneous symbol).
    pub fn fractional(s: f64) -> Self {
        Self::new(Complex64::ZERO, move |xi| {
            let r2: f64 = xi.iter().map(|x| x * x).sum();
            Complex64::new(r2.sqrt().powf(s), 0.0)
        })
    }

    /// `<xi>^s = (1 + |xi|^2)^{s/2}`, finite everywhere.
    pub fn bessel(s: f64) -> Self {
        Self::new(Complex64::ONE, move |xi| {
            let r2: f64 = xi.iter().map(|x| x * x).sum();
            Complex64::new((1.0 + r2).powf(s / 2.0), 0.0)
        })
    }

    pub fn evaluate(&self, xi: &[f64]) -> Complex64 {
        if xi.iter().all(|&x| x == 0.0) {
            self.zero_mode
        } else {
            (self.eval)(xi)
        }
    }
}

/// Multiply the frequency coefficients pointwise by the symbol.
/// The output representation matches the input.
pub fn apply_multiplier(f: &Field, m: &MultiplierSymbol) -> Result<Field> {
    let rep_in = f.rep();
    let grid = f.grid();
    let mut out = f.to_frequency();
    let freqs = grid.freq_table();
    let mut bad: Option<usize> = None;
    {
        let data = out.data_mut();
        let mut xi = [0.0f64; 5];
        grid.for_each_index(|flat, idx| {
            for (a, &k) in idx.iter().enumerate() {
                xi[a] = freqs[k];
            }
            let value = if flat == 0 {
                m.zero_mode
            } else {
                (m.eval)(&xi[..grid.dim()])
            };
            if !value.re.is_finite() || !value.im.is_finite() {
                bad.get_or_insert(flat);
            }
            data[flat] *= value;
        });
    }
    if let Some(flat) = bad {
        return Err(Error::NonFiniteSymbol(flat));
    }
    if rep_in == Representation::Physical {
        out.make_physical();
    }
    Ok(out)
}

/// The smooth radial cutoff: 1 on `|xi| <= 1`, 0 on `|xi| >= 2`, a quintic
/// smoothstep in between. Any such bump is admissible; this one is C^2.
pub fn lp_bump(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let t = 2.0 - r;
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    /// `P_{<=N}`: smooth low-pass.
    LowPass,
    /// `P_N`: the dyadic shell at height N.
    Shell,
    /// `P_{>N} = 1 - P_{<=N}`.
    HighPass,
    /// `P_{>=N} = 1 - P_{<=N/2}`.
    HighPassInclusive,
}

pub fn is_dyadic(x: f64) -> bool {
    if !(x > 0.0) || !x.is_finite() {
        return false;
    }
    let k = x.log2().round() as i32;
    x == 2.0f64.powi(k)
}

/// Littlewood-Paley projection with the smooth cutoff.
pub fn lp_project(f: &Field, band: Band, n_dyadic: f64) -> Result<Field> {
    if !is_dyadic(n_dyadic) {
        return Err(Error::NotDyadic("Littlewood-Paley height N", n_dyadic));
    }
    let weight = move |xi: &[f64]| -> f64 {
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt() / n_dyadic;
        match band {
            Band::LowPass => lp_bump(r),
            Band::Shell => lp_bump(r) - lp_bump(2.0 * r),
            Band::HighPass => 1.0 - lp_bump(r),
            Band::HighPassInclusive => 1.0 - lp_bump(2.0 * r),
        }
    };
    let m = MultiplierSymbol::new(
        Complex64::new(weight(&[0.0]), 0.0),
        move |xi| Complex64::new(weight(xi), 0.0),
    );
    apply_multiplier(f, &m)
}

/// Free Schroedinger propagator: multiply each coefficient by `e^{-i |xi|^2 t}`.
pub fn free_propagate(f: &Field, t: f64) -> Field {
    let rep_in = f.rep();
    let grid = f.grid();
    let mut out = f.to_frequency();
    let freq_sq: Vec<f64> = grid.freq_table().iter().map(|x| x * x).collect();
    {
        let data = out.data_mut();
        grid.for_each_index(|flat, idx| {
            let k2: f64 = idx.iter().map(|&k| freq_sq[k]).sum();
            data[flat] *= Complex64::from_polar(1.0, -k2 * t);
        });
    }
    if rep_in == Representation::Physical {
        out.make_physical();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    /// Lebesgue norm by rectangle-rule quadrature; `Lp(f64::INFINITY)` is sup.
    Lp(f64),
    /// Inhomogeneous Sobolev norm via Plancherel with the `<xi>^s` weight.
    Hs(f64),
    /// Homogeneous Sobolev norm; the zero mode is excluded.
    HsDot(f64),
}

pub fn norm(f: &Field, kind: Norm) -> Result<f64> {
    match kind {
        Norm::Lp(p) => {
            if !(p >= 1.0) {
                return Err(Error::LebesgueExponent(p));
            }
            let phys = f.to_physical();
            if p.is_infinite() {
                return Ok(phys.sup());
            }
            let vol = f.grid().spacing().powi(f.grid().dim() as i32);
            if p == 2.0 {
                let s: f64 = phys.data().iter().map(|v| v.norm_sqr()).sum();
                return Ok((vol * s).sqrt());
            }
            let s: f64 = phys.data().iter().map(|v| v.norm().powf(p)).sum();
            Ok((vol * s).powf(1.0 / p))
        }
        Norm::Hs(s) => Ok(sobolev(f, s, false)),
        Norm::HsDot(s) => Ok(sobolev(f, s, true)),
    }
}

fn sobolev(f: &Field, s: f64, homogeneous: bool) -> f64 {
    let grid = f.grid();
    let hat = f.to_frequency();
    let freq_sq: Vec<f64> = grid.freq_table().iter().map(|x| x * x).collect();
    let mut acc = 0.0;
    let data = hat.data();
    grid.for_each_index(|flat, idx| {
        let k2: f64 = idx.iter().map(|&k| freq_sq[k]).sum();
        let w = if homogeneous {
            if flat == 0 {
                0.0
            } else {
                k2.powf(s)
            }
        } else {
            (1.0 + k2).powf(s)
        };
        acc += w * data[flat].norm_sqr();
    });
    (grid.freq_step().powi(grid.dim() as i32) * acc).sqrt()
}

/// Rescale `f` onto `target`: returns `lambda^{(d-2)/2} f(lambda x)` sampled on
/// the target grid (side `L/lambda`), resampling in frequency space by mode
/// copy with zero-pad/truncate.
pub fn scale_field(f: &Field, lambda: f64, target: Grid) -> Result<Field> {
    let grid = f.grid();
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("scaling factor must be positive, got {lambda}")));
    }
    let want = grid.box_length() / lambda;
    if target.dim() != grid.dim() || (target.box_length() - want).abs() > 1e-9 * want {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let factor = lambda.powf((d as f64 - 2.0) / 2.0 - d as f64);
    let hat = f.to_frequency();
    let mut out = Field::zeros(target, Representation::Frequency);
    let n_src = grid.points_per_axis();
    let n_dst = target.points_per_axis();
    let half = n_src.min(n_dst) as i64 / 2;
    {
        let src = hat.data();
        let dst = out.data_mut();
        let mut pos = [0usize; 5];
        grid.for_each_index(|flat, idx| {
            let mut inside = true;
            for (a, &k) in idx.iter().enumerate() {
                let signed = grid.signed_index(k);
                if signed < -half || signed >= half {
                    inside = false;
                    break;
                }
                pos[a] = signed.rem_euclid(n_dst as i64) as usize;
            }
            if inside {
                let mut flat_dst = 0usize;
                for &p in pos.iter().take(d) {
                    flat_dst = flat_dst * n_dst + p;
                }
                dst[flat_dst] = src[flat] * factor;
            }
        });
    }
    if f.rep() == Representation::Physical {
        out.make_physical();
    }
    Ok(out)
}

/// Scale a field so its `H^s` norm equals `target` (returns unchanged if the
/// field is identically zero).
pub fn normalized_hs(f: &Field, s: f64, target: f64) -> Field {
    let current = sobolev(f, s, false);
    if current == 0.0 {
        f.clone()
    } else {
        f.scaled(Complex64::new(target / current, 0.0))
    }
}
