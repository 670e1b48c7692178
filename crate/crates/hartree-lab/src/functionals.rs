//! Scalar functionals of the flow: mass, energy, perturbed mass/energy,
//! momentum brackets, the two-point interaction action and its derivative
//! decomposition, the interaction quantity with its gradient surrogate,
//! discrete space-time norms, the scattering diagnostic, and the almost
//! conservation drift record.

use crate::dynamics::{nonlinearity, HartreeKernel, PerturbedState, PerturbedTrajectory};
use crate::error::{Error, Result};
use crate::fft::ndfft;
use crate::grid::{Field, Grid, Representation};
use crate::kernels;
use crate::spectral::{apply_multiplier, norm, MultiplierSymbol, Norm};
use num_complex::Complex64;

/// Mass `M(u) = int |u|^2`, computed in whichever representation `u` holds
/// (the two agree by Plancherel).
pub fn mass(u: &Field) -> f64 {
    let g = u.grid();
    let sum: f64 = u.data().iter().map(|v| v.norm_sqr()).sum();
    match u.rep() {
        Representation::Physical => g.spacing().powi(g.dim() as i32) * sum,
        Representation::Frequency => g.freq_step().powi(g.dim() as i32) * sum,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

/// Energy `E(u) = 1/2 |grad u|_2^2 + 1/4 <V * |u|^2, |u|^2>`.
pub fn energy(u: &Field, kernel: &HartreeKernel) -> Result<EnergyParts> {
    let kinetic = 0.5 * norm(u, Norm::HsDot(1.0))?.powi(2);
    let phys = u.to_physical();
    let pot_field = crate::dynamics::hartree_potential(&phys, kernel)?;
    let vol = u.grid().spacing().powi(u.grid().dim() as i32);
    let potential: f64 = 0.25
        * vol
        * phys
            .data()
            .iter()
            .zip(pot_field.data())
            .map(|(v, p)| v.norm_sqr() * p.re)
            .sum::<f64>();
    Ok(EnergyParts {
        kinetic,
        potential,
        total: kinetic + potential,
    })
}

/// Perturbed mass and energy `(M_w, E_w)`. The gradient part uses `w` only;
/// the potential part is built from the full solution `u = v + w`.
pub fn perturbed_mass_energy(st: &PerturbedState, kernel: &HartreeKernel) -> Result<(f64, f64)> {
    let m_w = mass(&st.w);
    let kinetic = 0.5 * norm(&st.w, Norm::HsDot(1.0))?.powi(2);
    let u = st.full()?;
    let phys = u.to_physical();
    let pot_field = crate::dynamics::hartree_potential(&phys, kernel)?;
    let vol = u.grid().spacing().powi(u.grid().dim() as i32);
    let potential: f64 = 0.25
        * vol
        * phys
            .data()
            .iter()
            .zip(pot_field.data())
            .map(|(v, p)| v.norm_sqr() * p.re)
            .sum::<f64>();
    Ok((m_w, kinetic + potential))
}

/// Momentum bracket `{f, g}_p = Re(f grad(conj g) - g grad(conj f))`, returned
/// as `d` real-valued physical fields.
pub fn momentum_bracket(f: &Field, g: &Field) -> Result<Vec<Field>> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    let fp = f.to_physical();
    let gp = g.to_physical();
    let gf = gradient(&fp);
    let gg = gradient(&gp);
    (0..grid.dim())
        .map(|axis| {
            let data = fp
                .data()
                .iter()
                .zip(gp.data())
                .zip(gg[axis].data().iter().zip(gf[axis].data()))
                .map(|((&fv, &gv), (&dgv, &dfv))| {
                    Complex64::new((fv * dgv.conj() - gv * dfv.conj()).re, 0.0)
                })
                .collect();
            Field::from_data(grid, Representation::Physical, data)
        })
        .collect()
}

/// Spectral gradient, one physical field per axis.
pub fn gradient(f: &Field) -> Vec<Field> {
    let grid = f.grid();
    let hat = f.to_frequency();
    let freqs = grid.freq_table();
    (0..grid.dim())
        .map(|axis| {
            let mut out = hat.clone();
            {
                let data = out.data_mut();
                grid.for_each_index(|flat, idx| {
                    data[flat] *= Complex64::new(0.0, freqs[idx[axis]]);
                });
            }
            out.make_physical();
            out
        })
        .collect()
}

/// Continuum derivatives of the two-point weight `m(x) = |x|` at radius `r`.
pub fn weight_gradient(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        1.0
    }
}

pub fn weight_laplacian(d: usize, r: f64) -> f64 {
    (d as f64 - 1.0) / r
}

pub fn weight_bilaplacian(d: usize, r: f64) -> f64 {
    -(d as f64 - 1.0) * (d as f64 - 3.0) / (r * r * r)
}

/// Precomputed frequency responses for the interaction-action machinery.
///
/// The direction kernels `x_j/|x|` are minimal-image sampled; the Hessian,
/// Laplacian and bi-Laplacian weights are their exact spectral derivatives,
/// so every integration-by-parts step in the derivative decomposition holds
/// exactly on the lattice. (Literal sampling of the derived kernels leaves an
/// O(dx) defect in the identity at coarse resolution.)
#[derive(Debug, Clone)]
pub struct MorawetzKernels {
    grid: Grid,
    /// imaginary parts of the direction-kernel responses (the full response
    /// of an odd kernel is `i * imag`)
    grad_im: Vec<Vec<f64>>,
    /// response of the weight Laplacian, `sum_j d_j (x_j/|x|)` spectrally
    laplacian_re: Vec<f64>,
    /// response of minus the weight bi-Laplacian, `|xi|^2 *` Laplacian response
    neg_bilaplacian_re: Vec<f64>,
}

impl MorawetzKernels {
    pub fn new(grid: Grid) -> Self {
        let freqs = grid.freq_table();
        let grad_im: Vec<Vec<f64>> = (0..grid.dim())
            .map(|axis| {
                let samples = kernels::sample_direction_kernel(grid, axis);
                kernels::imag_response(grid, &samples)
            })
            .collect();
        let mut laplacian_re = vec![0.0f64; grid.points()];
        let mut neg_bilaplacian_re = vec![0.0f64; grid.points()];
        grid.for_each_index(|flat, idx| {
            let mut div = 0.0;
            let mut k2 = 0.0;
            for (axis, &k) in idx.iter().enumerate() {
                // d_j applied to the odd kernel: (i xi_j)(i im_j) = -xi_j im_j
                div -= freqs[k] * grad_im[axis][flat];
                k2 += freqs[k] * freqs[k];
            }
            laplacian_re[flat] = div;
            neg_bilaplacian_re[flat] = k2 * div;
        });
        Self {
            grid,
            grad_im,
            laplacian_re,
            neg_bilaplacian_re,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// The interaction action
    /// `M = 2 Im iint |w(y)|^2 grad m(x-y) . grad w(x) conj(w(x)) dx dy`.
    pub fn action(&self, w: &Field) -> Result<f64> {
        if w.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let ws = Workspace::new(self, w)?;
        Ok(ws.action(self))
    }

    /// All terms of the derivative decomposition at one state. Pass the
    /// forcing term `e` of the perturbed equation when present; without it
    /// the three forcing terms vanish identically.
    pub fn breakdown(
        &self,
        w: &Field,
        e: Option<&Field>,
        hartree: &HartreeKernel,
    ) -> Result<MorawetzBreakdown> {
        if w.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if self.grid.dim() < 4 {
            return Err(Error::MorawetzDimension(self.grid.dim()));
        }
        let ws = Workspace::new(self, w)?;
        ws.breakdown(self, e, hartree)
    }
}

/// The derivative decomposition of the interaction action at one time.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MorawetzBreakdown {
    /// M(t) itself.
    pub action: f64,
    /// Momentum-density correlation term (paired with the Hessian weight).
    pub momentum_flux: f64,
    /// Mass-mass term with minus the weight bi-Laplacian.
    pub mass_interaction: f64,
    /// Gradient-mass term with the Hessian weight.
    pub gradient_interaction: f64,
    /// Momentum bracket of the defocusing nonlinearity; nonnegative.
    pub defocusing_potential: f64,
    /// Forcing term paired with the momentum density.
    pub forcing_mass_flux: f64,
    /// Forcing term paired with the gradient.
    pub forcing_gradient: f64,
    /// Forcing term paired with the mass density.
    pub forcing_mass: f64,
}

impl MorawetzBreakdown {
    /// Sum of the seven derivative terms.
    pub fn term_sum(&self) -> f64 {
        self.momentum_flux
            + self.mass_interaction
            + self.gradient_interaction
            + self.defocusing_potential
            + self.forcing_mass_flux
            + self.forcing_gradient
            + self.forcing_mass
    }

    pub fn max_abs_term(&self) -> f64 {
        [
            self.momentum_flux,
            self.mass_interaction,
            self.gradient_interaction,
            self.defocusing_potential,
            self.forcing_mass_flux,
            self.forcing_gradient,
            self.forcing_mass,
        ]
        .iter()
        .fold(0.0f64, |acc, t| acc.max(t.abs()))
    }
}

/// Shared intermediates for the action and its decomposition.
struct Workspace {
    vol: f64,
    inv_points: f64,
    w_phys: Field,
    grad_w: Vec<Field>,
    density: Vec<f64>,
    density_hat: Vec<Complex64>,
    momentum: Vec<Vec<f64>>,
    /// conv(x_k/|x|, |w|^2), reused by the action and two forcing terms
    grad_conv_density: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(mk: &MorawetzKernels, w: &Field) -> Result<Self> {
        let grid = mk.grid;
        let vol = grid.spacing().powi(grid.dim() as i32);
        let inv_points = 1.0 / grid.points() as f64;
        let w_phys = w.to_physical();
        let grad_w = gradient(&w_phys);
        let density: Vec<f64> = w_phys.data().iter().map(|v| v.norm_sqr()).collect();
        let mut density_hat: Vec<Complex64> =
            density.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        ndfft(
            &mut density_hat,
            grid.dim(),
            grid.points_per_axis(),
            false,
        );
        let momentum: Vec<Vec<f64>> = grad_w
            .iter()
            .map(|gj| {
                w_phys
                    .data()
                    .iter()
                    .zip(gj.data())
                    .map(|(&wv, &gv)| (wv.conj() * gv).im)
                    .collect()
            })
            .collect();
        let grad_conv_density: Vec<Vec<f64>> = (0..grid.dim())
            .map(|axis| {
                // odd kernel: response is i*imag -> real output for real input
                let mut buf: Vec<Complex64> = density_hat
                    .iter()
                    .zip(&mk.grad_im[axis])
                    .map(|(&h, &im)| h * Complex64::new(0.0, im))
                    .collect();
                ndfft(&mut buf, grid.dim(), grid.points_per_axis(), true);
                buf.iter().map(|v| v.re * inv_points).collect()
            })
            .collect();
        Ok(Self {
            vol,
            inv_points,
            w_phys,
            grad_w,
            density,
            density_hat,
            momentum,
            grad_conv_density,
        })
    }

    fn action(&self, mk: &MorawetzKernels) -> f64 {
        let d = mk.grid.dim();
        let mut acc = 0.0;
        for axis in 0..d {
            acc += dot(&self.grad_conv_density[axis], &self.momentum[axis]);
        }
        2.0 * acc * self.vol
    }

    fn breakdown(
        &self,
        mk: &MorawetzKernels,
        e: Option<&Field>,
        hartree: &HartreeKernel,
    ) -> Result<MorawetzBreakdown> {
        let grid = mk.grid;
        let d = grid.dim();
        let n = grid.points_per_axis();
        let freqs = grid.freq_table();

        // raw spectra of the momentum components
        let momentum_hat: Vec<Vec<Complex64>> = self
            .momentum
            .iter()
            .map(|p| {
                let mut buf: Vec<Complex64> =
                    p.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                ndfft(&mut buf, d, n, false);
                buf
            })
            .collect();

        // momentum_flux = -4 sum_jk < (d_j gradm_k) * p_j, p_k >; the Hessian
        // response factorizes as -xi_j im_k, so sum_j collapses to one
        // combined spectrum per k.
        let mut xi_dot_p = vec![Complex64::ZERO; grid.points()];
        grid.for_each_index(|flat, idx| {
            let mut acc = Complex64::ZERO;
            for (axis, &k) in idx.iter().enumerate() {
                acc += momentum_hat[axis][flat] * freqs[k];
            }
            xi_dot_p[flat] = acc;
        });
        let mut momentum_flux = 0.0;
        for axis in 0..d {
            let mut buf: Vec<Complex64> = xi_dot_p
                .iter()
                .zip(&mk.grad_im[axis])
                .map(|(&s, &im)| -s * im)
                .collect();
            ndfft(&mut buf, d, n, true);
            let conv: Vec<f64> = buf.iter().map(|v| v.re * self.inv_points).collect();
            momentum_flux += dot(&conv, &self.momentum[axis]);
        }
        momentum_flux *= -4.0 * self.vol;

        // mass_interaction = < (-bilap m) * |w|^2, |w|^2 >
        let mass_interaction = {
            let mut buf: Vec<Complex64> = self
                .density_hat
                .iter()
                .zip(&mk.neg_bilaplacian_re)
                .map(|(&h, &r)| h * r)
                .collect();
            ndfft(&mut buf, d, n, true);
            let conv: Vec<f64> = buf.iter().map(|v| v.re * self.inv_points).collect();
            dot(&conv, &self.density) * self.vol
        };

        // gradient_interaction = 4 sum_jk < hessian_jk * |w|^2, Re(d_j conj w d_k w) >
        let mut gradient_interaction = 0.0;
        for j in 0..d {
            for k in 0..d {
                let mut buf: Vec<Complex64> = vec![Complex64::ZERO; grid.points()];
                grid.for_each_index(|flat, idx| {
                    buf[flat] =
                        self.density_hat[flat] * (-freqs[idx[j]] * mk.grad_im[k][flat]);
                });
                ndfft(&mut buf, d, n, true);
                let mut acc = 0.0;
                for (flat, v) in buf.iter().enumerate() {
                    let pair = (self.grad_w[j].data()[flat].conj()
                        * self.grad_w[k].data()[flat])
                        .re;
                    acc += v.re * self.inv_points * pair;
                }
                gradient_interaction += acc;
            }
        }
        gradient_interaction *= 4.0 * self.vol;

        // defocusing_potential = -2 sum_j < gradm_j * |w|^2, (V * d_j|w|^2) |w|^2 >,
        // the momentum bracket of the Hartree nonlinearity; exact for the
        // lattice flow and nonnegative by convexity of the weight.
        let mut defocusing_potential = 0.0;
        for axis in 0..d {
            let d_density: Vec<Complex64> = self
                .w_phys
                .data()
                .iter()
                .zip(self.grad_w[axis].data())
                .map(|(&wv, &gv)| Complex64::new(2.0 * (wv.conj() * gv).re, 0.0))
                .collect();
            let v_conv = kernels::convolve(grid, &d_density, hartree.response());
            let mut acc = 0.0;
            for (flat, &h) in self.grad_conv_density[axis].iter().enumerate() {
                acc += h * v_conv[flat].re * self.density[flat];
            }
            defocusing_potential += acc;
        }
        defocusing_potential *= -2.0 * self.vol;

        let (forcing_mass_flux, forcing_gradient, forcing_mass) = if let Some(e) = e {
            let e_phys = e.to_physical();
            let ew: Vec<Complex64> = e_phys
                .data()
                .iter()
                .zip(self.w_phys.data())
                .map(|(&ev, &wv)| ev * wv.conj())
                .collect();

            // forcing_mass_flux = 4 sum_k < gradm_k * Im(e conj w), p_k >
            let mut imag_ew_hat: Vec<Complex64> =
                ew.iter().map(|v| Complex64::new(v.im, 0.0)).collect();
            ndfft(&mut imag_ew_hat, d, n, false);
            let mut forcing_mass_flux = 0.0;
            for axis in 0..d {
                let mut buf: Vec<Complex64> = imag_ew_hat
                    .iter()
                    .zip(&mk.grad_im[axis])
                    .map(|(&h, &im)| h * Complex64::new(0.0, im))
                    .collect();
                ndfft(&mut buf, d, n, true);
                let conv: Vec<f64> = buf.iter().map(|v| v.re * self.inv_points).collect();
                forcing_mass_flux += dot(&conv, &self.momentum[axis]);
            }
            forcing_mass_flux *= 4.0 * self.vol;

            // forcing_gradient = 4 sum_k < gradm_k * |w|^2, Re(e d_k conj w) >
            let mut forcing_gradient = 0.0;
            for axis in 0..d {
                let mut acc = 0.0;
                for (flat, &h) in self.grad_conv_density[axis].iter().enumerate() {
                    acc += h * (e_phys.data()[flat] * self.grad_w[axis].data()[flat].conj()).re;
                }
                forcing_gradient += acc;
            }
            forcing_gradient *= 4.0 * self.vol;

            // forcing_mass = 2 < laplacian_m * |w|^2, Re(e conj w) >
            let mut buf: Vec<Complex64> = self
                .density_hat
                .iter()
                .zip(&mk.laplacian_re)
                .map(|(&h, &r)| h * r)
                .collect();
            ndfft(&mut buf, d, n, true);
            let mut forcing_mass = 0.0;
            for (flat, v) in buf.iter().enumerate() {
                forcing_mass += v.re * self.inv_points * ew[flat].re;
            }
            forcing_mass *= 2.0 * self.vol;

            (forcing_mass_flux, forcing_gradient, forcing_mass)
        } else {
            (0.0, 0.0, 0.0)
        };

        Ok(MorawetzBreakdown {
            action: self.action(mk),
            momentum_flux,
            mass_interaction,
            gradient_interaction,
            defocusing_potential,
            forcing_mass_flux,
            forcing_gradient,
            forcing_mass,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Per-snapshot breakdowns along a perturbed trajectory, with the
/// finite-difference derivative of the action (centered at interior
/// snapshots, one-sided at the ends).
#[derive(Debug, Clone)]
pub struct MorawetzSeries {
    pub times: Vec<f64>,
    pub rows: Vec<MorawetzBreakdown>,
    pub action_rate_fd: Vec<f64>,
}

pub fn morawetz_series(
    traj: &PerturbedTrajectory,
    hartree: &HartreeKernel,
    mk: &MorawetzKernels,
) -> Result<MorawetzSeries> {
    if traj.len() < 2 {
        return Err(Error::TooFewSnapshots {
            need: 2,
            have: traj.len(),
        });
    }
    let rows: Vec<MorawetzBreakdown> = (0..traj.len())
        .map(|i| mk.breakdown(&traj.w[i], Some(&traj.e[i]), hartree))
        .collect::<Result<_>>()?;
    let actions: Vec<f64> = rows.iter().map(|r| r.action).collect();
    let action_rate_fd = finite_difference(&traj.times, &actions);
    Ok(MorawetzSeries {
        times: traj.times.clone(),
        rows,
        action_rate_fd,
    })
}

/// Centered differences at interior nodes, one-sided at the ends.
pub fn finite_difference(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (values[1] - values[0]) / (times[1] - times[0]);
    out[n - 1] = (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]);
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1]);
    }
    out
}

/// The two-point interaction quantity and its gradient surrogate.
///
/// The proportionality constant of the surrogate is fitted once per grid on a
/// calibration Gaussian, then held fixed; the testable statement is constancy
/// of the kernel/surrogate ratio, not a universal constant.
#[derive(Debug, Clone)]
pub struct InteractionGauge {
    grid: Grid,
    k3_response: Vec<f64>,
    proportionality: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct InteractionQuantity {
    pub kernel_form: f64,
    pub surrogate_form: f64,
}

impl InteractionGauge {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.dim() < 4 {
            return Err(Error::InteractionDimension(grid.dim()));
        }
        let samples = kernels::sample_power_kernel(grid, 3.0);
        let k3_response = kernels::real_response(grid, &samples);
        let mut gauge = Self {
            grid,
            k3_response,
            proportionality: 1.0,
        };
        let width = grid.box_length() / 8.0;
        let calib = Field::from_physical_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
        });
        let (kernel_form, raw) = gauge.raw_eval(&calib)?;
        if raw > 0.0 {
            gauge.proportionality = kernel_form / raw;
        }
        Ok(gauge)
    }

    fn raw_eval(&self, u: &Field) -> Result<(f64, f64)> {
        let phys = u.to_physical();
        let density: Vec<Complex64> = phys
            .data()
            .iter()
            .map(|v| Complex64::new(v.norm_sqr(), 0.0))
            .collect();
        let conv = kernels::convolve(self.grid, &density, &self.k3_response);
        let vol = self.grid.spacing().powi(self.grid.dim() as i32);
        let kernel_form: f64 = conv
            .iter()
            .zip(&density)
            .map(|(a, b)| a.re * b.re)
            .sum::<f64>()
            * vol;
        let density_field = Field::from_data(self.grid, Representation::Physical, density)?;
        let s = -((self.grid.dim() as f64 - 3.0) / 2.0);
        let raw = norm(&density_field, Norm::HsDot(s))?.powi(2);
        Ok((kernel_form, raw))
    }

    pub fn eval(&self, u: &Field) -> Result<InteractionQuantity> {
        if u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let (kernel_form, raw) = self.raw_eval(u)?;
        Ok(InteractionQuantity {
            kernel_form,
            surrogate_form: raw * self.proportionality,
        })
    }

    pub fn proportionality(&self) -> f64 {
        self.proportionality
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivWeight {
    None,
    Bessel(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct NormSummand {
    pub time_exp: f64,
    pub space_exp: f64,
    pub weight: DerivWeight,
}

/// A sum of space-time norms, each `( int |<grad>^s f(t)|_{L^r}^q dt )^{1/q}`.
#[derive(Debug, Clone)]
pub struct SpaceTimeNormSpec {
    pub summands: Vec<NormSummand>,
}

impl SpaceTimeNormSpec {
    /// The local-theory norm: `<grad> f` in `L_t^2 L_x^{10/3}` plus
    /// `L_t^4 L_x^4`, `L_t^4 L_x^5` and `L_t^3 L_x^6`.
    pub fn x_norm() -> Self {
        Self {
            summands: vec![
                NormSummand {
                    time_exp: 2.0,
                    space_exp: 10.0 / 3.0,
                    weight: DerivWeight::Bessel(1.0),
                },
                NormSummand {
                    time_exp: 4.0,
                    space_exp: 4.0,
                    weight: DerivWeight::None,
                },
                NormSummand {
                    time_exp: 4.0,
                    space_exp: 5.0,
                    weight: DerivWeight::None,
                },
                NormSummand {
                    time_exp: 3.0,
                    space_exp: 6.0,
                    weight: DerivWeight::None,
                },
            ],
        }
    }

    /// The rough-evolution norm: `<grad>^{s + a/2} f` in `L_t^2 L_x^5` plus
    /// `L_t^4 L_x^5`, `L_t^4 L_x^4` and `L_t^6 L_x^3`.
    pub fn y_norm(s: f64, a: u32) -> Self {
        Self {
            summands: vec![
                NormSummand {
                    time_exp: 2.0,
                    space_exp: 5.0,
                    weight: DerivWeight::Bessel(s + a as f64 / 2.0),
                },
                NormSummand {
                    time_exp: 4.0,
                    space_exp: 5.0,
                    weight: DerivWeight::None,
                },
                NormSummand {
                    time_exp: 4.0,
                    space_exp: 4.0,
                    weight: DerivWeight::None,
                },
                NormSummand {
                    time_exp: 6.0,
                    space_exp: 3.0,
                    weight: DerivWeight::None,
                },
            ],
        }
    }
}

/// Discrete space-time norm over snapshots: trapezoid quadrature in time on
/// the q-th power of the spatial norm.
pub fn spacetime_norm(times: &[f64], fields: &[Field], spec: &SpaceTimeNormSpec) -> Result<f64> {
    if times.len() < 2 || fields.len() != times.len() {
        return Err(Error::TooFewSnapshots {
            need: 2,
            have: times.len().min(fields.len()),
        });
    }
    let mut total = 0.0;
    for summand in &spec.summands {
        if !(summand.time_exp >= 1.0) || !(summand.space_exp >= 1.0) {
            return Err(Error::LebesgueExponent(
                summand.time_exp.min(summand.space_exp),
            ));
        }
        let mut powers = Vec::with_capacity(times.len());
        for f in fields {
            let spatial = match summand.weight {
                DerivWeight::None => norm(f, Norm::Lp(summand.space_exp))?,
                DerivWeight::Bessel(s) => {
                    let weighted = apply_multiplier(f, &MultiplierSymbol::bessel(s))?;
                    norm(&weighted, Norm::Lp(summand.space_exp))?
                }
            };
            powers.push(spatial.powf(summand.time_exp));
        }
        let mut integral = 0.0;
        for i in 0..times.len() - 1 {
            integral += 0.5 * (powers[i] + powers[i + 1]) * (times[i + 1] - times[i]);
        }
        total += integral.powf(1.0 / summand.time_exp);
    }
    Ok(total)
}

/// Cauchy increments of the interaction representation:
/// `|e^{-i t2 D} u(t2) - e^{-i t1 D} u(t1)|_{H^1}` for consecutive snapshots.
pub fn scattering_diagnostic(times: &[f64], fields: &[Field]) -> Result<Vec<f64>> {
    if times.len() < 2 || fields.len() != times.len() {
        return Err(Error::TooFewSnapshots {
            need: 2,
            have: times.len().min(fields.len()),
        });
    }
    let mut pulled: Vec<Field> = Vec::with_capacity(times.len());
    for (t, f) in times.iter().zip(fields) {
        pulled.push(crate::spectral::free_propagate(f, -t));
    }
    let mut out = Vec::with_capacity(times.len() - 1);
    for i in 0..times.len() - 1 {
        out.push(norm(&pulled[i + 1].sub(&pulled[i])?, Norm::Hs(1.0))?);
    }
    Ok(out)
}

/// Almost-conservation record: the perturbed mass/energy series, their
/// finite-difference rates, and the direct drift integrands
/// `2 |int e conj(w)|` and `|int F(u) Lap(conj v)|`.
#[derive(Debug, Clone)]
pub struct ConservationDrift {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub mass_rate_fd: Vec<f64>,
    pub energy_rate_fd: Vec<f64>,
    pub mass_integrand: Vec<f64>,
    pub energy_integrand: Vec<f64>,
}

impl ConservationDrift {
    /// Pointwise ratio |finite-difference rate| / integrand (infinite where
    /// the integrand vanishes but the rate does not).
    pub fn mass_ratio(&self) -> Vec<f64> {
        self.mass_rate_fd
            .iter()
            .zip(&self.mass_integrand)
            .map(|(&r, &b)| if b > 0.0 { r.abs() / b } else if r == 0.0 { 0.0 } else { f64::INFINITY })
            .collect()
    }
}

pub fn almost_conservation_bounds(
    traj: &PerturbedTrajectory,
    kernel: &HartreeKernel,
) -> Result<ConservationDrift> {
    if traj.len() < 2 {
        return Err(Error::TooFewSnapshots {
            need: 2,
            have: traj.len(),
        });
    }
    if traj.e.len() != traj.len() {
        return Err(Error::MissingStatistics("forcing term records"));
    }
    let grid = traj.v0.grid();
    let vol = grid.spacing().powi(grid.dim() as i32);
    let freq_sq: Vec<f64> = grid.freq_table().iter().map(|x| x * x).collect();
    let mut mass_series = Vec::with_capacity(traj.len());
    let mut energy_series = Vec::with_capacity(traj.len());
    let mut mass_integrand = Vec::with_capacity(traj.len());
    let mut energy_integrand = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let st = traj.state(i);
        let (m_w, e_w) = perturbed_mass_energy(&st, kernel)?;
        mass_series.push(m_w);
        energy_series.push(e_w);

        let e_field = &traj.e[i];
        let pair: Complex64 = e_field
            .data()
            .iter()
            .zip(st.w.data())
            .map(|(&ev, &wv)| ev * wv.conj())
            .sum();
        mass_integrand.push(2.0 * (pair * vol).norm());

        // Lap v in physical space
        let mut lap_v = crate::spectral::free_propagate(&traj.v0, st.t);
        {
            let data = lap_v.data_mut();
            grid.for_each_index(|flat, idx| {
                let k2: f64 = idx.iter().map(|&k| freq_sq[k]).sum();
                data[flat] *= -k2;
            });
        }
        lap_v.make_physical();
        let u = st.full()?;
        let f_u = nonlinearity(&u, kernel)?;
        let pair: Complex64 = f_u
            .data()
            .iter()
            .zip(lap_v.data())
            .map(|(&fv, &lv)| fv * lv.conj())
            .sum();
        energy_integrand.push((pair * vol).norm());
    }
    let mass_rate_fd = finite_difference(&traj.times, &mass_series);
    let energy_rate_fd = finite_difference(&traj.times, &energy_series);
    Ok(ConservationDrift {
        times: traj.times.clone(),
        mass: mass_series,
        energy: energy_series,
        mass_rate_fd,
        energy_rate_fd,
        mass_integrand,
        energy_integrand,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::KernelMode;

    fn gaussian5(grid: Grid, width: f64) -> Field {
        Field::from_physical_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
        })
    }

    #[test]
    fn mass_examples() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        assert_eq!(mass(&Field::zeros(g, Representation::Physical)), 0.0);

        let g5 = Grid::new(5, 16, 16.0).unwrap();
        let f = gaussian5(g5, 1.0);
        let m = mass(&f);
        let expect = std::f64::consts::PI.powf(2.5);
        assert!((m - expect).abs() < 1e-6 * expect, "{m} vs {expect}");

        // invariance under the free flow
        let evolved = crate::spectral::free_propagate(&f, 0.4);
        assert!((mass(&evolved) - m).abs() < 1e-12 * m);
    }

    #[test]
    fn energy_kinetic_matches_gaussian_moment() {
        // oracle: int |grad e^{-|x|^2/2}|^2 = int |x|^2 e^{-|x|^2} = (d/2) pi^{d/2}
        let g5 = Grid::new(5, 16, 16.0).unwrap();
        let k = HartreeKernel::sampled(g5, 4.0).unwrap();
        let f = gaussian5(g5, 1.0);
        let parts = energy(&f, &k).unwrap();
        let expect = 0.5 * 2.5 * std::f64::consts::PI.powf(2.5);
        assert!(
            (parts.kinetic - expect).abs() < 1e-6 * expect,
            "{} vs {expect}",
            parts.kinetic
        );
        assert!(parts.potential >= 0.0);

        let z = Field::zeros(g5, Representation::Physical);
        let parts = energy(&z, &k).unwrap();
        assert_eq!(parts.total, 0.0);
    }

    #[test]
    fn potential_energy_matches_double_sum_in_1d() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let k = HartreeKernel::new(g, 0.5, KernelMode::SampledKernel).unwrap();
        let u = Field::from_physical_fn(g, |x| {
            Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0)
        });
        let parts = energy(&u, &k).unwrap();
        // direct O(n^2) oracle
        let samples = kernels::sample_power_kernel(g, 0.5);
        let density: Vec<Complex64> = u
            .data()
            .iter()
            .map(|v| Complex64::new(v.norm_sqr(), 0.0))
            .collect();
        let direct = kernels::convolve_direct(g, &density, &samples);
        let vol = g.spacing();
        let expect: f64 = 0.25
            * vol
            * direct
                .iter()
                .zip(&density)
                .map(|(a, b)| a.re * b.re)
                .sum::<f64>();
        assert!((parts.potential - expect).abs() < 1e-8 * expect);
    }

    #[test]
    fn perturbed_energy_reductions() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        let k = HartreeKernel::sampled(g, 1.0).unwrap();
        let w = Field::from_physical_fn(g, |x| {
            Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.1)
        });
        let zero = Field::zeros(g, Representation::Physical);

        let st = PerturbedState {
            t: 0.0,
            v: zero.clone(),
            w: w.clone(),
            n_zero: 2.0,
        };
        let (m_w, e_w) = perturbed_mass_energy(&st, &k).unwrap();
        let direct = energy(&w, &k).unwrap();
        assert!((m_w - mass(&w)).abs() < 1e-12 * mass(&w));
        assert!((e_w - direct.total).abs() < 1e-10 * direct.total);

        let st = PerturbedState {
            t: 0.0,
            v: w.clone(),
            w: zero,
            n_zero: 2.0,
        };
        let (m_w, e_w) = perturbed_mass_energy(&st, &k).unwrap();
        assert_eq!(m_w, 0.0);
        assert!((e_w - direct.potential).abs() < 1e-10 * direct.potential);
        assert!(e_w >= 0.0);
    }

    #[test]
    fn momentum_bracket_antisymmetry_and_plane_wave() {
        let g = Grid::new(2, 16, 2.0 * std::f64::consts::PI).unwrap();
        let f = Field::from_physical_fn(g, |x| {
            Complex64::new((x[0] * 0.5).sin(), (x[1] * 0.5).cos())
        });
        let h = Field::from_physical_fn(g, |x| {
            Complex64::new((x[0] - x[1]).cos(), 0.2)
        });

        let ff = momentum_bracket(&f, &f).unwrap();
        for comp in &ff {
            assert!(comp.sup() < 1e-12);
        }
        let fg = momentum_bracket(&f, &h).unwrap();
        let gf = momentum_bracket(&h, &f).unwrap();
        for (a, b) in fg.iter().zip(&gf) {
            let sum = a.add(b).unwrap();
            assert!(sum.sup() < 1e-13 * (a.sup() + 1.0));
        }

        // f = e^{i xi0 . x}, g = 1: bracket_k = xi0_k sin(xi0 . x)
        let xi0 = [2.0, -1.0];
        let wave = Field::from_physical_fn(g, |x| {
            Complex64::from_polar(1.0, xi0[0] * x[0] + xi0[1] * x[1])
        });
        let one = Field::from_physical_fn(g, |_| Complex64::ONE);
        let bracket = momentum_bracket(&wave, &one).unwrap();
        let coords = g.coord_table();
        for (axis, comp) in bracket.iter().enumerate() {
            let mut worst = 0.0f64;
            g.for_each_index(|flat, idx| {
                let theta = xi0[0] * coords[idx[0]] + xi0[1] * coords[idx[1]];
                let expect = xi0[axis] * theta.sin();
                worst = worst.max((comp.data()[flat].re - expect).abs());
            });
            assert!(worst < 1e-10, "axis {axis}: {worst}");
        }
    }

    #[test]
    fn weight_values_match_dimension_five_formulas() {
        assert_eq!(weight_laplacian(5, 2.0), 2.0);
        assert_eq!(-weight_bilaplacian(5, 2.0), 1.0);
        assert_eq!(weight_gradient(2.0), 1.0);
    }

    #[test]
    fn action_vanishes_for_real_fields_and_flips_under_conjugation() {
        let g = Grid::new(4, 10, 9.0).unwrap();
        let mk = MorawetzKernels::new(g);
        let real = Field::from_physical_fn(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / 2.0).exp(), 0.0)
        });
        assert!(mk.action(&real).unwrap().abs() < 1e-12);

        let w = Field::from_physical_fn(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::from_polar((-r2 / 2.0).exp(), 0.9 * x[0])
        });
        let conj = Field::from_data(
            g,
            Representation::Physical,
            w.data().iter().map(|v| v.conj()).collect(),
        )
        .unwrap();
        let a = mk.action(&w).unwrap();
        let b = mk.action(&conj).unwrap();
        assert!(a.abs() > 1e-6);
        assert!((a + b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn action_matches_double_sum_in_1d() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let mk = MorawetzKernels::new(g);
        let w = Field::from_physical_fn(g, |x| {
            Complex64::from_polar((-x[0] * x[0] / 2.0).exp(), 1.3 * x[0])
        });
        let fast = mk.action(&w).unwrap();

        // direct double sum with the sampled direction kernel
        let samples = kernels::sample_direction_kernel(g, 0);
        let grad = gradient(&w.to_physical());
        let p: Vec<f64> = w
            .data()
            .iter()
            .zip(grad[0].data())
            .map(|(&wv, &gv)| (wv.conj() * gv).im)
            .collect();
        let density: Vec<Complex64> = w
            .data()
            .iter()
            .map(|v| Complex64::new(v.norm_sqr(), 0.0))
            .collect();
        let conv = kernels::convolve_direct(g, &density, &samples);
        let slow: f64 = 2.0
            * g.spacing()
            * conv.iter().zip(&p).map(|(c, &pv)| c.re * pv).sum::<f64>();
        assert!((fast - slow).abs() < 1e-8 * slow.abs().max(1e-12));
    }

    #[test]
    fn spacetime_norm_examples() {
        let g = Grid::new(2, 16, 6.0).unwrap();
        let f = Field::from_physical_fn(g, |x| {
            Complex64::new((-x[0] * x[0] - 0.5 * x[1] * x[1]).exp(), 0.2)
        });
        let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let fields: Vec<Field> = times.iter().map(|_| f.clone()).collect();
        let spec = SpaceTimeNormSpec::x_norm();
        let total = spacetime_norm(&times, &fields, &spec).unwrap();
        let tau: f64 = 1.0;
        let mut expect = 0.0;
        for s in &spec.summands {
            let spatial = match s.weight {
                DerivWeight::None => norm(&f, Norm::Lp(s.space_exp)).unwrap(),
                DerivWeight::Bessel(sw) => {
                    let weighted =
                        apply_multiplier(&f, &MultiplierSymbol::bessel(sw)).unwrap();
                    norm(&weighted, Norm::Lp(s.space_exp)).unwrap()
                }
            };
            expect += tau.powf(1.0 / s.time_exp) * spatial;
        }
        assert!((total - expect).abs() < 1e-10 * expect);

        let zeros: Vec<Field> = times
            .iter()
            .map(|_| Field::zeros(g, Representation::Physical))
            .collect();
        assert_eq!(spacetime_norm(&times, &zeros, &spec).unwrap(), 0.0);

        assert!(matches!(
            spacetime_norm(&times[..1], &fields[..1], &spec),
            Err(Error::TooFewSnapshots { .. })
        ));
    }

    #[test]
    fn scattering_diagnostic_on_free_flow_is_null() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        let f = Field::from_physical_fn(g, |x| {
            Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0)
        });
        let times: Vec<f64> = (0..6).map(|i| i as f64 * 0.2).collect();
        let fields: Vec<Field> = times
            .iter()
            .map(|&t| crate::spectral::free_propagate(&f, t))
            .collect();
        for inc in scattering_diagnostic(&times, &fields).unwrap() {
            assert!(inc < 1e-11);
        }

        let zeros: Vec<Field> = times
            .iter()
            .map(|_| Field::zeros(g, Representation::Physical))
            .collect();
        for inc in scattering_diagnostic(&times, &zeros).unwrap() {
            assert_eq!(inc, 0.0);
        }
    }
}
