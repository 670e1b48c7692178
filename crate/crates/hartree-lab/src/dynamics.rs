//! Time evolution: the Hartree potential, Strang split-step integration of the
//! full flow, the perturbed high/low decomposition, and a numerical stability
//! probe.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation};
use crate::kernels;
use crate::spectral::{free_propagate, norm, Norm};
use num_complex::Complex64;

/// Sup-norm growth factor beyond which the integrator aborts. Both substeps
/// are unitary, so a large excursion signals numerical breakdown, not physics.
pub const BLOW_UP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    /// Minimal-image sampling of `|x|^{-gamma}` with the half-cell origin rule.
    SampledKernel,
    /// The continuum symbol `c(d,gamma) |xi|^{gamma-d}`; zero mode borrowed
    /// from the sampled kernel.
    ContinuumSymbol,
}

/// Frequency response of the convolution with `V(x) = |x|^{-gamma}`.
#[derive(Debug, Clone)]
pub struct HartreeKernel {
    grid: Grid,
    gamma: f64,
    mode: KernelMode,
    response: Vec<f64>,
}

impl HartreeKernel {
    pub fn new(grid: Grid, gamma: f64, mode: KernelMode) -> Result<Self> {
        if !(gamma > 0.0) || gamma >= grid.dim() as f64 {
            return Err(Error::KernelExponent {
                gamma,
                d: grid.dim(),
            });
        }
        let samples = kernels::sample_power_kernel(grid, gamma);
        let response = match mode {
            KernelMode::SampledKernel => kernels::real_response(grid, &samples),
            KernelMode::ContinuumSymbol => {
                let vol = grid.spacing().powi(grid.dim() as i32);
                let zero_mode: f64 = samples.iter().sum::<f64>() * vol;
                let c = kernels::riesz_constant(grid.dim(), gamma);
                let freqs = grid.freq_table();
                let mut resp = vec![0.0f64; grid.points()];
                grid.for_each_index(|flat, idx| {
                    if flat == 0 {
                        resp[0] = zero_mode;
                    } else {
                        let r2: f64 = idx.iter().map(|&k| freqs[k] * freqs[k]).sum();
                        resp[flat] = c * r2.sqrt().powf(gamma - grid.dim() as f64);
                    }
                });
                resp
            }
        };
        Ok(Self {
            grid,
            gamma,
            mode,
            response,
        })
    }

    pub fn sampled(grid: Grid, gamma: f64) -> Result<Self> {
        Self::new(grid, gamma, KernelMode::SampledKernel)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }
}

/// The Hartree potential `V * |u|^2` as a real-valued physical field.
pub fn hartree_potential(u: &Field, kernel: &HartreeKernel) -> Result<Field> {
    if u.grid() != kernel.grid {
        return Err(Error::GridMismatch);
    }
    let phys = u.to_physical();
    let density: Vec<Complex64> = phys
        .data()
        .iter()
        .map(|v| Complex64::new(v.norm_sqr(), 0.0))
        .collect();
    let mut pot = kernels::convolve(u.grid(), &density, &kernel.response);
    // the response is real and the density is real, so the imaginary part is
    // pure rounding noise
    let scale = pot.iter().map(|v| v.re.abs()).fold(0.0, f64::max).max(1e-300);
    debug_assert!(
        pot.iter().map(|v| v.im.abs()).fold(0.0, f64::max) <= 1e-12 * scale,
        "hartree potential picked up an imaginary part"
    );
    for v in &mut pot {
        v.im = 0.0;
    }
    Field::from_data(u.grid(), Representation::Physical, pot)
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub kernel: HartreeKernel,
    /// Defocusing sign; only +1 is supported.
    pub mu: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64, record_every: usize, kernel: HartreeKernel) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::TimeStep(dt));
        }
        if !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(Error::TimeStep(t_final));
        }
        Ok(Self {
            dt,
            t_final,
            record_every: record_every.max(1),
            kernel,
            mu: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::TimeStep(self.dt));
        }
        if self.mu != 1.0 {
            return Err(Error::FocusingSign(self.mu));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// One Strang step: half kinetic, exact nonlinear phase rotation, half
/// kinetic. `dt` may be negative, which runs the step backwards.
pub fn strang_step(u: &Field, dt: f64, kernel: &HartreeKernel) -> Result<Field> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::TimeStep(dt));
    }
    if u.grid() != kernel.grid {
        return Err(Error::GridMismatch);
    }
    let mut out = free_propagate(u, dt / 2.0);
    out.make_physical();
    nonlinear_kick(&mut out, dt, kernel)?;
    let mut out = free_propagate(&out, dt / 2.0);
    if u.rep() == Representation::Frequency {
        out.make_frequency();
    } else {
        out.make_physical();
    }
    Ok(out)
}

/// Multiply by `exp(-i dt (V * |u|^2))` in place; exact because `|u|` is
/// invariant under this substep.
fn nonlinear_kick(u: &mut Field, dt: f64, kernel: &HartreeKernel) -> Result<()> {
    debug_assert_eq!(u.rep(), Representation::Physical);
    let pot = hartree_potential(u, kernel)?;
    for (v, p) in u.data_mut().iter_mut().zip(pot.data()) {
        *v *= Complex64::from_polar(1.0, -dt * p.re);
    }
    Ok(())
}

/// Time-stamped output of `evolve`: cheap scalars every step, full fields at
/// the snapshot stride.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub step_times: Vec<f64>,
    pub step_mass: Vec<f64>,
}

struct Stepper<'a> {
    kernel: &'a HartreeKernel,
    phase_half: Vec<Complex64>,
    phase_full: Vec<Complex64>,
    initial_sup: f64,
}

impl<'a> Stepper<'a> {
    fn new(u0: &Field, dt: f64, kernel: &'a HartreeKernel) -> Self {
        let grid = u0.grid();
        let freq_sq: Vec<f64> = grid.freq_table().iter().map(|x| x * x).collect();
        let mut phase_half = vec![Complex64::ONE; grid.points()];
        let mut phase_full = vec![Complex64::ONE; grid.points()];
        grid.for_each_index(|flat, idx| {
            let k2: f64 = idx.iter().map(|&k| freq_sq[k]).sum();
            phase_half[flat] = Complex64::from_polar(1.0, -k2 * dt / 2.0);
            phase_full[flat] = Complex64::from_polar(1.0, -k2 * dt);
        });
        Self {
            kernel,
            phase_half,
            phase_full,
            initial_sup: u0.to_physical().sup().max(1e-300),
        }
    }

    fn apply_phase(u: &mut Field, phase: &[Complex64]) {
        u.make_frequency();
        for (v, p) in u.data_mut().iter_mut().zip(phase) {
            *v *= p;
        }
    }

    /// Advance `u` (physical rep) by `m` Strang steps with fused half-kicks.
    fn advance(&self, u: &mut Field, m: usize, dt: f64, t0: f64) -> Result<()> {
        if m == 0 {
            return Ok(());
        }
        Self::apply_phase(u, &self.phase_half);
        for step in 0..m {
            u.make_physical();
            nonlinear_kick(u, dt, self.kernel)?;
            let sup = u.sup();
            if !sup.is_finite() || sup > BLOW_UP_FACTOR * self.initial_sup {
                return Err(Error::BlowUp {
                    t: t0 + (step + 1) as f64 * dt,
                    sup,
                    initial: self.initial_sup,
                });
            }
            let phase = if step + 1 == m {
                &self.phase_half
            } else {
                &self.phase_full
            };
            Self::apply_phase(u, phase);
        }
        u.make_physical();
        Ok(())
    }
}

/// Integrate the full flow, recording snapshots every `record_every` steps
/// (and always at the final time).
pub fn evolve(u0: &Field, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if u0.grid() != cfg.kernel.grid {
        return Err(Error::GridMismatch);
    }
    let stepper = Stepper::new(u0, cfg.dt, &cfg.kernel);
    let steps = cfg.steps();
    let mut u = u0.to_physical();
    let mut traj = Trajectory {
        times: vec![0.0],
        fields: vec![u.clone()],
        step_times: vec![0.0],
        step_mass: vec![norm(&u, Norm::Lp(2.0))?.powi(2)],
    };
    let mut done = 0usize;
    while done < steps {
        let m = cfg.record_every.min(steps - done);
        stepper.advance(&mut u, m, cfg.dt, done as f64 * cfg.dt)?;
        done += m;
        let t = done as f64 * cfg.dt;
        traj.times.push(t);
        traj.fields.push(u.clone());
        traj.step_times.push(t);
        traj.step_mass.push(norm(&u, Norm::Lp(2.0))?.powi(2));
    }
    Ok(traj)
}

/// The pair (v, w) at one time, with `v` the free evolution of the rough
/// high-frequency data and `w = u - v`.
#[derive(Debug, Clone)]
pub struct PerturbedState {
    pub t: f64,
    pub v: Field,
    pub w: Field,
    pub n_zero: f64,
}

impl PerturbedState {
    /// The full solution u = v + w.
    pub fn full(&self) -> Result<Field> {
        self.v.add(&self.w)
    }
}

/// Snapshots of the perturbed decomposition along a trajectory. `v` is exactly
/// linear, so only `v0` is stored; `w` and the forcing term `e` are recorded
/// per snapshot.
#[derive(Debug, Clone)]
pub struct PerturbedTrajectory {
    pub n_zero: f64,
    pub v0: Field,
    pub times: Vec<f64>,
    pub w: Vec<Field>,
    pub e: Vec<Field>,
}

impl PerturbedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Reconstruct the state at snapshot `i` (v is recomputed exactly from v0).
    pub fn state(&self, i: usize) -> PerturbedState {
        let mut v = free_propagate(&self.v0, self.times[i]);
        v.make_physical();
        PerturbedState {
            t: self.times[i],
            v,
            w: self.w[i].clone(),
            n_zero: self.n_zero,
        }
    }
}

/// Evolve `u0` under the full flow while maintaining the exact free evolution
/// of its high-frequency part above `n_zero`; record `w = u - v` and
/// `e = F(u) - F(w)` at the snapshot stride.
pub fn evolve_perturbed(
    u0: &Field,
    n_zero: f64,
    cfg: &SolverConfig,
) -> Result<PerturbedTrajectory> {
    cfg.validate()?;
    if u0.grid() != cfg.kernel.grid {
        return Err(Error::GridMismatch);
    }
    let (v0, _w0) = crate::randomization::split_high_low(u0, n_zero)?;
    let stepper = Stepper::new(u0, cfg.dt, &cfg.kernel);
    let steps = cfg.steps();
    let mut u = u0.to_physical();
    let mut traj = PerturbedTrajectory {
        n_zero,
        v0: v0.to_frequency(),
        times: Vec::new(),
        w: Vec::new(),
        e: Vec::new(),
    };
    record_perturbed(&mut traj, &u, 0.0, &cfg.kernel)?;
    let mut done = 0usize;
    while done < steps {
        let m = cfg.record_every.min(steps - done);
        stepper.advance(&mut u, m, cfg.dt, done as f64 * cfg.dt)?;
        done += m;
        record_perturbed(&mut traj, &u, done as f64 * cfg.dt, &cfg.kernel)?;
    }
    Ok(traj)
}

fn record_perturbed(
    traj: &mut PerturbedTrajectory,
    u: &Field,
    t: f64,
    kernel: &HartreeKernel,
) -> Result<()> {
    let mut v = free_propagate(&traj.v0, t);
    v.make_physical();
    let w = u.sub(&v)?;
    let e = forcing_term(u, &w, kernel)?;
    traj.times.push(t);
    traj.w.push(w);
    traj.e.push(e);
    Ok(())
}

/// `e = F(u) - F(w)` with `F(u) = (V * |u|^2) u`.
pub fn forcing_term(u: &Field, w: &Field, kernel: &HartreeKernel) -> Result<Field> {
    let fu = nonlinearity(u, kernel)?;
    let fw = nonlinearity(w, kernel)?;
    fu.sub(&fw)
}

/// The Hartree nonlinearity `F(u) = (V * |u|^2) u`.
pub fn nonlinearity(u: &Field, kernel: &HartreeKernel) -> Result<Field> {
    let pot = hartree_potential(u, kernel)?;
    let phys = u.to_physical();
    let data = phys
        .data()
        .iter()
        .zip(pot.data())
        .map(|(&a, &p)| a * p.re)
        .collect();
    Field::from_data(u.grid(), Representation::Physical, data)
}

/// Evolve `w` under the perturbed flow (with the given free part `v0`) and
/// `w~` under the unforced flow; return the `H^1` deviation per snapshot.
pub fn stability_probe(
    w0: &Field,
    w0_tilde: &Field,
    v0: &Field,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let u0 = v0.add(w0)?;
    let stepper = Stepper::new(&u0, cfg.dt, &cfg.kernel);
    let stepper_tilde = Stepper::new(w0_tilde, cfg.dt, &cfg.kernel);
    let steps = cfg.steps();
    let mut u = u0.to_physical();
    let mut wt = w0_tilde.to_physical();
    let v0_hat = v0.to_frequency();
    let mut out = Vec::new();
    let mut record = |u: &Field, wt: &Field, t: f64| -> Result<()> {
        let mut v = free_propagate(&v0_hat, t);
        v.make_physical();
        let w = u.sub(&v)?;
        let dev = norm(&w.sub(wt)?, Norm::Hs(1.0))?;
        out.push((t, dev));
        Ok(())
    };
    record(&u, &wt, 0.0)?;
    let mut done = 0usize;
    while done < steps {
        let m = cfg.record_every.min(steps - done);
        let t0 = done as f64 * cfg.dt;
        stepper.advance(&mut u, m, cfg.dt, t0)?;
        stepper_tilde.advance(&mut wt, m, cfg.dt, t0)?;
        done += m;
        record(&u, &wt, done as f64 * cfg.dt)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn gaussian(grid: Grid, amp: f64, width: f64) -> Field {
        Field::from_physical_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(amp * (-r2 / (2.0 * width * width)).exp(), 0.0)
        })
    }

    #[test]
    fn potential_of_zero_is_zero() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let k = HartreeKernel::sampled(g, 0.5).unwrap();
        let z = Field::zeros(g, Representation::Physical);
        let pot = hartree_potential(&z, &k).unwrap();
        assert!(pot.sup() == 0.0);
    }

    #[test]
    fn potential_matches_direct_double_sum() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let k = HartreeKernel::sampled(g, 0.5).unwrap();
        let u = gaussian(g, 1.0, 1.0);
        let pot = hartree_potential(&u, &k).unwrap();
        let density: Vec<Complex64> = u
            .data()
            .iter()
            .map(|v| Complex64::new(v.norm_sqr(), 0.0))
            .collect();
        let samples = kernels::sample_power_kernel(g, 0.5);
        let direct = kernels::convolve_direct(g, &density, &samples);
        assert!(kernels::max_rel_error(pot.data(), &direct) < 1e-8);
    }

    #[test]
    fn potential_is_translation_equivariant() {
        let g = Grid::new(1, 32, 10.0).unwrap();
        let k = HartreeKernel::sampled(g, 0.5).unwrap();
        let u = gaussian(g, 1.0, 1.2);
        let shift = 5usize;
        let n = g.points_per_axis();
        let mut shifted = u.clone();
        for i in 0..n {
            shifted.data_mut()[(i + shift) % n] = u.data()[i];
        }
        let pot_shifted = hartree_potential(&shifted, &k).unwrap();
        let pot = hartree_potential(&u, &k).unwrap();
        for i in 0..n {
            let a = pot_shifted.data()[(i + shift) % n];
            let b = pot.data()[i];
            assert!((a - b).norm() < 1e-12 * pot.sup().max(1.0));
        }
    }

    #[test]
    fn strang_step_basics() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        let k = HartreeKernel::sampled(g, 1.0).unwrap();
        let z = Field::zeros(g, Representation::Physical);
        let out = strang_step(&z, 1e-2, &k).unwrap();
        assert!(out.sup() == 0.0);

        let u = gaussian(g, 1.0, 1.0);
        let out = strang_step(&u, 1e-2, &k).unwrap();
        let m0 = norm(&u, Norm::Lp(2.0)).unwrap();
        let m1 = norm(&out, Norm::Lp(2.0)).unwrap();
        assert!((m1 - m0).abs() < 1e-13 * m0);
    }

    #[test]
    fn strang_step_is_second_order() {
        let g = Grid::new(1, 64, 16.0).unwrap();
        let k = HartreeKernel::sampled(g, 0.5).unwrap();
        let u = gaussian(g, 1.5, 1.0);
        // Richardson triple: errors against a dt/8 reference at fixed T
        let t_final = 0.2;
        let run = |dt: f64| -> Field {
            let cfg = SolverConfig::new(dt, t_final, usize::MAX, k.clone()).unwrap();
            evolve(&u, &cfg).unwrap().fields.pop().unwrap()
        };
        let reference = run(0.0025);
        let err = |f: &Field| {
            norm(&f.sub(&reference).unwrap(), Norm::Lp(2.0)).unwrap()
        };
        let e1 = err(&run(0.02));
        let e2 = err(&run(0.01));
        let ratio = e1 / e2;
        assert!(
            ratio > 3.4 && ratio < 4.6,
            "self-convergence ratio {ratio} not second order"
        );
    }

    #[test]
    fn evolve_records_and_conserves_mass() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        let k = HartreeKernel::sampled(g, 1.0).unwrap();
        let u = gaussian(g, 1.0, 1.0);
        let cfg = SolverConfig::new(1e-2, 0.0, 1, k.clone()).unwrap();
        let traj = evolve(&u, &cfg).unwrap();
        assert_eq!(traj.times.len(), 1);

        let cfg = SolverConfig::new(1e-2, 0.5, 10, k).unwrap();
        let traj = evolve(&u, &cfg).unwrap();
        let m0 = traj.step_mass[0];
        for &m in &traj.step_mass {
            assert!((m - m0).abs() < 1e-11 * m0);
        }
        assert_eq!(traj.times.len(), 6);
    }

    #[test]
    fn time_reversibility_and_gauge_covariance() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        let k = HartreeKernel::sampled(g, 1.0).unwrap();
        let u = gaussian(g, 1.0, 1.1);
        let dt = 5e-3;
        let fwd = strang_step(&u, dt, &k).unwrap();
        let back = strang_step(&fwd, -dt, &k).unwrap();
        assert!(kernels::max_rel_error(back.data(), u.data()) < 1e-11);

        let phase = Complex64::from_polar(1.0, 0.83);
        let a = strang_step(&u.scaled(phase), dt, &k).unwrap();
        let b = strang_step(&u, dt, &k).unwrap().scaled(phase);
        assert!(kernels::max_rel_error(a.data(), b.data()) < 1e-12);
    }

    #[test]
    fn perturbed_decomposition_contracts() {
        let g = Grid::new(2, 32, 12.0).unwrap();
        let k = HartreeKernel::sampled(g, 1.0).unwrap();
        // band-limited below N0/2 -> v identically zero, e identically zero
        let low = crate::spectral::lp_project(&gaussian(g, 0.8, 2.5), Band::LowPass, 1.0).unwrap();
        let cfg = SolverConfig::new(1e-2, 0.1, 5, k.clone()).unwrap();
        let traj = evolve_perturbed(&low, 4.0, &cfg).unwrap();
        assert!(traj.v0.sup() < 1e-13);
        for e in &traj.e {
            assert!(e.sup() < 1e-10);
        }

        // w0 = 0: e(0) = F(v0) exactly
        let wave = Field::from_physical_fn(g, |x| {
            Complex64::from_polar(0.5, 5.0 * g_freq(&g) * x[0])
        });
        let traj = evolve_perturbed(&wave, 2.0, &cfg).unwrap();
        let e0 = &traj.e[0];
        let fv = nonlinearity(&traj.state(0).v, &k).unwrap();
        assert!(kernels::max_rel_error(e0.data(), fv.data()) < 1e-10);
    }

    fn g_freq(g: &Grid) -> f64 {
        g.freq_step()
    }

    use crate::spectral::Band;

    #[test]
    fn perturbed_two_path_consistency() {
        let g = Grid::new(2, 32, 12.0).unwrap();
        let k = HartreeKernel::sampled(g, 1.0).unwrap();
        let u0 = Field::from_physical_fn(g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(0.9 * (-r2 / 3.0).exp(), 0.0)
                + Complex64::from_polar(0.2 * (-r2 / 2.0).exp(), 3.5 * x[0])
        });
        let cfg = SolverConfig::new(5e-3, 0.5, 20, k).unwrap();
        let pert = evolve_perturbed(&u0, 2.0, &cfg).unwrap();
        let direct = evolve(&u0, &cfg).unwrap();
        for (i, t) in pert.times.iter().enumerate() {
            let state = pert.state(i);
            let u = state.full().unwrap();
            let diff = norm(&u.sub(&direct.fields[i]).unwrap(), Norm::Lp(2.0)).unwrap();
            assert!(diff < 1e-8, "t={t}: two-path deviation {diff}");
            // v stays exactly linear
            let v_back = free_propagate(&state.v, -t);
            assert!(
                kernels::max_rel_error(v_back.to_frequency().data(), pert.v0.data()) < 1e-10
            );
        }
    }

    #[test]
    fn stability_probe_degenerate_cases() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        let k = HartreeKernel::sampled(g, 1.0).unwrap();
        let w0 = gaussian(g, 0.7, 1.3);
        let zero = Field::zeros(g, Representation::Physical);
        let cfg = SolverConfig::new(5e-3, 0.1, 5, k).unwrap();

        let dev = stability_probe(&w0, &w0, &zero, &cfg).unwrap();
        for &(_, d) in &dev {
            assert!(d < 1e-12);
        }

        let eps = 1e-3;
        let w0b = w0.add(&gaussian(g, eps, 1.0)).unwrap();
        let dev = stability_probe(&w0, &w0b, &zero, &cfg).unwrap();
        let expected = norm(&w0.sub(&w0b).unwrap(), Norm::Hs(1.0)).unwrap();
        assert!((dev[0].1 - expected).abs() < 1e-12 * expected);
    }
}
