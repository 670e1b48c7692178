//! Experiment orchestration: configuration ingestion, seed management,
//! ensemble execution, tail statistics, threshold-event counting, and
//! persistence. Everything a run writes is a pure function of the config and
//! the master seed; outputs land in temp files renamed on completion.

use crate::dynamics::{
    evolve_perturbed, HartreeKernel, KernelMode, PerturbedTrajectory, SolverConfig,
};
use crate::error::{Error, Result};
use crate::functionals::{
    almost_conservation_bounds, energy, mass, morawetz_series, scattering_diagnostic,
    spacetime_norm, MorawetzBreakdown, MorawetzKernels, SpaceTimeNormSpec,
};
use crate::grid::{Field, Grid};
use crate::inequality::{self, CheckName, CheckReport, EnsembleSpec, FieldClass};
use crate::randomization::{
    build_cube_system, randomize, sample_coefficients, split_high_low, RandomizationParams,
};
use crate::rng::{derive_seed, SplitMix64};
use crate::spectral::{free_propagate, norm, normalized_hs, Norm};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Single,
    Ensemble,
    NzeroSweep,
    TailStudy,
    InequalitySuite,
    MorawetzAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelModeConfig {
    #[default]
    SampledKernel,
    ContinuumSymbol,
}

impl From<KernelModeConfig> for KernelMode {
    fn from(m: KernelModeConfig) -> Self {
        match m {
            KernelModeConfig::SampledKernel => KernelMode::SampledKernel,
            KernelModeConfig::ContinuumSymbol => KernelMode::ContinuumSymbol,
        }
    }
}

/// One Gaussian bump of the initial-data recipe, optionally projected onto a
/// sharp frequency shell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default)]
    pub modulation: Vec<f64>,
    /// Keep only frequencies with `lo <= |xi| <= hi`.
    #[serde(default)]
    pub shell: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub bumps: Vec<GaussianBump>,
    /// Rescale the assembled profile to this `H^s` norm.
    #[serde(default)]
    pub hs_target: Option<f64>,
}

impl InitialData {
    pub fn build(&self, grid: Grid, s: f64) -> Result<Field> {
        let mut total = Field::zeros(grid, crate::grid::Representation::Physical);
        for bump in &self.bumps {
            let d = grid.dim();
            let mut center = [0.0f64; 5];
            let mut modulation = [0.0f64; 5];
            for a in 0..d {
                center[a] = bump.center.get(a).copied().unwrap_or(0.0);
                modulation[a] = bump.modulation.get(a).copied().unwrap_or(0.0);
            }
            let width = bump.width;
            if !(width > 0.0) {
                return Err(Error::Config(format!("bump width must be positive, got {width}")));
            }
            let amp = bump.amplitude;
            let mut field = Field::from_physical_fn(grid, |x| {
                let r2: f64 = x
                    .iter()
                    .zip(&center[..d])
                    .map(|(&xv, &c)| (xv - c) * (xv - c))
                    .sum();
                let phase: f64 = x
                    .iter()
                    .zip(&modulation[..d])
                    .map(|(&xv, &m)| xv * m)
                    .sum();
                Complex64::from_polar(amp * (-r2 / (2.0 * width * width)).exp(), phase)
            });
            if let Some([lo, hi]) = bump.shell {
                let freqs = grid.freq_table();
                field.make_frequency();
                let data = field.data_mut();
                grid.for_each_index(|flat, idx| {
                    let r: f64 = idx
                        .iter()
                        .map(|&k| freqs[k] * freqs[k])
                        .sum::<f64>()
                        .sqrt();
                    if r < lo || r > hi {
                        data[flat] = Complex64::ZERO;
                    }
                });
                field.make_physical();
            }
            total = total.add(&field)?;
        }
        if let Some(target) = self.hs_target {
            total = normalized_hs(&total, s, target);
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_length: f64,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub gamma: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub s: f64,
    pub a: u32,
    pub n_zero: f64,
    pub initial_data: InitialData,
    pub master_seed: u64,
    pub ensemble_size: usize,
    #[serde(default)]
    pub n_zero_ladder: Vec<f64>,
    #[serde(default)]
    pub m_levels: Vec<f64>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub kernel_mode: KernelModeConfig,
    /// Fill the interaction-action derivative columns of the diagnostics CSV
    /// (costly at d = 5; the audit always does).
    #[serde(default)]
    pub morawetz_columns: bool,
    #[serde(default)]
    pub store_snapshots: bool,
    pub output_dir: PathBuf,
}

fn default_mu() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.points_per_axis, self.box_length)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if self.mu != 1.0 {
            return Err(Error::FocusingSign(self.mu));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::TimeStep(self.dt));
        }
        if self.ensemble_size < 1 {
            return Err(Error::Config("ensemble_size must be >= 1".into()));
        }
        if !(self.gamma > 0.0) || self.gamma >= self.dim as f64 {
            return Err(Error::KernelExponent {
                gamma: self.gamma,
                d: self.dim,
            });
        }
        if !crate::spectral::is_dyadic(self.n_zero) {
            return Err(Error::NotDyadic("n_zero", self.n_zero));
        }
        RandomizationParams::new(self.s, self.a, grid)?;
        if self.kind == ExperimentKind::NzeroSweep {
            if self.n_zero_ladder.is_empty() {
                return Err(Error::Config("nzero-sweep needs a non-empty n_zero_ladder".into()));
            }
            for &n0 in &self.n_zero_ladder {
                if !crate::spectral::is_dyadic(n0) {
                    return Err(Error::NotDyadic("n_zero_ladder entry", n0));
                }
            }
        }
        if self.kind == ExperimentKind::MorawetzAudit && self.dim < 4 {
            return Err(Error::MorawetzDimension(self.dim));
        }
        if self.initial_data.bumps.is_empty() {
            return Err(Error::Config("initial_data needs at least one bump".into()));
        }
        Ok(())
    }

    fn solver(&self, grid: Grid) -> Result<SolverConfig> {
        let kernel = HartreeKernel::new(grid, self.gamma, self.kernel_mode.into())?;
        SolverConfig::new(self.dt, self.t_final, self.record_every, kernel)
    }
}

/// Per-sample scalar record with everything the threshold events need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleStats {
    pub index: usize,
    pub seed: u64,
    pub hs_norm: f64,
    pub l2_norm: f64,
    pub l10_norm: f64,
    pub w0_l2: f64,
    pub w0_h1dot: f64,
    pub y_norm_v: f64,
    pub m_w_initial: f64,
    pub e_w_initial: f64,
    pub m_w_max_drift: f64,
    pub e_w_max_drift: f64,
    /// max over interior snapshots of |d/dt M_w| / (2 |int e conj w|)
    pub mass_bound_ratio_max: f64,
    pub diagnostics_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaCount {
    pub level: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub config: ExperimentConfig,
    pub base_hs_norm: f64,
    pub samples: Vec<SampleStats>,
    pub omega_counts: Vec<OmegaCount>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepLevel {
    pub n_zero: f64,
    pub mean_m_w_drift: f64,
    pub mean_e_w_drift: f64,
    pub max_mass_bound_ratio: f64,
    pub samples: Vec<SampleStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: ExperimentConfig,
    pub levels: Vec<SweepLevel>,
    /// Drift ordering across the ladder with a 10% noise allowance.
    pub m_w_drift_nonincreasing: bool,
    pub e_w_drift_nonincreasing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub lambdas: Vec<f64>,
    pub survival: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailSummary {
    pub config: ExperimentConfig,
    pub y_samples_min: f64,
    pub y_samples_median: f64,
    pub y_samples_max: f64,
    pub y_tail: TailReport,
    pub rayleigh_calibration: TailReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditSummary {
    pub config: ExperimentConfig,
    pub times: Vec<f64>,
    /// |fd dM/dt - sum of terms| / max |term| at interior snapshots.
    pub identity_errors: Vec<f64>,
    pub max_identity_error: f64,
    pub defocusing_sign_ok: bool,
    pub momentum_gradient_sign_ok: bool,
    /// sup over the v = 0 control run of the forcing term magnitudes.
    pub vzero_forcing_sup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub config: ExperimentConfig,
    pub checks: Vec<serde_json::Value>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind_summary", rename_all = "kebab-case")]
pub enum RunSummary {
    Ensemble(EnsembleSummary),
    Sweep(SweepSummary),
    Tails(TailSummary),
    Audit(AuditSummary),
    Suite(SuiteSummary),
}

/// Execute the configured experiment, writing all outputs under
/// `config.output_dir` and returning the summary that was persisted.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let summary = match cfg.kind {
        ExperimentKind::Single | ExperimentKind::Ensemble => {
            RunSummary::Ensemble(run_ensemble(cfg)?)
        }
        ExperimentKind::NzeroSweep => RunSummary::Sweep(run_sweep(cfg)?),
        ExperimentKind::TailStudy => RunSummary::Tails(run_tails(cfg)?),
        ExperimentKind::InequalitySuite => RunSummary::Suite(run_suite(cfg)?),
        ExperimentKind::MorawetzAudit => RunSummary::Audit(run_audit(cfg)?),
    };
    write_atomic(
        &cfg.output_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(summary)
}

fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleSummary> {
    let grid = cfg.grid()?;
    let solver = cfg.solver(grid)?;
    let params = RandomizationParams::new(cfg.s, cfg.a, grid)?;
    let cube_system = build_cube_system(grid, params)?;
    write_atomic(
        &cfg.output_dir.join("cube_system.json"),
        serde_json::to_string_pretty(&cube_system.summary())?.as_bytes(),
    )?;
    let base = cfg.initial_data.build(grid, cfg.s)?;
    let base_hs = norm(&base, Norm::Hs(cfg.s))?;
    let count = if cfg.kind == ExperimentKind::Single {
        1
    } else {
        cfg.ensemble_size
    };
    let mut samples = Vec::with_capacity(count);
    for index in 0..count {
        let sample = run_one_sample(cfg, &solver, &cube_system, &base, index)?;
        samples.push(sample);
    }
    let omega_counts = if cfg.m_levels.is_empty() {
        Vec::new()
    } else {
        let inputs: Vec<OmegaInputs> = samples.iter().map(OmegaInputs::from).collect();
        omega_event_count(&inputs, cfg.s, cfg.n_zero, base_hs, &cfg.m_levels)?
    };
    Ok(EnsembleSummary {
        config: cfg.clone(),
        base_hs_norm: base_hs,
        samples,
        omega_counts,
    })
}

fn run_one_sample(
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    cube_system: &crate::randomization::CubeSystem,
    base: &Field,
    index: usize,
) -> Result<SampleStats> {
    let seed = derive_seed(cfg.master_seed, index as u64);
    let coeffs = sample_coefficients(seed, cube_system.cube_count());
    let randomized = randomize(base, cube_system, &coeffs)?;
    let hs_norm = norm(&randomized, Norm::Hs(cfg.s))?;
    let l2_norm = norm(&randomized, Norm::Lp(2.0))?;
    let l10_norm = norm(&randomized, Norm::Lp(10.0))?;
    let (v0, w0) = split_high_low(&randomized, cfg.n_zero)?;
    let w0_l2 = norm(&w0, Norm::Lp(2.0))?;
    let w0_h1dot = norm(&w0, Norm::HsDot(1.0))?;

    let traj = evolve_perturbed(&randomized, cfg.n_zero, solver)
        .map_err(|e| Error::Config(format!("sample {index}: {e}")))?;
    let drift = almost_conservation_bounds(&traj, &solver.kernel)?;

    let v_fields: Vec<Field> = traj
        .times
        .iter()
        .map(|&t| free_propagate(&traj.v0, t))
        .collect();
    let y_norm_v = if traj.times.len() >= 2 {
        spacetime_norm(&traj.times, &v_fields, &SpaceTimeNormSpec::y_norm(cfg.s, cfg.a))?
    } else {
        let _ = &v0;
        0.0
    };

    let rows = diagnostics_rows(cfg, solver, &traj, &drift)?;
    let file = format!("sample_{index:03}.csv");
    write_atomic(&cfg.output_dir.join(&file), rows.as_bytes())?;
    if cfg.store_snapshots {
        for (i, w) in traj.w.iter().enumerate() {
            let path = cfg.output_dir.join(format!("sample_{index:03}_w_{i:03}.hrt5"));
            crate::snapshot::store_field(&path, w, traj.times[i])?;
        }
    }

    let m0 = drift.mass[0];
    let e0 = drift.energy[0];
    let m_w_max_drift = drift
        .mass
        .iter()
        .map(|m| (m - m0).abs())
        .fold(0.0f64, f64::max);
    let e_w_max_drift = drift
        .energy
        .iter()
        .map(|e| (e - e0).abs())
        .fold(0.0f64, f64::max);
    let ratios = drift.mass_ratio();
    let interior = if ratios.len() > 2 {
        &ratios[1..ratios.len() - 1]
    } else {
        &ratios[..]
    };
    let mass_bound_ratio_max = interior.iter().cloned().fold(0.0f64, f64::max);

    Ok(SampleStats {
        index,
        seed,
        hs_norm,
        l2_norm,
        l10_norm,
        w0_l2,
        w0_h1dot,
        y_norm_v,
        m_w_initial: m0,
        e_w_initial: e0,
        m_w_max_drift,
        e_w_max_drift,
        mass_bound_ratio_max,
        diagnostics_file: file,
    })
}

pub const DIAGNOSTICS_HEADER: &str = "t,mass,kinetic,potential,e_w,m_w,morawetz_action,momentum_flux,mass_interaction,gradient_interaction,defocusing_potential,forcing_mass_flux,forcing_gradient,forcing_mass,mass_drift_integrand,energy_drift_integrand,scattering_increment";

fn diagnostics_rows(
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    traj: &PerturbedTrajectory,
    drift: &crate::functionals::ConservationDrift,
) -> Result<String> {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    let fill_terms = cfg.morawetz_columns && cfg.dim >= 4;
    let mk = MorawetzKernels::new(traj.v0.grid());
    let u_fields: Vec<Field> = (0..traj.len())
        .map(|i| traj.state(i).full())
        .collect::<Result<_>>()?;
    let increments = if traj.len() >= 2 {
        scattering_diagnostic(&traj.times, &u_fields)?
    } else {
        Vec::new()
    };
    for i in 0..traj.len() {
        let u = &u_fields[i];
        let parts = energy(u, &solver.kernel)?;
        let action = mk.action(&traj.w[i])?;
        let terms: Option<MorawetzBreakdown> = if fill_terms {
            Some(mk.breakdown(&traj.w[i], Some(&traj.e[i]), &solver.kernel)?)
        } else {
            None
        };
        let cols = [
            Some(traj.times[i]),
            Some(mass(u)),
            Some(parts.kinetic),
            Some(parts.potential),
            Some(drift.energy[i]),
            Some(drift.mass[i]),
            Some(action),
            terms.map(|t| t.momentum_flux),
            terms.map(|t| t.mass_interaction),
            terms.map(|t| t.gradient_interaction),
            terms.map(|t| t.defocusing_potential),
            terms.map(|t| t.forcing_mass_flux),
            terms.map(|t| t.forcing_gradient),
            terms.map(|t| t.forcing_mass),
            Some(drift.mass_integrand[i]),
            Some(drift.energy_integrand[i]),
            if i > 0 { Some(increments[i - 1]) } else { None },
        ];
        let line: Vec<String> = cols
            .iter()
            .map(|c| c.map(|v| format!("{v}")).unwrap_or_default())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepSummary> {
    let grid = cfg.grid()?;
    let solver = cfg.solver(grid)?;
    let params = RandomizationParams::new(cfg.s, cfg.a, grid)?;
    let cube_system = build_cube_system(grid, params)?;
    let base = cfg.initial_data.build(grid, cfg.s)?;
    let mut levels = Vec::with_capacity(cfg.n_zero_ladder.len());
    for &n_zero in &cfg.n_zero_ladder {
        let mut level_cfg = cfg.clone();
        level_cfg.n_zero = n_zero;
        level_cfg.output_dir = cfg.output_dir.join(format!("n_zero_{n_zero}"));
        std::fs::create_dir_all(&level_cfg.output_dir)?;
        let mut samples = Vec::with_capacity(cfg.ensemble_size);
        for index in 0..cfg.ensemble_size {
            samples.push(run_one_sample(&level_cfg, &solver, &cube_system, &base, index)?);
        }
        let mean_m = samples.iter().map(|s| s.m_w_max_drift).sum::<f64>() / samples.len() as f64;
        let mean_e = samples.iter().map(|s| s.e_w_max_drift).sum::<f64>() / samples.len() as f64;
        let max_ratio = samples
            .iter()
            .map(|s| s.mass_bound_ratio_max)
            .fold(0.0f64, f64::max);
        levels.push(SweepLevel {
            n_zero,
            mean_m_w_drift: mean_m,
            mean_e_w_drift: mean_e,
            max_mass_bound_ratio: max_ratio,
            samples,
        });
    }
    let nonincreasing = |xs: &[f64]| xs.windows(2).all(|w| w[1] <= w[0] * 1.10);
    let m_drifts: Vec<f64> = levels.iter().map(|l| l.mean_m_w_drift).collect();
    let e_drifts: Vec<f64> = levels.iter().map(|l| l.mean_e_w_drift).collect();
    Ok(SweepSummary {
        config: cfg.clone(),
        m_w_drift_nonincreasing: nonincreasing(&m_drifts),
        e_w_drift_nonincreasing: nonincreasing(&e_drifts),
        levels,
    })
}

fn run_tails(cfg: &ExperimentConfig) -> Result<TailSummary> {
    let grid = cfg.grid()?;
    let params = RandomizationParams::new(cfg.s, cfg.a, grid)?;
    let cube_system = build_cube_system(grid, params)?;
    let base = cfg.initial_data.build(grid, cfg.s)?;
    let times: Vec<f64> = {
        let steps = (cfg.t_final / cfg.dt).round() as usize;
        let stride = cfg.record_every.max(1);
        let mut ts: Vec<f64> = (0..=steps)
            .step_by(stride)
            .map(|i| i as f64 * cfg.dt)
            .collect();
        if *ts.last().unwrap() < cfg.t_final {
            ts.push(cfg.t_final);
        }
        ts
    };
    let spec = SpaceTimeNormSpec::y_norm(cfg.s, cfg.a);
    let y_samples: Vec<f64> = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|index| -> Result<f64> {
            let seed = derive_seed(cfg.master_seed, index as u64);
            let coeffs = sample_coefficients(seed, cube_system.cube_count());
            let randomized = randomize(&base, &cube_system, &coeffs)?;
            let hat = randomized.to_frequency();
            let fields: Vec<Field> = times.iter().map(|&t| free_propagate(&hat, t)).collect();
            spacetime_norm(&times, &fields, &spec)
        })
        .collect::<Result<Vec<f64>>>()?;

    let y_tail = tail_statistics(&y_samples, &cfg.lambda_grid)?;

    // Rayleigh calibration source: |g| for standard complex Gaussians has
    // survival exactly exp(-lambda^2), so the fitted slope must be -1.
    let calibration: Vec<f64> = (0..cfg.ensemble_size.max(500))
        .map(|i| {
            SplitMix64::new(derive_seed(cfg.master_seed ^ 0x52_41_59, i as u64))
                .next_complex_gaussian()
                .norm()
        })
        .collect();
    let rayleigh_calibration = tail_statistics(&calibration, &[])?;

    let mut sorted = y_samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(TailSummary {
        config: cfg.clone(),
        y_samples_min: sorted[0],
        y_samples_median: sorted[sorted.len() / 2],
        y_samples_max: sorted[sorted.len() - 1],
        y_tail,
        rayleigh_calibration,
    })
}

fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteSummary> {
    let reports = default_inequality_suite(cfg.master_seed)?;
    let all_pass = reports.iter().all(|r| r.pass);
    write_atomic(
        &cfg.output_dir.join("inequality_reports.json"),
        serde_json::to_string_pretty(&reports)?.as_bytes(),
    )?;
    write_atomic(
        &cfg.output_dir.join("inequality_summary.csv"),
        inequality::summary_csv(&reports).as_bytes(),
    )?;
    let checks = reports
        .iter()
        .map(|r| serde_json::to_value(r).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteSummary {
        config: cfg.clone(),
        checks,
        all_pass,
    })
}

/// The default battery: refinement pairs on d <= 3 grids, single-grid
/// evaluations at d = 5.
pub fn default_inequality_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let band3 = EnsembleSpec {
        dim: 3,
        points_per_axis: 16,
        box_length: 10.0,
        class: FieldClass::BandLimited { cutoff: 3.0 },
        count: 100,
        seed,
    };
    let band2 = EnsembleSpec {
        dim: 2,
        points_per_axis: 32,
        box_length: 10.0,
        class: FieldClass::BandLimited { cutoff: 4.0 },
        count: 100,
        seed,
    };
    let band1 = EnsembleSpec {
        dim: 1,
        points_per_axis: 64,
        box_length: 2.0 * std::f64::consts::PI,
        class: FieldClass::BandLimited { cutoff: 8.0 },
        count: 100,
        seed,
    };
    let bump5 = EnsembleSpec {
        dim: 5,
        points_per_axis: 12,
        box_length: 12.0,
        class: FieldClass::LocalizedBump {
            width_min: 1.0,
            width_max: 1.6,
        },
        count: 20,
        seed,
    };
    let band5 = EnsembleSpec {
        dim: 5,
        points_per_axis: 12,
        box_length: 10.0,
        class: FieldClass::BandLimited { cutoff: 2.5 },
        count: 30,
        seed,
    };
    Ok(vec![
        inequality::run_check(CheckName::Bernstein, &band3)?,
        inequality::run_check(CheckName::BoxOrthogonality, &band2)?,
        inequality::run_check(CheckName::BoxLqLp, &band1)?,
        inequality::run_check(CheckName::LiebLoss, &bump5)?,
        inequality::run_check(CheckName::Visan, &band2)?,
        inequality::run_check(CheckName::Visan, &band5)?,
        inequality::run_check(CheckName::GagliardoNirenberg, &band3)?,
        inequality::run_check(CheckName::Hardy, &band3)?,
        inequality::run_check(CheckName::Hardy, &band5)?,
        inequality::run_check(CheckName::HlsConvolution, &band3)?,
        inequality::run_check(CheckName::HlsConvolution, &band5)?,
    ])
}

fn run_audit(cfg: &ExperimentConfig) -> Result<AuditSummary> {
    let grid = cfg.grid()?;
    let solver = cfg.solver(grid)?;
    let u0 = cfg.initial_data.build(grid, cfg.s)?;
    let traj = evolve_perturbed(&u0, cfg.n_zero, &solver)?;
    let mk = MorawetzKernels::new(grid);
    let series = morawetz_series(&traj, &solver.kernel, &mk)?;

    let mut identity_errors = Vec::new();
    let mut defocusing_ok = true;
    let mut momentum_gradient_ok = true;
    for (i, row) in series.rows.iter().enumerate() {
        let scale = row.max_abs_term().max(1e-300);
        if row.defocusing_potential < -1e-10 * scale {
            defocusing_ok = false;
        }
        if row.momentum_flux + row.gradient_interaction < -1e-10 * scale {
            momentum_gradient_ok = false;
        }
        if i > 0 && i + 1 < series.rows.len() {
            identity_errors.push((series.action_rate_fd[i] - row.term_sum()).abs() / scale);
        }
    }
    let max_identity_error = identity_errors.iter().cloned().fold(0.0f64, f64::max);

    // control run with the high-frequency part removed: v = 0 exactly, so the
    // forcing term and all three forcing columns must vanish identically
    let (_, low) = split_high_low(&u0, cfg.n_zero)?;
    let control = evolve_perturbed(&low, cfg.n_zero, &solver)?;
    let mut vzero_forcing_sup = control.v0.sup();
    for (i, e) in control.e.iter().enumerate() {
        vzero_forcing_sup = vzero_forcing_sup.max(e.sup());
        let row = mk.breakdown(&control.w[i], Some(e), &solver.kernel)?;
        vzero_forcing_sup = vzero_forcing_sup
            .max(row.forcing_mass_flux.abs())
            .max(row.forcing_gradient.abs())
            .max(row.forcing_mass.abs());
    }

    let drift = almost_conservation_bounds(&traj, &solver.kernel)?;
    let mut audit_cfg = cfg.clone();
    audit_cfg.morawetz_columns = true;
    let rows = diagnostics_rows(&audit_cfg, &solver, &traj, &drift)?;
    write_atomic(&cfg.output_dir.join("audit_diagnostics.csv"), rows.as_bytes())?;

    Ok(AuditSummary {
        config: cfg.clone(),
        times: series.times.clone(),
        identity_errors,
        max_identity_error,
        defocusing_sign_ok: defocusing_ok,
        momentum_gradient_sign_ok: momentum_gradient_ok,
        vzero_forcing_sup,
    })
}

/// Empirical survival of `samples` on the lambda grid and a weighted linear
/// fit of `log survival` against `lambda^2`. Zero-survival levels are
/// excluded; weights are the exceedance counts.
pub fn tail_statistics(samples: &[f64], lambda_grid: &[f64]) -> Result<TailReport> {
    if samples.len() < 100 {
        return Err(Error::TooFewSamples {
            need: 100,
            have: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lambdas: Vec<f64> = if lambda_grid.is_empty() {
        // quantile grid between the 30th and 98th percentiles
        (0..18)
            .map(|i| {
                let q = 0.30 + 0.04 * i as f64;
                sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)]
            })
            .collect()
    } else {
        lambda_grid.to_vec()
    };
    let n = samples.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut survival = Vec::with_capacity(lambdas.len());
    for &lam in &lambdas {
        let count = samples.iter().filter(|&&x| x > lam).count();
        let p = count as f64 / n;
        survival.push(p);
        if count == 0 {
            continue;
        }
        xs.push(lam * lam);
        ys.push(p.ln());
        ws.push(count as f64);
    }
    if xs.len() < 3 {
        return Err(Error::TooFewSamples {
            need: 3,
            have: xs.len(),
        });
    }
    let wsum: f64 = ws.iter().sum();
    let xbar: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let ybar: f64 = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let sxx: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(x, w)| w * (x - xbar) * (x - xbar))
        .sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .zip(&ws)
        .map(|((x, y), w)| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(ys.iter())
        .zip(&ws)
        .map(|((x, y), w)| {
            let fit = intercept + slope * x;
            w * (y - fit) * (y - fit)
        })
        .sum();
    let ss_tot: f64 = ys
        .iter()
        .zip(&ws)
        .map(|(y, w)| w * (y - ybar) * (y - ybar))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(TailReport {
        lambdas,
        survival,
        slope,
        intercept,
        r_squared,
        points_used: xs.len(),
    })
}

/// Everything the threshold event needs from one sample.
#[derive(Debug, Clone, Copy)]
pub struct OmegaInputs {
    pub hs_norm: f64,
    pub y_norm_v: f64,
    pub w0_l2: f64,
    pub w0_h1dot: f64,
    pub l2_norm: f64,
    pub l10_norm: f64,
}

impl From<&SampleStats> for OmegaInputs {
    fn from(s: &SampleStats) -> Self {
        Self {
            hs_norm: s.hs_norm,
            y_norm_v: s.y_norm_v,
            w0_l2: s.w0_l2,
            w0_h1dot: s.w0_h1dot,
            l2_norm: s.l2_norm,
            l10_norm: s.l10_norm,
        }
    }
}

/// Fraction of samples inside the threshold event at each level M: both the
/// randomized-norm condition and the scaled low-frequency condition must sit
/// below `M * base_hs`.
pub fn omega_event_count(
    samples: &[OmegaInputs],
    s: f64,
    n_zero: f64,
    base_hs: f64,
    m_levels: &[f64],
) -> Result<Vec<OmegaCount>> {
    if samples.is_empty() {
        return Err(Error::MissingStatistics("no samples"));
    }
    if !(base_hs > 0.0) {
        return Err(Error::MissingStatistics("base H^s norm"));
    }
    for smp in samples {
        let all = [
            smp.hs_norm,
            smp.y_norm_v,
            smp.w0_l2,
            smp.w0_h1dot,
            smp.l2_norm,
            smp.l10_norm,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingStatistics("non-finite sample statistic"));
        }
    }
    Ok(m_levels
        .iter()
        .map(|&m| {
            let hits = samples
                .iter()
                .filter(|smp| {
                    let first = smp.hs_norm + smp.y_norm_v < m * base_hs;
                    let second = n_zero.powf(s) * smp.w0_l2
                        + n_zero.powf(s - 1.0) * smp.w0_h1dot
                        + smp.l2_norm
                        + smp.l10_norm
                        < m * base_hs;
                    first && second
                })
                .count();
            OmegaCount {
                level: m,
                fraction: hits as f64 / samples.len() as f64,
            }
        })
        .collect())
}

/// Flatten a stored summary into a per-sample (or per-level) CSV report.
pub fn aggregate_report(dir: &Path) -> Result<String> {
    let text = std::fs::read_to_string(dir.join("summary.json"))?;
    let summary: RunSummary = serde_json::from_str(&text)?;
    let mut out = String::new();
    match summary {
        RunSummary::Ensemble(e) => {
            out.push_str("index,seed,hs_norm,l2_norm,l10_norm,w0_l2,w0_h1dot,y_norm_v,m_w_initial,e_w_initial,m_w_max_drift,e_w_max_drift,mass_bound_ratio_max\n");
            for s in &e.samples {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    s.index,
                    s.seed,
                    s.hs_norm,
                    s.l2_norm,
                    s.l10_norm,
                    s.w0_l2,
                    s.w0_h1dot,
                    s.y_norm_v,
                    s.m_w_initial,
                    s.e_w_initial,
                    s.m_w_max_drift,
                    s.e_w_max_drift,
                    s.mass_bound_ratio_max
                ));
            }
            for c in &e.omega_counts {
                out.push_str(&format!("# omega_level,{},fraction,{}\n", c.level, c.fraction));
            }
        }
        RunSummary::Sweep(sw) => {
            out.push_str("n_zero,mean_m_w_drift,mean_e_w_drift,max_mass_bound_ratio\n");
            for l in &sw.levels {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    l.n_zero, l.mean_m_w_drift, l.mean_e_w_drift, l.max_mass_bound_ratio
                ));
            }
        }
        RunSummary::Tails(t) => {
            out.push_str("lambda,survival\n");
            for (l, s) in t.y_tail.lambdas.iter().zip(&t.y_tail.survival) {
                out.push_str(&format!("{l},{s}\n"));
            }
            out.push_str(&format!(
                "# slope,{},r_squared,{}\n",
                t.y_tail.slope, t.y_tail.r_squared
            ));
        }
        RunSummary::Audit(a) => {
            out.push_str("time,identity_error\n");
            for (t, e) in a.times[1..].iter().zip(&a.identity_errors) {
                out.push_str(&format!("{t},{e}\n"));
            }
        }
        RunSummary::Suite(s) => {
            out.push_str(&format!("all_pass,{}\n", s.all_pass));
        }
    }
    write_atomic(&dir.join("report.csv"), out.as_bytes())?;
    Ok(out)
}

/// Write through a temp file and rename, so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_fit_on_rayleigh_recovers_unit_slope() {
        let samples: Vec<f64> = (0..500)
            .map(|i| {
                SplitMix64::new(derive_seed(5, i))
                    .next_complex_gaussian()
                    .norm()
            })
            .collect();
        let report = tail_statistics(&samples, &[]).unwrap();
        assert!(report.slope < 0.0);
        assert!(
            (report.slope + 1.0).abs() < 0.1,
            "slope {} should be -1 within 10%",
            report.slope
        );
        assert!(report.r_squared > 0.95, "R^2 = {}", report.r_squared);
    }

    #[test]
    fn tail_fit_excludes_empty_levels_and_checks_sample_count() {
        let constant = vec![1.0; 500];
        // all mass at 1.0: every usable level is degenerate
        assert!(tail_statistics(&constant, &[0.5, 2.0, 3.0]).is_err());
        assert!(matches!(
            tail_statistics(&[1.0; 50], &[]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn omega_counts_are_nested() {
        let samples: Vec<OmegaInputs> = (0..40)
            .map(|i| {
                let mut rng = SplitMix64::new(derive_seed(11, i));
                let r = || 0.0;
                let _ = r;
                OmegaInputs {
                    hs_norm: 1.0 + rng.next_unit(),
                    y_norm_v: rng.next_unit() * 2.0,
                    w0_l2: rng.next_unit(),
                    w0_h1dot: rng.next_unit() * 3.0,
                    l2_norm: rng.next_unit(),
                    l10_norm: rng.next_unit(),
                }
            })
            .collect();
        let counts = omega_event_count(&samples, -1.0, 4.0, 1.0, &[0.0, 1.0, 2.0, 4.0, 8.0, 1e9])
            .unwrap();
        assert_eq!(counts[0].fraction, 0.0);
        assert_eq!(counts.last().unwrap().fraction, 1.0);
        for w in counts.windows(2) {
            assert!(w[1].fraction >= w[0].fraction);
        }
    }
}
