//! A pseudospectral laboratory for the defocusing energy-critical Hartree
//! equation on a periodic box.
//!
//! The crate provides the Fourier calculus on the discretized box
//! ([`spectral`]), the frequency-cube randomization of initial data
//! ([`randomization`]), Strang split-step time evolution with the perturbed
//! high/low decomposition ([`dynamics`]), the functional zoo of the analysis
//! (mass/energy, interaction actions, space-time norms; [`functionals`]),
//! a property-test battery for the supporting inequalities ([`inequality`]),
//! and experiment orchestration with deterministic seeding ([`ensemble`]).

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fft;
pub mod functionals;
pub mod grid;
pub mod inequality;
pub mod kernels;
pub mod randomization;
pub mod rng;
pub mod snapshot;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Representation};
pub use rng::derive_seed;
