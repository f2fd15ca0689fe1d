//! Pseudospectral simulation and bifurcation analysis of a two-species
//! reaction-diffusion system with linear, self- and cross-diffusion.

pub mod cli;
pub mod config;
pub mod continuation;
pub mod diagnostics;
pub mod equilibrium;
pub mod error;
pub mod integrator;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod model;
pub mod orbit;
pub mod spectral;

pub use error::{Error, Result};
pub use integrator::{flow_map, integrate, rk4_step, IntegratorConfig, Trajectory};
pub use model::{DiffusionRegime, FieldPair, ModelParameters, RegimeLabel};
pub use spectral::{SpectralField, SpectralGrid};
