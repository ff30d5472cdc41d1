//! Spectral conformal-map simulator for zero-surface-tension Hele-Shaw flow.

pub mod dynamics;
pub mod geometry;
mod integrator;
pub mod moments;
pub mod perturbation;
pub mod poisson;
pub mod rescaling;
pub mod roots;
pub mod series;
mod spectral;

pub use num_complex::Complex64;
pub use spectral::next_pow2;
