//! Coulomb gases on compact Riemannian manifolds.
//!
//! The crate evaluates heat kernels and Green functions of the Laplacian on
//! the flat tori `T²`, `T³` and the unit-area sphere, samples the Gibbs
//! measure of the gas by Metropolis chains, computes Wasserstein-1 distances
//! with dual certificates, and assembles the concentration bounds for the
//! empirical measure.

pub mod concentration;
pub mod error;
pub mod experiment;
pub mod gas;
pub mod green_quadrature;
pub mod manifold;
pub mod measure;
pub mod quadrature;
pub mod regularize;
pub mod rng;
pub mod spectral;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use manifold::{ManifoldId, ManifoldPoint, QuadratureGrid};
pub use measure::DiscreteMeasure;
pub use rng::RngState;
pub use spectral::{KernelValue, SpectralModel};
