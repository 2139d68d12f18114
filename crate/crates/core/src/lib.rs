//! Soliton spheres in R^3 from one-dimensional spectral data.
//!
//! The library connects three layers of the same object:
//!
//! * **Spectral data** for a 1-D Dirac operator — poles in the upper
//!   half-plane, norming constants and an optional reflection coefficient
//!   ([`spectral`]).
//! * **Potentials** U(x), reachable from data either in closed form for
//!   reflectionless data ([`reflectionless`]) or through the Marchenko
//!   integral equations ([`marchenko`]), and sent back by direct scattering
//!   ([`scattering`]).
//! * **Immersed spheres**, produced from the eigenfunctions through the
//!   Weierstrass representation, together with their Willmore energy and
//!   conserved Kruskal integrals ([`weierstrass`], [`kruskal`]).

pub mod error;
pub mod kruskal;
pub mod linalg;
pub mod marchenko;
pub mod numeric;
pub mod potential;
pub mod reflectionless;
pub mod scattering;
pub mod spectral;
pub mod weierstrass;

pub use error::{Error, Result};
pub use numeric::UniformGrid;
pub use potential::GridPotential;
pub use scattering::{BoundState, JostField, JostKind, ScatteringReport};
pub use spectral::{HalfIntegerLevel, ReflectionSample, SpectralData};
