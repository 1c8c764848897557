//! Simulation and verification toolkit for the low-density (Boltzmann-Grad)
//! limit of the periodic Lorentz gas.
//!
//! The crate has three layers:
//!
//! * exact evaluation and sampling of the two-dimensional collision kernel
//!   and its moment functions ([`kernel2d`], [`scattering`]);
//! * simulation of the limiting random flight process and of the
//!   finite-radius lattice billiard it approximates ([`flight`], [`billiard`]);
//! * estimators and numeric gates that check superdiffusive scaling, tail
//!   laws, spectral gap and mixing at desk scale ([`stats`], [`verify`]).
//!
//! All randomness flows through splittable counter-based streams
//! ([`rng::stream`]); given a master seed and a stream index every result in
//! the crate is bit-reproducible regardless of thread count.

pub mod billiard;
pub mod error;
pub mod flight;
pub mod geom;
pub mod kernel2d;
pub mod quad;
pub mod rng;
pub mod scattering;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
