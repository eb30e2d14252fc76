//! Spectral laboratory for suspensions of perturbed hyperbolic toral maps.
//!
//! The crate moves in layers: exact integer/rational arithmetic for the
//! linear model (`intmat`, `lattice_maps`), Newton-continued orbit data for
//! perturbations (`perturbed_maps`), a Fourier transfer-operator spectrum
//! (`transfer`), and on top of those the suspension-flow objects: a
//! resonance lattice (`suspension`), zeta-function evaluation (`zeta`), and
//! trace-formula experiments (`trace_lab`).

// House style for the numerics: reference constants keep every digit their
// derivations printed, validation guards use negated comparisons so NaN
// fails them, and loops over fixed small dimensions stay indexed.
#![allow(clippy::excessive_precision)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod par;

pub mod intmat;
pub mod quad;

pub mod eig;

pub mod lattice_maps;
pub mod perturbed_maps;
pub mod suspension;
pub mod transfer;
pub mod suite;
pub mod trace_lab;
pub mod zeta;

pub use error::{Error, Result};
pub use lattice_maps::ToralAutomorphism;
pub use perturbed_maps::{OrbitTable, PerturbedMap};
