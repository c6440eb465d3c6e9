//! Shape resonance of a delta well inside a flat barrier.

pub mod cli;
pub mod error;
pub mod greens;
pub mod model;
pub mod propagator;
pub mod quadrature;
pub mod reduced;
pub mod scalar;
pub mod scattering;
pub mod spectra;
pub mod tridiag;

pub use error::{Error, Result};

/// Double-precision aliases.
pub type Complex = num_complex::Complex64;
pub type Params = model::ModelParams<f64>;
pub type Alpha = model::AlphaProfile<f64>;
pub type Partition = model::PartitionFn<f64>;
pub type Chi = model::ChiObservable<f64>;
