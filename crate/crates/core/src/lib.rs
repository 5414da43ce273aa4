//! Fourier ptychographic microscopy toolkit.
//!
//! Simulates angle-varied coherent captures of a thin complex object and
//! reconstructs the high-resolution object and the objective pupil with two
//! engines: a classical ePIE solver ([`epie`]) and a gradient-descent solver
//! that treats the forward model as a fixed computation graph with learnable
//! object spectrum, pupil amplitude and Zernike phase coefficients ([`pgnn`]).

// `!(x > 0.0)` style checks reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod epie;
pub mod error;
pub mod field;
pub mod io;
pub mod model;
pub mod metrics;
pub mod optics;
pub mod pgnn;
pub mod sim;

pub use dataset::Dataset;
pub use error::{FpError, Result};
pub use field::{ComplexGrid, RealGrid};
pub use model::{ImagingModel, Traversal};
pub use optics::{Illumination, OpticalConfig};
