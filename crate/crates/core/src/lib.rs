//! Circular synthetic aperture sonar simulation, delay-and-sum imaging and
//! PSF deconvolution with an implicit neural representation.
//!
//! The pipeline is: [`sim::simulate`] a scatterer map into per-transducer
//! records, [`beamform::beamform`] them into a complex image, build the scene
//! PSF with [`psf::build_psf`], then fit a coordinate network whose output,
//! convolved with the PSF, matches the image ([`deconv::run_deconv`]).
//! Inverse and Wiener filters live in [`baselines`] for comparison.

pub mod baselines;
pub mod beamform;
pub mod deconv;
pub mod error;
pub mod grid;
pub mod inr;
pub mod io;
pub mod psf;
pub mod sim;
pub mod waveform;

pub use error::{Error, Result};
pub use grid::{ArrayGeometry, ComplexGrid, RealGrid};
pub use waveform::WaveformSpec;
