//! Fluctuation-enhanced sensing toolkit.
//!
//! The crate is organised along the processing chain of a noise-based gas
//! sensing experiment:
//!
//! * [`synth`]: elementary noise sources (random telegraph signals, Lorentzian
//!   banks, 1/f, Johnson and Hooge noise) as analytic spectra and time series.
//! * [`sensor`]: a resistive gas sensor whose fluctuator population responds to
//!   gas mixtures, UV illumination and a heat/cool sampling protocol.
//! * [`instrument`]: voltage and transimpedance measurement chains, their noise
//!   budgets and headroom limits.
//! * [`spectral`]: Welch PSD, bispectrum and plateau detection.
//! * [`analysis`]: Johnson thermometry, spectral unmixing and capacity metrics.
//!
//! Everything stochastic takes a [`Seed`]; the same seed always reproduces the
//! same samples.

pub mod analysis;
pub mod error;
pub mod instrument;
pub mod linalg;
pub mod seed;
pub mod sensor;
pub mod series;
pub mod spectral;
pub mod synth;

pub use error::{FesError, Result};
pub use seed::Seed;
pub use series::{format_f64, TimeSeries};
pub use spectral::{CaptureConfig, Normalization, SpectrumEstimate, Window};
pub use synth::{Fluctuator, BOLTZMANN};
