//! Signal model and conventional processing chain for an FMCW radar altimeter
//! operating under RF interference.
//!
//! The crate covers the transmit waveform ([`waveform`]), interference
//! generators ([`interference`]), received-scene composition and labeled
//! dataset synthesis ([`scene`], [`dataset`]), the altimeter processor
//! ([`dsp`]) and the block LMS benchmark ([`lms`]).

pub mod dataset;
pub mod dsp;
pub mod error;
pub mod interference;
pub mod lms;
pub mod rng;
pub mod scene;
pub mod signal;
pub mod waveform;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
pub use signal::ComplexSignal;
pub use waveform::RadarParams;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
