//! Spoofing-detection workbench: spectral-magnitude and spectral-phase
//! front-ends, GMM and i-vector back-ends, SNR-controlled noise
//! contamination, classical enhancement, score fusion and ROCCH-EER
//! evaluation.

pub mod dsp;
pub mod enhance;
pub mod features;
pub mod fusion;
pub mod filterbank;
pub mod gmm;
pub mod harness;
pub mod error;
pub mod eval;
pub mod io;
pub mod ivector;
pub mod matrix;
pub mod noise;
pub mod scores;
pub mod synth;

pub use error::{Error, Result};
