//! Short-term analysis primitives shared by every feature extractor.

mod cepstral;
mod envelope;
mod frames;
mod spectrum;
mod vad;

pub use cepstral::{Block, FeatureMatrix, append_deltas, cms, dct_features, dct_matrix, dct_row, idct_row, DeltaOrder};
pub use envelope::{analytic_envelope, lowpass_zero_phase, Biquad};
pub use frames::{frame_signal, hamming, FrameMatrix, Window};
pub(crate) use spectrum::{check_dft_size, fft_inverse, real_dft_half};
pub use spectrum::{
    complex_spectrum, fft_forward, phase_spectrum, power_spectrum, wrap_phase, PhaseSpectrum,
    PowerSpectrum,
};
pub use vad::{energy_vad, VadMask, DEFAULT_VAD_THRESHOLD_DB};

use crate::error::{Error, Result};

/// Floor applied before every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[inline]
pub fn floored_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Mono sample sequence with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same sample rate, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        AudioSignal::new(samples, self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Converts a duration in milliseconds to a sample count, rounding to nearest.
pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}
