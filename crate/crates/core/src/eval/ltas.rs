use crate::dsp::{energy_vad, frame_signal, power_spectrum, AudioSignal, Window};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::matrix::Matrix;

/// Mean short-term power spectrum over speech frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LtasProfile {
    pub power: Vec<f64>,
    pub n_frames: usize,
    pub dft_size: usize,
}

impl LtasProfile {
    /// Averages per-frame power spectra over the frames flagged in `keep`.
    pub fn from_frames(power: &Matrix, keep: &[bool], dft_size: usize) -> Result<Self> {
        if keep.len() != power.rows() {
            return Err(Error::DimensionMismatch {
                expected: power.rows(),
                found: keep.len(),
            });
        }
        let mut acc = vec![0.0; power.cols()];
        let mut n = 0usize;
        for (row, _) in power.iter_rows().zip(keep).filter(|(_, &k)| k) {
            acc.iter_mut().zip(row).for_each(|(a, p)| *a += p);
            n += 1;
        }
        if n == 0 {
            return Err(Error::NoSpeech);
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Ok(Self {
            power: acc,
            n_frames: n,
            dft_size,
        })
    }

    /// Frame-count-weighted mean of several profiles.
    pub fn merge(parts: &[LtasProfile]) -> Result<Self> {
        let first = parts.first().ok_or(Error::NoSpeech)?;
        let mut acc = vec![0.0; first.power.len()];
        let mut n = 0;
        for p in parts {
            if p.power.len() != acc.len() {
                return Err(Error::DimensionMismatch {
                    expected: acc.len(),
                    found: p.power.len(),
                });
            }
            acc.iter_mut().zip(&p.power).for_each(|(a, v)| *a += v * p.n_frames as f64);
            n += p.n_frames;
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Ok(Self {
            power: acc,
            n_frames: n,
            dft_size: first.dft_size,
        })
    }

    pub fn to_db(&self) -> Vec<f64> {
        self.power.iter().map(|p| 10.0 * p.max(1e-20).log10()).collect()
    }
}

/// LTAS on the feature frame grid with the feature energy VAD.
pub fn compute_ltas(signal: &AudioSignal, config: &FeatureConfig) -> Result<LtasProfile> {
    let frames = frame_signal(signal, config.frame_ms, config.shift_ms, Window::Hamming)?;
    let vad = energy_vad(&frames, config.vad_threshold_db);
    let spec = power_spectrum(&frames, config.dft_size)?;
    LtasProfile::from_frames(&spec.values, &vad.flags, config.dft_size)
}
