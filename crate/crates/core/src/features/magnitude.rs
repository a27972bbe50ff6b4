use super::{analysis_frames, FeatureConfig};
use crate::dsp::{complex_spectrum, dct_features, floored_ln, power_spectrum, AudioSignal};
use crate::error::Result;
use crate::filterbank::{linear_rectangular_bank, mel_filterbank, Filterbank};
use crate::matrix::Matrix;

fn filterbank_cepstra(
    signal: &AudioSignal,
    config: &FeatureConfig,
    bank: &Filterbank,
    flipped: bool,
) -> Result<Matrix> {
    let frames = analysis_frames(signal, config)?;
    let power = power_spectrum(&frames, config.dft_size)?;
    let mut log_e = Matrix::zeros(power.values.rows(), bank.n_filters());
    let mut row = vec![0.0; power.values.cols()];
    for t in 0..power.values.rows() {
        row.copy_from_slice(power.values.row(t));
        if flipped {
            row.reverse();
        }
        let mut e = bank.apply(&row)?;
        if flipped {
            e.reverse();
        }
        for (d, v) in log_e.row_mut(t).iter_mut().zip(e) {
            *d = floored_ln(v);
        }
    }
    Ok(dct_features(&log_e, config.n_coeffs)?.values)
}

pub fn mfcc_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let bank = mel_filterbank(config.n_filters, config.dft_size, signal.sample_rate())?;
    filterbank_cepstra(signal, config, &bank, false)
}

/// The mel bank on the bin-reversed power spectrum, filter order reversed so
/// band 0 is the lowest. Equivalent to the mirrored bank, bit for bit.
pub fn imfcc_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let bank = mel_filterbank(config.n_filters, config.dft_size, signal.sample_rate())?;
    filterbank_cepstra(signal, config, &bank, true)
}

/// Spectral centroid magnitude of each band: `Σ f·|X|·w / Σ f·w` with
/// `f = k / (K/2)` the normalized bin frequency.
pub fn scm_frame(magnitude: &[f64], bank: &Filterbank) -> Vec<f64> {
    let half = (magnitude.len() - 1).max(1) as f64;
    bank.weights
        .iter_rows()
        .map(|w| {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, (&m, &wk)) in magnitude.iter().zip(w).enumerate() {
                let f = k as f64 / half;
                num += f * m * wk;
                den += f * wk;
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

pub fn scmc_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let bank = linear_rectangular_bank(config.n_filters, config.dft_size, signal.sample_rate())?;
    let frames = analysis_frames(signal, config)?;
    let spec = complex_spectrum(&frames, config.dft_size)?;
    let log_scm = Matrix::from_rows(
        bank.n_filters(),
        spec.iter().map(|row| {
            let mag: Vec<f64> = row.iter().map(|c| c.norm()).collect();
            scm_frame(&mag, &bank).into_iter().map(floored_ln).collect::<Vec<_>>()
        }),
    )?;
    Ok(dct_features(&log_scm, config.n_coeffs)?.values)
}
