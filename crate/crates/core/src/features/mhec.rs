use super::FeatureConfig;
use crate::dsp::{
    analytic_envelope, dct_features, floored_ln, frame_signal, lowpass_zero_phase, AudioSignal,
    Window,
};
use crate::error::Result;
use crate::filterbank::gammatone_bank;
use crate::matrix::Matrix;

/// Hamming-weighted mean smoothed envelope energy per frame and channel.
pub(crate) fn channel_energies(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let bank = gammatone_bank(signal.sample_rate())?;
    let sr = signal.sample_rate() as f64;
    let mut energies: Option<Matrix> = None;
    for (c, y) in bank.filter(signal.samples()).into_iter().enumerate() {
        let env = analytic_envelope(&y);
        let smooth: Vec<f64> = lowpass_zero_phase(&env, config.envelope_cutoff_hz, sr)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let env_signal = signal.with_samples(smooth)?;
        let frames = frame_signal(&env_signal, config.frame_ms, config.shift_ms, Window::Hamming)?;
        let wsum: f64 = Window::Hamming.coefficients(frames.frame_len).iter().sum();
        let out = energies.get_or_insert_with(|| Matrix::zeros(frames.n_frames(), bank.n_channels()));
        for t in 0..frames.n_frames() {
            out.set(t, c, frames.frames.row(t).iter().sum::<f64>() / wsum);
        }
    }
    Ok(energies.unwrap_or_else(|| Matrix::zeros(0, 0)))
}

pub fn mhec_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let e = channel_energies(signal, config)?;
    let log_e = e.map(floored_ln);
    Ok(dct_features(&log_e, config.n_coeffs)?.values)
}
