use super::pitch::{estimate_f0, PitchConfig};
use super::{analysis_frames, unwrap_phase, FeatureConfig, RawFeatures};
use crate::dsp::{dct_row, real_dft_half, wrap_phase, AudioSignal};
use crate::error::Result;
use crate::filterbank::{mel_filterbank, Filterbank};
use crate::matrix::Matrix;

/// Relative phase shifts `θ_k = wrap(φ_k − k·φ_1)` of harmonics `k = 1..=H`
/// of a windowed frame, with `φ_k` linearly interpolated from the unwrapped
/// phases of the two DFT bins bracketing `k·F0`.
pub fn harmonic_phases(frame: &[f64], f0: f64, sample_rate: u32, dft_size: usize) -> Vec<f64> {
    let spec = real_dft_half(frame, dft_size);
    let nyq = sample_rate as f64 / 2.0;
    let n_harm = (nyq / f0).floor() as usize;
    let last = spec.len() - 1;
    let phi: Vec<f64> = (1..=n_harm)
        .filter_map(|k| {
            let pos = k as f64 * f0 * dft_size as f64 / sample_rate as f64;
            let lo = pos.floor() as usize;
            if lo >= last {
                return None;
            }
            let frac = pos - lo as f64;
            let p0 = spec[lo].arg();
            let p1 = p0 + wrap_phase(spec[lo + 1].arg() - p0);
            Some(p0 + frac * (p1 - p0))
        })
        .collect();
    match phi.first() {
        Some(&p1) => phi
            .iter()
            .enumerate()
            .map(|(i, &p)| wrap_phase(p - (i + 1) as f64 * p1))
            .collect(),
        None => Vec::new(),
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    if t <= xs[0] {
        return ys[0];
    }
    if t >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= t) - 1;
    let a = (t - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] * (1.0 - a) + ys[i + 1] * a
}

/// RPS coefficients of one voiced frame: unwrap θ over harmonics, difference,
/// spread onto the linear DFT grid, mel-weighted averaging, DCT.
pub fn rps_frame(
    frame: &[f64],
    f0: f64,
    sample_rate: u32,
    dft_size: usize,
    bank: &Filterbank,
    n_coeffs: usize,
) -> Vec<f64> {
    let theta = unwrap_phase(&harmonic_phases(frame, f0, sample_rate, dft_size));
    let bins = dft_size / 2 + 1;
    let df = sample_rate as f64 / dft_size as f64;
    let curve: Vec<f64> = if theta.len() < 2 {
        vec![0.0; bins]
    } else {
        let d: Vec<f64> = theta.windows(2).map(|w| w[1] - w[0]).collect();
        let at: Vec<f64> = (0..d.len()).map(|i| (i as f64 + 1.5) * f0).collect();
        (0..bins).map(|k| interp_linear(&at, &d, k as f64 * df)).collect()
    };
    let bands: Vec<f64> = bank
        .weights
        .iter_rows()
        .map(|w| {
            let s: f64 = w.iter().sum();
            w.iter().zip(&curve).map(|(a, b)| a * b).sum::<f64>() / s
        })
        .collect();
    dct_row(&bands, n_coeffs)
}

pub fn rps_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<RawFeatures> {
    let frames = analysis_frames(signal, config)?;
    let pitch = PitchConfig {
        shift_ms: config.shift_ms,
        frame_ms: config.frame_ms,
        ..PitchConfig::default()
    };
    let track = estimate_f0(signal, &pitch);
    let bank = mel_filterbank(config.n_filters, config.dft_size, signal.sample_rate())?;
    let n = frames.n_frames();
    let mut values = Matrix::zeros(n, config.n_coeffs);
    let mut valid = vec![false; n];
    for t in 0..n {
        let f0 = track.f0[t];
        if f0 <= 0.0 {
            continue;
        }
        valid[t] = true;
        let c = rps_frame(
            frames.frames.row(t),
            f0,
            signal.sample_rate(),
            config.dft_size,
            &bank,
            config.n_coeffs,
        );
        values.row_mut(t).copy_from_slice(&c);
    }
    Ok(RawFeatures { values, valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::hamming;
    use crate::features::{extract, FeatureKind};
    use crate::Error;
    use std::f64::consts::PI;

    fn harmonic_frame(f0: f64, phi1: f64, theta: &[f64], offset: usize) -> Vec<f64> {
        let w = hamming(320);
        (0..320)
            .map(|i| {
                let n = (i + offset) as f64;
                let base = 2.0 * PI * f0 * n / 16_000.0;
                let s: f64 = theta
                    .iter()
                    .enumerate()
                    .map(|(j, &th)| {
                        let k = (j + 1) as f64;
                        (k * (base + phi1) + th).cos() / k.sqrt()
                    })
                    .sum();
                s * w[i]
            })
            .collect()
    }

    #[test]
    fn zero_relative_phase_recovered() {
        let f0 = 200.0;
        let theta = vec![0.0; 20];
        for offset in [0, 37, 123] {
            let x = harmonic_frame(f0, 0.7, &theta, offset);
            let got = harmonic_phases(&x, f0, 16_000, 512);
            assert_eq!(got.len(), 39);
            for (k, th) in got.iter().take(20).enumerate() {
                assert!(th.abs() < 0.05, "offset {offset} harmonic {}: {th}", k + 1);
            }
        }
    }

    #[test]
    fn injected_third_harmonic_shift() {
        let f0 = 200.0;
        let mut theta = vec![0.0; 20];
        theta[2] = PI / 2.0;
        let x = harmonic_frame(f0, -1.1, &theta, 55);
        let got = harmonic_phases(&x, f0, 16_000, 512);
        assert!((got[2] - PI / 2.0).abs() < 0.1);
        for (k, th) in got.iter().take(20).enumerate().filter(|(k, _)| *k != 2) {
            assert!(th.abs() < 0.1, "harmonic {}: {th}", k + 1);
        }
    }

    #[test]
    fn unvoiced_utterance_is_empty() {
        let s = AudioSignal::new(vec![0.0; 8_000], 16_000).unwrap();
        let cfg = FeatureConfig::new(FeatureKind::Rps);
        assert!(matches!(extract(&s, &cfg), Err(Error::EmptyFeatures(_))));
    }

    #[test]
    fn voiced_signal_gives_raw_32() {
        let x: Vec<f64> = (0..8_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                (1..53).map(|k| (2.0 * PI * 150.0 * k as f64 * t).cos() / k as f64).sum()
            })
            .collect();
        let s = AudioSignal::new(x, 16_000).unwrap();
        let f = extract(&s, &FeatureConfig::new(FeatureKind::Rps)).unwrap();
        assert_eq!(f.dim(), 32);
        assert!(f.n_frames() > 40);
        // zero relative phases everywhere: the difference curve is flat zero
        let worst = f.values.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 0.1, "{worst}");
    }
}
