use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::dsp::{fft_forward, fft_inverse};
use crate::error::{Error, Result};

/// Number of channels in the reference auditory bank.
pub const GAMMATONE_CHANNELS: usize = 32;
const ORDER: i32 = 4;

/// Glasberg–Moore equivalent rectangular bandwidth in Hz.
pub fn erb_bandwidth(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// ERB-rate (number of ERBs below `f`).
pub fn erb_rate(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

pub fn erb_rate_inverse(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

/// Fourth-order gammatone filters, ERB-rate-uniform between 100 Hz and 8 kHz,
/// realized as FIR impulse responses normalized to unit gain at their center.
#[derive(Debug, Clone)]
pub struct GammatoneBank {
    pub center_freqs: Vec<f64>,
    pub impulse_responses: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

pub fn gammatone_bank(sample_rate: u32) -> Result<GammatoneBank> {
    gammatone_bank_with(sample_rate, GAMMATONE_CHANNELS, 100.0, 8000.0)
}

pub(crate) fn gammatone_bank_with(
    sample_rate: u32,
    n: usize,
    f_low: f64,
    f_high: f64,
) -> Result<GammatoneBank> {
    if sample_rate < 16_000 {
        return Err(Error::invalid("gammatone bank needs a sample rate of at least 16 kHz"));
    }
    if n < 2 || !(f_low < f_high) {
        return Err(Error::invalid("gammatone bank needs two or more increasing channels"));
    }
    let (e_lo, e_hi) = (erb_rate(f_low), erb_rate(f_high));
    let step = (e_hi - e_lo) / (n - 1) as f64;
    let center_freqs: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => f_low,
            i if i == n - 1 => f_high,
            i => erb_rate_inverse(e_lo + step * i as f64),
        })
        .collect();
    let sr = sample_rate as f64;
    let impulse_responses = center_freqs.iter().map(|&fc| impulse_response(fc, sr)).collect();
    Ok(GammatoneBank {
        center_freqs,
        impulse_responses,
        sample_rate,
    })
}

fn impulse_response(fc: f64, sr: f64) -> Vec<f64> {
    let b = 1.019 * erb_bandwidth(fc);
    let env = |t: f64| t.powi(ORDER - 1) * (-2.0 * PI * b * t).exp();
    let t_peak = (ORDER - 1) as f64 / (2.0 * PI * b);
    let peak = env(t_peak);
    let mut len = (t_peak * sr).ceil() as usize + 1;
    while env(len as f64 / sr) > 1e-6 * peak {
        len += 1;
    }
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            env(t) * (2.0 * PI * fc * t).cos()
        })
        .collect();
    let w = 2.0 * PI * fc / sr;
    let gain = dtft_magnitude(&h, w);
    h.iter_mut().for_each(|v| *v /= gain);
    h
}

pub(crate) fn dtft_magnitude(h: &[f64], w: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &v) in h.iter().enumerate() {
        re += v * (w * n as f64).cos();
        im -= v * (w * n as f64).sin();
    }
    (re * re + im * im).sqrt()
}

impl GammatoneBank {
    pub fn n_channels(&self) -> usize {
        self.center_freqs.len()
    }

    /// Causal filtering of `x` by every channel; each output has `x.len()` samples.
    pub fn filter(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = x.len();
        if n == 0 {
            return vec![Vec::new(); self.n_channels()];
        }
        let max_len = self.impulse_responses.iter().map(Vec::len).max().unwrap_or(1);
        let size = (n + max_len - 1).next_power_of_two();
        let mut xs = vec![Complex64::new(0.0, 0.0); size];
        for (c, &v) in xs.iter_mut().zip(x) {
            c.re = v;
        }
        fft_forward(&mut xs);
        self.impulse_responses
            .iter()
            .map(|h| {
                let mut hs = vec![Complex64::new(0.0, 0.0); size];
                for (c, &v) in hs.iter_mut().zip(h) {
                    c.re = v;
                }
                fft_forward(&mut hs);
                for (a, b) in hs.iter_mut().zip(&xs) {
                    *a *= b;
                }
                fft_inverse(&mut hs);
                hs[..n].iter().map(|c| c.re).collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_centers() {
        let g = gammatone_bank(16_000).unwrap();
        assert_eq!(g.n_channels(), 32);
        assert!((g.center_freqs[0] - 100.0).abs() < 1e-9);
        assert!((g.center_freqs[31] - 8000.0).abs() < 1e-9);
        assert!(g.center_freqs.windows(2).all(|p| p[0] < p[1]));
        let steps: Vec<f64> = g
            .center_freqs
            .windows(2)
            .map(|p| erb_rate(p[1]) - erb_rate(p[0]))
            .collect();
        for s in &steps {
            assert!((s - steps[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_low_sample_rate() {
        assert!(gammatone_bank(8_000).is_err());
    }

    #[test]
    fn unit_gain_at_center() {
        let g = gammatone_bank(16_000).unwrap();
        for (fc, h) in g.center_freqs.iter().zip(&g.impulse_responses) {
            let m = dtft_magnitude(h, 2.0 * PI * fc / 16_000.0);
            assert!((m - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tone_response_peaks_at_center() {
        let g = gammatone_bank(16_000).unwrap();
        let sr = 16_000.0;
        let rms_out = |ch: usize, f: f64| {
            let x: Vec<f64> = (0..8000).map(|i| (2.0 * PI * f * i as f64 / sr).sin()).collect();
            let y = &g.filter(&x)[ch];
            (y[4000..].iter().map(|v| v * v).sum::<f64>() / 4000.0).sqrt()
        };
        for ch in [3usize, 10, 20, 28] {
            let fc = g.center_freqs[ch];
            let erb = erb_bandwidth(fc);
            let at = rms_out(ch, fc);
            assert!(at >= rms_out(ch, fc + erb), "ch {ch} above");
            assert!(at >= rms_out(ch, fc - erb), "ch {ch} below");
        }
    }
}
