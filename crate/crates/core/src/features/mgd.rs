use rustfft::num_complex::Complex64;

use super::{analysis_frames, FeatureConfig};
use crate::dsp::{dct_row, fft_forward, fft_inverse, floored_ln, real_dft_half, AudioSignal};
use crate::error::Result;
use crate::matrix::Matrix;

/// Denominator spectrum `H(k)` of the modified group delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Real cepstrum of `log|X|` truncated to this many coefficients.
    Cepstral(usize),
    /// Raw `|X|`.
    None,
}

fn cepstrally_smoothed(spec_half: &[Complex64], dft_size: usize, order: usize) -> Vec<f64> {
    let half = dft_size / 2;
    let mut buf: Vec<Complex64> = (0..dft_size)
        .map(|k| {
            let b = if k <= half { k } else { dft_size - k };
            Complex64::new(floored_ln(spec_half[b].norm()), 0.0)
        })
        .collect();
    fft_inverse(&mut buf);
    let keep = order.clamp(1, half);
    for (q, c) in buf.iter_mut().enumerate() {
        let lag = q.min(dft_size - q);
        if lag >= keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    fft_forward(&mut buf);
    buf[..=half].iter().map(|c| c.re.exp()).collect()
}

/// `τ(k) = sgn(N)·|N / H^{2γ}|^α` with `N = X_R Y_R + X_I Y_I`, `X = DFT(x)`
/// and `Y = DFT(n·x)`, over bins `0..=K/2`.
pub fn modified_group_delay(
    frame: &[f64],
    dft_size: usize,
    alpha: f64,
    gamma: f64,
    smoothing: Smoothing,
) -> Vec<f64> {
    let x = real_dft_half(frame, dft_size);
    let nx: Vec<f64> = frame.iter().enumerate().map(|(n, v)| n as f64 * v).collect();
    let y = real_dft_half(&nx, dft_size);
    let h: Vec<f64> = match smoothing {
        Smoothing::Cepstral(order) => cepstrally_smoothed(&x, dft_size, order),
        Smoothing::None => x.iter().map(|c| c.norm()).collect(),
    };
    x.iter()
        .zip(&y)
        .zip(&h)
        .map(|((a, b), &hk)| {
            let num = a.re * b.re + a.im * b.im;
            if num == 0.0 {
                return 0.0;
            }
            let tau = num / hk.max(1e-10).powf(2.0 * gamma);
            tau.signum() * tau.abs().powf(alpha)
        })
        .collect()
}

pub fn mgd_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let frames = analysis_frames(signal, config)?;
    crate::dsp::check_dft_size(frames.frame_len, config.dft_size)?;
    let smoothing = Smoothing::Cepstral(config.mgd_cepstral_order);
    Matrix::from_rows(
        config.n_coeffs,
        frames.frames.iter_rows().map(|r| {
            let tau = modified_group_delay(r, config.dft_size, config.mgd_alpha, config.mgd_gamma, smoothing);
            dct_row(&tau, config.n_coeffs)
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn classical_group_delay_of_single_pole() {
        let a: f64 = 0.8;
        let frame: Vec<f64> = (0..400).map(|n| a.powi(n)).collect();
        let tau = modified_group_delay(&frame, 512, 1.0, 1.0, Smoothing::None);
        for (k, t) in tau.iter().enumerate() {
            let w = 2.0 * PI * k as f64 / 512.0;
            let exact = (a * w.cos() - a * a) / (1.0 - 2.0 * a * w.cos() + a * a);
            assert!((t - exact).abs() <= 0.05 * exact.abs().max(0.1), "bin {k}: {t} vs {exact}");
        }
    }

    #[test]
    fn negation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f: Vec<f64> = (0..320).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = f.iter().map(|v| -v).collect();
        let s = Smoothing::Cepstral(30);
        assert_eq!(
            modified_group_delay(&f, 512, 0.3, 0.1, s),
            modified_group_delay(&g, 512, 0.3, 0.1, s)
        );
    }

    #[test]
    fn zero_frame_is_zero_row() {
        let tau = modified_group_delay(&[0.0; 320], 512, 0.3, 0.1, Smoothing::Cepstral(30));
        assert!(tau.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cepstral_smoothing_of_flat_spectrum_is_flat() {
        let mut f = vec![0.0; 320];
        f[0] = 2.0;
        let x = real_dft_half(&f, 512);
        let h = cepstrally_smoothed(&x, 512, 30);
        assert!(h.iter().all(|v| (v - 2.0).abs() < 1e-9));
    }
}
