use std::f64::consts::PI;

use super::{analysis_frames, FeatureConfig};
use crate::dsp::{dct_row, real_dft_half, AudioSignal};
use crate::error::Result;
use crate::matrix::Matrix;

/// Removes jumps larger than π between consecutive samples by adding
/// multiples of 2π cumulatively.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p - phase[i - 1];
            if d > PI {
                offset -= 2.0 * PI * ((d - PI) / (2.0 * PI)).ceil();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d - PI) / (2.0 * PI)).ceil();
            }
        }
        out.push(p + offset);
    }
    out
}

/// `cos` of the frequency-unwrapped phase of one windowed frame, bins `0..=K/2`.
pub fn cosphase_frame(frame: &[f64], dft_size: usize) -> Vec<f64> {
    let phase: Vec<f64> = real_dft_half(frame, dft_size).iter().map(|c| c.arg()).collect();
    unwrap_phase(&phase).into_iter().map(f64::cos).collect()
}

pub fn cosphase_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let frames = analysis_frames(signal, config)?;
    crate::dsp::check_dft_size(frames.frame_len, config.dft_size)?;
    Matrix::from_rows(
        config.n_coeffs,
        frames
            .frames
            .iter_rows()
            .map(|r| dct_row(&cosphase_frame(r, config.dft_size), config.n_coeffs)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unwrap_removes_jumps() {
        let truth: Vec<f64> = (0..50).map(|i| -0.4 * i as f64).collect();
        let wrapped: Vec<f64> = truth.iter().map(|&v| crate::dsp::wrap_phase(v)).collect();
        let u = unwrap_phase(&wrapped);
        for (a, b) in u.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(u.windows(2).all(|w| (w[1] - w[0]).abs() <= PI));
    }

    #[test]
    fn values_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<f64> = (0..320).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(cosphase_frame(&f, 512).iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_phase_frame_is_constant_row() {
        let mut f = vec![0.0; 320];
        f[0] = 1.0;
        let c = cosphase_frame(&f, 512);
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let d = dct_row(&c, 32);
        assert!((d[0] - 257f64.sqrt()).abs() < 1e-9);
        assert!(d[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn dimensions() {
        let x: Vec<f64> = (0..4_000).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let s = AudioSignal::new(x, 16_000).unwrap();
        let m = cosphase_base(&s, &FeatureConfig::new(FeatureKind::CosPhase)).unwrap();
        assert_eq!((m.rows(), m.cols()), (24, 32));
    }
}
