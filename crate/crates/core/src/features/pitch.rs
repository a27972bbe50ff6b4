use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::dsp::{fft_forward, fft_inverse, ms_to_samples, AudioSignal};

#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    pub window_ms: f64,
    pub shift_ms: f64,
    /// Length of the feature frames whose centers the analysis windows share.
    pub frame_ms: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
    /// Frames quieter than the loudest one by more than this are unvoiced.
    pub silence_db: f64,
    /// Octave guard: the smallest lag whose peak reaches this fraction of the best wins.
    pub octave_ratio: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            window_ms: 100.0,
            shift_ms: 10.0,
            frame_ms: 20.0,
            f0_min: 50.0,
            f0_max: 500.0,
            voicing_threshold: 0.3,
            silence_db: 50.0,
            octave_ratio: 0.85,
        }
    }
}

/// Per-frame F0 in Hz, 0 where unvoiced.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub f0: Vec<f64>,
    pub window_ms: f64,
    pub shift_ms: f64,
}

impl F0Track {
    pub fn n_voiced(&self) -> usize {
        self.f0.iter().filter(|&&f| f > 0.0).count()
    }
}

fn autocorrelation(x: &[f64], size: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    fft_forward(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    fft_inverse(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Autocorrelation pitch tracker. Each window is Hann-weighted and centered on
/// a feature frame; the windowed autocorrelation is divided by that of the
/// window itself before peak picking, and the peak lag is refined parabolically.
pub fn estimate_f0(signal: &AudioSignal, config: &PitchConfig) -> F0Track {
    let sr = signal.sample_rate();
    let x = signal.samples();
    let frame_len = ms_to_samples(config.frame_ms, sr);
    let shift = ms_to_samples(config.shift_ms, sr).max(1);
    let win_len = ms_to_samples(config.window_ms, sr).max(3);
    let n_frames = if x.len() < frame_len || frame_len == 0 {
        0
    } else {
        (x.len() - frame_len) / shift + 1
    };
    let hann: Vec<f64> = (0..win_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / win_len as f64).cos())
        .collect();
    let size = (2 * win_len).next_power_of_two();
    let rw = autocorrelation(&hann, size);
    let lag_min = (sr as f64 / config.f0_max).floor().max(1.0) as usize;
    let lag_max = ((sr as f64 / config.f0_min).ceil() as usize).min(win_len - 2);

    let segments: Vec<(Vec<f64>, f64)> = (0..n_frames)
        .map(|t| {
            let center = (t * shift + frame_len / 2) as isize;
            let start = center - (win_len / 2) as isize;
            let raw: Vec<f64> = (0..win_len as isize)
                .map(|i| {
                    let j = start + i;
                    if j >= 0 && (j as usize) < x.len() {
                        x[j as usize]
                    } else {
                        0.0
                    }
                })
                .collect();
            let mean = raw.iter().sum::<f64>() / win_len as f64;
            let seg: Vec<f64> = raw.iter().zip(&hann).map(|(v, w)| (v - mean) * w).collect();
            let e = seg.iter().map(|v| v * v).sum::<f64>();
            (seg, e)
        })
        .collect();
    let loudest = segments.iter().map(|s| s.1).fold(0.0, f64::max);
    let floor = loudest * 10f64.powf(-config.silence_db / 10.0);

    let f0 = segments
        .iter()
        .map(|(seg, e)| {
            if *e <= 0.0 || *e < floor || lag_max <= lag_min + 1 {
                return 0.0;
            }
            let ra = autocorrelation(seg, size);
            let r: Vec<f64> = (0..=lag_max + 1)
                .map(|l| (ra[l] / ra[0]) / (rw[l] / rw[0]))
                .collect();
            let peaks: Vec<usize> = (lag_min.max(1)..=lag_max)
                .filter(|&l| r[l] > r[l - 1] && r[l] >= r[l + 1])
                .collect();
            let best = peaks.iter().map(|&l| r[l]).fold(f64::NEG_INFINITY, f64::max);
            if !(best >= config.voicing_threshold) {
                return 0.0;
            }
            let l = peaks
                .into_iter()
                .find(|&l| r[l] >= config.octave_ratio * best)
                .expect("best peak qualifies");
            let (a, b, c) = (r[l - 1], r[l], r[l + 1]);
            let denom = a - 2.0 * b + c;
            let delta = if denom.abs() > 1e-12 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let f = sr as f64 / (l as f64 + delta);
            if f >= config.f0_min && f <= config.f0_max {
                f
            } else {
                0.0
            }
        })
        .collect();
    F0Track {
        f0,
        window_ms: config.window_ms,
        shift_ms: config.shift_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn pulse_train_200hz() {
        let x: Vec<f64> = (0..16_000).map(|i| if i % 80 == 0 { 1.0 } else { 0.0 }).collect();
        let tr = estimate_f0(&AudioSignal::new(x, 16_000).unwrap(), &PitchConfig::default());
        let voiced: Vec<f64> = tr.f0.iter().copied().filter(|&f| f > 0.0).collect();
        assert!(voiced.len() > tr.f0.len() * 9 / 10);
        assert!((median(voiced) - 200.0).abs() < 2.0);
    }

    #[test]
    fn non_integer_period_tone_complex() {
        let f0 = 123.4;
        let x: Vec<f64> = (0..16_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                (1..6).map(|k| (2.0 * PI * k as f64 * f0 * t).sin() / k as f64).sum()
            })
            .collect();
        let tr = estimate_f0(&AudioSignal::new(x, 16_000).unwrap(), &PitchConfig::default());
        let voiced: Vec<f64> = tr.f0.iter().copied().filter(|&f| f > 0.0).collect();
        assert!((median(voiced) - f0).abs() < 1.0);
    }

    #[test]
    fn white_noise_mostly_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x: Vec<f64> = (0..32_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let tr = estimate_f0(&AudioSignal::new(x, 16_000).unwrap(), &PitchConfig::default());
        assert!(tr.n_voiced() * 10 <= tr.f0.len());
    }

    #[test]
    fn silence_unvoiced_and_grid_matches_features() {
        let tr = estimate_f0(&AudioSignal::new(vec![0.0; 16_000], 16_000).unwrap(), &PitchConfig::default());
        assert_eq!(tr.f0.len(), 99);
        assert_eq!(tr.n_voiced(), 0);
    }
}
