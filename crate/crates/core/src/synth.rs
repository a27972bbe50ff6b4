//! Toy voice production: glottal pulse trains shaped by resonators.

use std::f64::consts::PI;

use rand::Rng;

/// Two-pole resonator at `freq` Hz with `bandwidth` Hz, unit gain at DC removed.
pub fn resonate(x: &[f64], freq: f64, bandwidth: f64, sample_rate: f64) -> Vec<f64> {
    let r = (-PI * bandwidth / sample_rate).exp();
    let theta = 2.0 * PI * freq / sample_rate;
    let a1 = -2.0 * r * theta.cos();
    let a2 = r * r;
    let g = 1.0 - r;
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = g * v - a1 * y1 - a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Glottal-like excitation: one smoothed pulse per period with F0 following
/// `f0_at(t)` (Hz as a function of seconds).
pub fn pulse_train(n: usize, sample_rate: f64, f0_at: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let mut phase = 0.0;
    for (i, v) in x.iter_mut().enumerate() {
        let f0 = f0_at(i as f64 / sample_rate);
        phase += f0 / sample_rate;
        if phase >= 1.0 {
            phase -= 1.0;
            *v = 1.0;
        }
    }
    // Rosenberg-ish shaping: a short decaying pulse instead of a bare impulse
    let shape: Vec<f64> = (0..24).map(|i| (-(i as f64) / 4.0).exp()).collect();
    let mut y = vec![0.0; n];
    for (i, &v) in x.iter().enumerate() {
        if v != 0.0 {
            for (j, s) in shape.iter().enumerate() {
                if i + j < n {
                    y[i + j] += v * s;
                }
            }
        }
    }
    y
}

/// A vowel-like talker: jittered pulse train through three formants, with a
/// syllabic amplitude envelope.
pub fn toy_talker<R: Rng>(n: usize, sample_rate: f64, rng: &mut R) -> Vec<f64> {
    let f0 = rng.random_range(90.0..250.0);
    let vib_rate = rng.random_range(3.0..6.0);
    let vib_depth = rng.random_range(0.02..0.08);
    let excitation = pulse_train(n, sample_rate, |t| {
        f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin())
    });
    let formants = [
        (rng.random_range(300.0..900.0), rng.random_range(60.0..120.0)),
        (rng.random_range(900.0..2_400.0), rng.random_range(80.0..160.0)),
        (rng.random_range(2_400.0..3_500.0), rng.random_range(100.0..200.0)),
    ];
    let mut y = vec![0.0; n];
    for (f, b) in formants {
        for (acc, v) in y.iter_mut().zip(resonate(&excitation, f, b, sample_rate)) {
            *acc += v;
        }
    }
    let syll = rng.random_range(2.5..5.0);
    let ph = rng.random_range(0.0..1.0);
    for (i, v) in y.iter_mut().enumerate() {
        let t = i as f64 / sample_rate;
        *v *= (PI * (syll * t + ph)).sin().abs().powf(0.7);
    }
    y
}
