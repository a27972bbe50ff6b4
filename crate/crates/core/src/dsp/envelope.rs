use std::f64::consts::{PI, SQRT_2};

use rustfft::num_complex::Complex64;

use super::spectrum::{fft_forward, fft_inverse};

/// Squared magnitude of the analytic signal, built in the frequency domain
/// (positive bins doubled, negative bins zeroed).
pub fn analytic_envelope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let keep_single = k == 0 || (n % 2 == 0 && k == half);
        if keep_single {
            continue;
        }
        if k < n.div_ceil(2) {
            *c *= 2.0;
        } else {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    fft_inverse(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Second-order IIR section in transposed direct form II.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Butterworth (Q = 1/√2) low-pass via the bilinear transform.
    pub fn lowpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let alpha = w0.sin() / (2.0 / SQRT_2);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cos) / a0;
        Biquad {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    /// Filters `x`, starting from the steady state of a constant input equal to `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let x0 = x.first().copied().unwrap_or(0.0);
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let y0 = dc * x0;
        let mut z2 = b2 * x0 - a2 * y0;
        let mut z1 = b1 * x0 - a1 * y0 + z2;
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }
}

/// Forward-backward low-pass: zero phase, squared magnitude response.
pub fn lowpass_zero_phase(x: &[f64], cutoff_hz: f64, sample_rate: f64) -> Vec<f64> {
    let f = Biquad::lowpass(cutoff_hz, sample_rate);
    let mut y = f.filter(x);
    y.reverse();
    let mut z = f.filter(&y);
    z.reverse();
    z
}
