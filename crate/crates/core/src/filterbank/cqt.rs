use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::dsp::{fft_forward, fft_inverse, ms_to_samples, AudioSignal};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Constant-Q analysis parameters: geometric bin centers `f_min·2^{b/B}` with
/// bandwidth `f_b / Q`, evaluated on a frame grid shared with the STFT features.
#[derive(Debug, Clone)]
pub struct CqtKernel {
    pub bins_per_octave: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub q: f64,
    pub center_freqs: Vec<f64>,
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub shift_ms: f64,
}

impl CqtKernel {
    pub fn new(sample_rate: u32, bins_per_octave: usize, f_min: f64, f_max: f64) -> Result<Self> {
        if bins_per_octave == 0 {
            return Err(Error::invalid("bins per octave must be positive"));
        }
        if !(f_min > 0.0) {
            return Err(Error::invalid("CQT minimum frequency must be positive"));
        }
        if f_min >= f_max {
            return Err(Error::invalid(format!(
                "CQT minimum frequency {f_min} Hz is not below maximum {f_max} Hz"
            )));
        }
        if f_max > sample_rate as f64 / 2.0 {
            return Err(Error::invalid("CQT maximum frequency exceeds Nyquist"));
        }
        let b = bins_per_octave as f64;
        let n_bins = (b * (f_max / f_min).log2()).ceil() as usize;
        let center_freqs = (0..n_bins).map(|k| f_min * 2f64.powf(k as f64 / b)).collect();
        Ok(Self {
            bins_per_octave,
            f_min,
            f_max,
            q: 1.0 / (2f64.powf(1.0 / b) - 1.0),
            center_freqs,
            sample_rate,
            frame_ms: 20.0,
            shift_ms: 10.0,
        })
    }

    /// 96 bins per octave over nine octaves below Nyquist.
    pub fn reference(sample_rate: u32) -> Result<Self> {
        let f_max = sample_rate as f64 / 2.0;
        Self::new(sample_rate, 96, f_max / 512.0, f_max)
    }

    pub fn n_bins(&self) -> usize {
        self.center_freqs.len()
    }
}

/// Constant-Q power per frame; `bandwidth_norm[b]` is the squared kernel
/// mass of bin `b`, by which white noise power scales.
#[derive(Debug, Clone)]
pub struct CqtPower {
    pub power: Matrix,
    pub bandwidth_norm: Vec<f64>,
}

/// Constant-Q power on the kernel's frame grid. Each bin is a Hann window in
/// frequency applied to the whole-signal DFT; the band-limited result is
/// evaluated at its critical rate and linearly resampled to the frame centers.
pub fn cqt(signal: &AudioSignal, kernel: &CqtKernel) -> Result<CqtPower> {
    if signal.sample_rate() != kernel.sample_rate {
        return Err(Error::invalid("signal and CQT kernel sample rates differ"));
    }
    let x = signal.samples();
    let sr = kernel.sample_rate as f64;
    let frame_len = ms_to_samples(kernel.frame_ms, kernel.sample_rate);
    let shift = ms_to_samples(kernel.shift_ms, kernel.sample_rate).max(1);
    let n_frames = if x.len() < frame_len || frame_len == 0 {
        0
    } else {
        (x.len() - frame_len) / shift + 1
    };
    let n_bins = kernel.n_bins();
    let size = (2 * x.len()).max(2).next_power_of_two();
    let mut spec: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); size];
    for (c, &v) in spec.iter_mut().zip(x) {
        c.re = v;
    }
    fft_forward(&mut spec);

    let df = sr / size as f64;
    let nyq_bin = size / 2;
    let centers: Vec<f64> = (0..n_frames)
        .map(|t| (t * shift) as f64 + frame_len as f64 / 2.0)
        .collect();
    let mut power = Matrix::zeros(n_frames, n_bins);
    let mut bandwidth_norm = Vec::with_capacity(n_bins);
    for (b, &fc) in kernel.center_freqs.iter().enumerate() {
        let half = (fc / kernel.q).max(df);
        let lo = (((fc - half) / df).ceil().max(0.0)) as usize;
        let hi = (((fc + half) / df).floor() as usize).min(nyq_bin);
        let weight = |j: usize| {
            let d = (j as f64 * df - fc) / half;
            if d.abs() < 1.0 {
                0.5 * (1.0 + (PI * d).cos())
            } else {
                0.0
            }
        };
        let support = if hi >= lo { hi - lo + 1 } else { 0 };
        let mut norm = 0.0;
        if support == 0 {
            bandwidth_norm.push(0.0);
            continue;
        }
        let p = support.next_power_of_two();
        let mut band = vec![Complex64::new(0.0, 0.0); p];
        for j in lo..=hi {
            let w = weight(j);
            norm += w * w;
            band[j - lo] = spec[j] * w;
        }
        bandwidth_norm.push(norm);
        // unnormalized inverse DFT: undo the 1/p of fft_inverse
        fft_inverse(&mut band);
        let scale = p as f64 / size as f64;
        let mags: Vec<f64> = band.iter().map(|c| (c * scale).norm_sqr()).collect();
        for (t, &tc) in centers.iter().enumerate() {
            let u = tc * p as f64 / size as f64;
            let i0 = u.floor() as usize % p;
            let i1 = (i0 + 1) % p;
            let frac = u - u.floor();
            power.set(t, b, mags[i0] * (1.0 - frac) + mags[i1] * frac);
        }
    }
    Ok(CqtPower {
        power,
        bandwidth_norm,
    })
}
