//! Single-channel enhancement by spectral subtraction and Wiener filtering on
//! a 512-point sqrt-Hann STFT at 50% overlap.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft_forward, fft_inverse, ms_to_samples, AudioSignal};
use crate::error::{Error, Result};

pub const STFT_SIZE: usize = 512;
pub const STFT_HOP: usize = STFT_SIZE / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubtractionDomain {
    Magnitude,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnhanceMethod {
    #[serde(rename = "specsub-mag")]
    SpecSubMagnitude,
    #[serde(rename = "specsub-pow")]
    SpecSubPower,
    #[serde(rename = "wiener")]
    Wiener,
}

impl EnhanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            EnhanceMethod::SpecSubMagnitude => "specsub-mag",
            EnhanceMethod::SpecSubPower => "specsub-pow",
            EnhanceMethod::Wiener => "wiener",
        }
    }
}

impl fmt::Display for EnhanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnhanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "specsub-mag" => Ok(EnhanceMethod::SpecSubMagnitude),
            "specsub-pow" => Ok(EnhanceMethod::SpecSubPower),
            "wiener" => Ok(EnhanceMethod::Wiener),
            _ => Err(Error::invalid(format!("unknown enhancement method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    pub noise_lead_ms: f64,
    pub oversubtraction: f64,
    pub floor: f64,
    /// Decision-directed smoothing constant of the a-priori SNR.
    pub dd_alpha: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            noise_lead_ms: 120.0,
            oversubtraction: 1.0,
            floor: 0.02,
            dd_alpha: 0.98,
        }
    }
}

/// Mean noise magnitude and power per STFT bin.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub magnitude: Vec<f64>,
    pub power: Vec<f64>,
    pub n_frames_estimated: usize,
}

impl NoiseProfile {
    pub fn zero() -> Self {
        Self {
            magnitude: vec![0.0; STFT_SIZE / 2 + 1],
            power: vec![0.0; STFT_SIZE / 2 + 1],
            n_frames_estimated: 0,
        }
    }
}

/// Periodic Hann, square-rooted: `w²` sums to one at 50% overlap.
fn sqrt_hann() -> Vec<f64> {
    (0..STFT_SIZE)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / STFT_SIZE as f64).cos()).sqrt())
        .collect()
}

fn analyze(x: &[f64], start: usize, w: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..STFT_SIZE)
        .map(|i| Complex64::new(x.get(start + i).copied().unwrap_or(0.0) * w[i], 0.0))
        .collect();
    fft_forward(&mut buf);
    buf
}

/// Averages the spectra of the frames lying entirely in the leading `lead_ms`.
pub fn estimate_noise(signal: &AudioSignal, lead_ms: f64) -> Result<NoiseProfile> {
    let lead = ms_to_samples(lead_ms, signal.sample_rate());
    if signal.len() < lead {
        return Err(Error::invalid(format!(
            "signal has {} samples, noise estimation needs {lead}",
            signal.len()
        )));
    }
    if lead < STFT_SIZE {
        return Err(Error::invalid(format!(
            "noise lead of {lead} samples is shorter than one {STFT_SIZE}-sample frame"
        )));
    }
    let w = sqrt_hann();
    let n_frames = (lead - STFT_SIZE) / STFT_HOP + 1;
    let bins = STFT_SIZE / 2 + 1;
    let mut magnitude = vec![0.0; bins];
    let mut power = vec![0.0; bins];
    for f in 0..n_frames {
        let spec = analyze(signal.samples(), f * STFT_HOP, &w);
        for k in 0..bins {
            magnitude[k] += spec[k].norm();
            power[k] += spec[k].norm_sqr();
        }
    }
    let n = n_frames as f64;
    magnitude.iter_mut().for_each(|v| *v /= n);
    power.iter_mut().for_each(|v| *v /= n);
    Ok(NoiseProfile {
        magnitude,
        power,
        n_frames_estimated: n_frames,
    })
}

/// STFT → per-frame real gain on bins `0..=K/2` → overlap-add. The signal is
/// padded by one hop on both sides so every output sample is covered twice.
fn process<G>(signal: &AudioSignal, mut gain: G) -> Result<AudioSignal>
where
    G: FnMut(&[Complex64], &mut [f64]),
{
    let n = signal.len();
    let w = sqrt_hann();
    let mut padded = vec![0.0; STFT_HOP];
    padded.extend_from_slice(signal.samples());
    let n_frames = n.div_ceil(STFT_HOP) + 1;
    padded.resize((n_frames + 1) * STFT_HOP, 0.0);
    let mut out = vec![0.0; padded.len()];
    let bins = STFT_SIZE / 2 + 1;
    let mut g = vec![1.0; bins];
    for f in 0..n_frames {
        let start = f * STFT_HOP;
        let mut spec = analyze(&padded, start, &w);
        g.iter_mut().for_each(|v| *v = 1.0);
        gain(&spec[..bins], &mut g);
        for k in 0..STFT_SIZE {
            let b = if k < bins { k } else { STFT_SIZE - k };
            spec[k] *= g[b];
        }
        fft_inverse(&mut spec);
        for i in 0..STFT_SIZE {
            out[start + i] += spec[i].re * w[i];
        }
    }
    signal.with_samples(out[STFT_HOP..STFT_HOP + n].to_vec())
}

fn check_profile(profile: &NoiseProfile) -> Result<()> {
    let bins = STFT_SIZE / 2 + 1;
    if profile.magnitude.len() != bins || profile.power.len() != bins {
        return Err(Error::DimensionMismatch {
            expected: bins,
            found: profile.magnitude.len(),
        });
    }
    Ok(())
}

/// Subtracts `oversubtraction · profile` in the chosen domain, floors at
/// `floor · profile`, keeps the noisy phase.
pub fn spectral_subtract(
    signal: &AudioSignal,
    profile: &NoiseProfile,
    domain: SubtractionDomain,
    oversubtraction: f64,
    floor: f64,
) -> Result<AudioSignal> {
    check_profile(profile)?;
    process(signal, |spec, g| {
        for (k, c) in spec.iter().enumerate() {
            let mag = c.norm();
            if mag == 0.0 {
                continue;
            }
            g[k] = match domain {
                SubtractionDomain::Magnitude => {
                    let n = profile.magnitude[k];
                    (mag - oversubtraction * n).max(floor * n) / mag
                }
                SubtractionDomain::Power => {
                    let n = profile.power[k];
                    let p = mag * mag;
                    ((p - oversubtraction * n).max(floor * n) / p).sqrt()
                }
            };
        }
    })
}

/// Wiener gain `max(ξ/(1+ξ), floor)` with decision-directed a-priori SNR.
pub fn wiener_filter(
    signal: &AudioSignal,
    profile: &NoiseProfile,
    dd_alpha: f64,
    floor: f64,
) -> Result<AudioSignal> {
    check_profile(profile)?;
    let bins = STFT_SIZE / 2 + 1;
    // |Ŝ|²/λ of the previous frame; None before the first frame
    let mut prev: Option<Vec<f64>> = None;
    process(signal, |spec, g| {
        let mut cur = vec![0.0; bins];
        for (k, c) in spec.iter().enumerate() {
            let lambda = profile.power[k];
            if lambda <= 0.0 {
                g[k] = 1.0;
                cur[k] = 0.0;
                continue;
            }
            let post = c.norm_sqr() / lambda;
            let ml = (post - 1.0).max(0.0);
            let xi = match &prev {
                Some(p) => dd_alpha * p[k] + (1.0 - dd_alpha) * ml,
                None => dd_alpha + (1.0 - dd_alpha) * ml,
            };
            let gk = (xi / (1.0 + xi)).max(floor);
            g[k] = gk;
            cur[k] = gk * gk * post;
        }
        prev = Some(cur);
    })
}

/// Estimates the noise from the leading segment and applies `method`.
pub fn enhance(signal: &AudioSignal, method: EnhanceMethod, config: &EnhanceConfig) -> Result<AudioSignal> {
    let profile = estimate_noise(signal, config.noise_lead_ms)?;
    match method {
        EnhanceMethod::SpecSubMagnitude => spectral_subtract(
            signal,
            &profile,
            SubtractionDomain::Magnitude,
            config.oversubtraction,
            config.floor,
        ),
        EnhanceMethod::SpecSubPower => spectral_subtract(
            signal,
            &profile,
            SubtractionDomain::Power,
            config.oversubtraction,
            config.floor,
        ),
        EnhanceMethod::Wiener => wiener_filter(signal, &profile, config.dd_alpha, config.floor),
    }
}
