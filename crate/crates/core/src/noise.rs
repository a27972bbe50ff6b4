//! Additive-noise contamination at a target SNR measured against the
//! active speech level.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{energy_vad, frame_signal, lowpass_zero_phase, AudioSignal, Window, DEFAULT_VAD_THRESHOLD_DB};
use crate::error::{Error, Result};
use crate::synth::toy_talker;

const ENVELOPE_TIME_CONSTANT_S: f64 = 0.03;
const HANGOVER_S: f64 = 0.2;
const MARGIN_DB: f64 = 15.9;
const LADDER_STEP_DB: f64 = 1.0;
const LADDER_STEPS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMethod {
    P56Active,
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeechLevel {
    /// Active level in dB re. unit-amplitude mean square.
    pub level_db: f64,
    pub activity: f64,
}

impl SpeechLevel {
    pub fn power(&self) -> f64 {
        10f64.powf(self.level_db / 10.0)
    }
}

/// Envelope/threshold-ladder active speech level. The rectified signal is
/// smoothed twice with a 30 ms time constant; for each threshold on a 1 dB
/// ladder below the envelope peak, samples within a 200 ms hangover of an
/// envelope crossing count as active. Scanning thresholds upwards, the level
/// is read where the active power first falls to 15.9 dB above the threshold.
pub fn active_speech_level(signal: &AudioSignal) -> Result<SpeechLevel> {
    let x = signal.samples();
    let sr = signal.sample_rate() as f64;
    let total: f64 = x.iter().map(|v| v * v).sum();
    if x.is_empty() || total <= 0.0 {
        return Err(Error::NoActiveSpeech);
    }
    let g = (-1.0 / (ENVELOPE_TIME_CONSTANT_S * sr)).exp();
    let (mut p, mut q) = (0.0, 0.0);
    let env: Vec<f64> = x
        .iter()
        .map(|v| {
            p = g * p + (1.0 - g) * v.abs();
            q = g * q + (1.0 - g) * p;
            q
        })
        .collect();
    let peak = env.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::NoActiveSpeech);
    }
    let hang = (HANGOVER_S * sr).round() as usize;
    let n = x.len() as f64;
    let mut prev: Option<(f64, f64, f64)> = None; // (delta, active dB, activity)
    // thresholds ascend towards the peak; the margin is crossed from above
    for j in (0..LADDER_STEPS).rev() {
        let c_db = 20.0 * peak.log10() - j as f64 * LADDER_STEP_DB;
        let c = 10f64.powf(c_db / 20.0);
        let mut count = 0usize;
        let mut since = usize::MAX;
        for &e in &env {
            if e >= c {
                since = 0;
            } else if since != usize::MAX {
                since += 1;
            }
            if since <= hang {
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let a_db = 10.0 * (total / count as f64).log10();
        let delta = a_db - c_db;
        let activity = count as f64 / n;
        if delta <= MARGIN_DB {
            let (level_db, act) = match prev {
                Some((d0, a0, act0)) if d0 > delta => {
                    let r = (MARGIN_DB - d0) / (delta - d0);
                    (a0 + r * (a_db - a0), act0 + r * (activity - act0))
                }
                _ => (a_db, activity),
            };
            return Ok(SpeechLevel {
                level_db,
                activity: act,
            });
        }
        prev = Some((delta, a_db, activity));
    }
    // margin never reached
    Ok(SpeechLevel {
        level_db: 10.0 * (total / n).log10(),
        activity: 1.0,
    })
}

/// Mean square over the samples of energy-VAD speech frames (20 ms / 10 ms).
pub fn rms_speech_level(signal: &AudioSignal) -> Result<SpeechLevel> {
    let frames = frame_signal(signal, 20.0, 10.0, Window::Rectangular)?;
    let vad = energy_vad(&frames, DEFAULT_VAD_THRESHOLD_DB);
    let mut active = vec![false; signal.len()];
    for (t, &f) in vad.flags.iter().enumerate() {
        if f {
            let s = t * frames.shift;
            active[s..s + frames.frame_len].iter_mut().for_each(|a| *a = true);
        }
    }
    let (sum, count) = signal
        .samples()
        .iter()
        .zip(&active)
        .filter(|(_, &a)| a)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v * v, c + 1));
    if count == 0 || sum <= 0.0 {
        return Err(Error::NoActiveSpeech);
    }
    Ok(SpeechLevel {
        level_db: 10.0 * (sum / count as f64).log10(),
        activity: count as f64 / signal.len() as f64,
    })
}

pub fn speech_level(signal: &AudioSignal, method: LevelMethod) -> Result<SpeechLevel> {
    match method {
        LevelMethod::P56Active => active_speech_level(signal),
        LevelMethod::Rms => rms_speech_level(signal),
    }
}

/// Unit-variance Gaussian white noise from a seeded ChaCha8 stream.
pub fn gen_white_noise(length: usize, seed: u64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::invalid("noise length must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..length).map(|_| StandardNormal.sample(&mut rng)).collect())
}

fn unit_power(mut x: Vec<f64>) -> Vec<f64> {
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if p > 0.0 {
        let s = p.sqrt();
        x.iter_mut().for_each(|v| *v /= s);
    }
    x
}

/// White noise through a 4th-order 500 Hz zero-phase low-pass, unit power.
pub fn car_noise_surrogate(length: usize, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
    let w = gen_white_noise(length, seed)?;
    Ok(unit_power(lowpass_zero_phase(&w, 500.0, sample_rate as f64)))
}

/// Sum of independent toy talkers, unit power.
pub fn babble_surrogate(length: usize, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::invalid("noise length must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; length];
    for _ in 0..8 {
        let t = unit_power(toy_talker(length, sample_rate as f64, &mut rng));
        acc.iter_mut().zip(t).for_each(|(a, v)| *a += v);
    }
    Ok(unit_power(acc))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    /// Generated per mix from the mixing seed.
    White,
    CarSurrogate,
    BabbleSurrogate,
    /// Recorded noise; segments start at a random offset and wrap around.
    Samples { label: String, samples: Vec<f64> },
}

impl NoiseSource {
    pub fn label(&self) -> &str {
        match self {
            NoiseSource::White => "white",
            NoiseSource::CarSurrogate => "car",
            NoiseSource::BabbleSurrogate => "babble",
            NoiseSource::Samples { label, .. } => label,
        }
    }

    /// A `length`-sample noise segment.
    pub fn segment(&self, length: usize, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
        match self {
            NoiseSource::White => gen_white_noise(length, seed),
            NoiseSource::CarSurrogate => car_noise_surrogate(length, sample_rate, seed),
            NoiseSource::BabbleSurrogate => babble_surrogate(length, sample_rate, seed),
            NoiseSource::Samples { samples, .. } => {
                if samples.is_empty() {
                    return Err(Error::invalid("noise file is empty"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let span = if samples.len() > length { samples.len() - length } else { samples.len() - 1 };
                let offset = if span == 0 { 0 } else { rng.random_range(0..=span) };
                Ok((0..length).map(|i| samples[(offset + i) % samples.len()]).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    /// `f64::INFINITY` bypasses mixing.
    pub snr_db: f64,
    pub level_method: LevelMethod,
}

impl MixSpec {
    pub fn new(snr_db: f64) -> Self {
        Self {
            snr_db,
            level_method: LevelMethod::P56Active,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixResult {
    pub signal: AudioSignal,
    /// Gain applied to the noise segment before addition.
    pub noise_gain: f64,
    /// Whole-mixture attenuation applied to avoid clipping (1 when none).
    pub clip_gain: f64,
    /// Samples of the unattenuated mixture outside `[-1, 1]`.
    pub clipped_samples: usize,
    pub measured_snr_db: f64,
}

/// Adds `g · noise` with `g = sqrt(P_active / (P_noise · 10^{snr/10}))`.
pub fn mix_at_snr(signal: &AudioSignal, noise: &NoiseSource, spec: &MixSpec, seed: u64) -> Result<MixResult> {
    if spec.snr_db == f64::INFINITY {
        return Ok(MixResult {
            signal: signal.clone(),
            noise_gain: 0.0,
            clip_gain: 1.0,
            clipped_samples: 0,
            measured_snr_db: f64::INFINITY,
        });
    }
    if !spec.snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite or +inf"));
    }
    let level = speech_level(signal, spec.level_method)?;
    let seg = noise.segment(signal.len(), signal.sample_rate(), seed)?;
    let p_noise = seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64;
    if p_noise <= 0.0 {
        return Err(Error::invalid("noise segment has zero power"));
    }
    let g = (level.power() / (p_noise * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    let mut mixed: Vec<f64> = signal.samples().iter().zip(&seg).map(|(s, n)| s + g * n).collect();
    let clipped = mixed.iter().filter(|v| v.abs() > 1.0).count();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let clip_gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if clip_gain < 1.0 {
        log::warn!(
            "{} samples exceed full scale; mixture attenuated by {:.2} dB",
            clipped,
            -20.0 * clip_gain.log10()
        );
        mixed.iter_mut().for_each(|v| *v *= clip_gain);
    }
    let measured = level.level_db - 10.0 * (g * g * p_noise).log10();
    Ok(MixResult {
        signal: signal.with_samples(mixed)?,
        noise_gain: g,
        clip_gain,
        clipped_samples: clipped,
        measured_snr_db: measured,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NoiseKind {
    White,
    Car,
    Babble,
    File(String),
}

impl NoiseKind {
    pub fn source(&self) -> Result<NoiseSource> {
        Ok(match self {
            NoiseKind::White => NoiseSource::White,
            NoiseKind::Car => NoiseSource::CarSurrogate,
            NoiseKind::Babble => NoiseSource::BabbleSurrogate,
            NoiseKind::File(path) => {
                let s = crate::io::read_wav(std::path::Path::new(path))?;
                NoiseSource::Samples {
                    label: path.clone(),
                    samples: s.into_samples(),
                }
            }
        })
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::White => f.write_str("white"),
            NoiseKind::Car => f.write_str("car"),
            NoiseKind::Babble => f.write_str("babble"),
            NoiseKind::File(p) => write!(f, "file:{p}"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "car" => Ok(NoiseKind::Car),
            "babble" => Ok(NoiseKind::Babble),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(NoiseKind::File(p.to_string())),
                _ => Err(Error::invalid(format!("unknown noise `{s}`"))),
            },
        }
    }
}

impl TryFrom<String> for NoiseKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NoiseKind> for String {
    fn from(k: NoiseKind) -> String {
        k.to_string()
    }
}
