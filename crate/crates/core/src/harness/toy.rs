use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::seed::derive_seed;
use crate::dsp::{fft_forward, fft_inverse, AudioSignal};
use crate::error::Result;
use crate::io::{write_wav, Manifest, ManifestRow, Subset};
use crate::scores::Label;
use crate::synth::{pulse_train, resonate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyCorpusConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_eval: usize,
    pub n_background: usize,
    pub speakers_per_subset: usize,
    pub sample_rate: u32,
    pub min_secs: f64,
    pub max_secs: f64,
    /// Leading pause drawn from `[1, 1.25] ×` this, before the speech.
    pub lead_secs: f64,
    /// Trailing pause drawn likewise.
    pub tail_secs: f64,
    /// RMS of the background added everywhere, relative to a unit-peak source.
    pub noise_floor: f64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_dev: 100,
            n_eval: 100,
            n_background: 0,
            speakers_per_subset: 10,
            sample_rate: 16000,
            min_secs: 0.8,
            max_secs: 1.2,
            lead_secs: 0.13,
            tail_secs: 0.0,
            noise_floor: 5e-4,
        }
    }
}

/// Vocoder settings per toy attack.
#[derive(Debug, Clone, Copy)]
struct Attack {
    id: &'static str,
    frame: usize,
    /// Bins averaged together in the magnitude; 1 keeps full resolution.
    smooth_bins: usize,
}

const ATTACKS: [Attack; 2] = [
    Attack {
        id: "S1",
        frame: 512,
        smooth_bins: 1,
    },
    Attack {
        id: "S2",
        frame: 256,
        smooth_bins: 3,
    },
];

#[derive(Debug, Clone)]
struct Speaker {
    f0: f64,
    formants: [(f64, f64); 3],
}

impl Speaker {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            f0: rng.random_range(90.0..240.0),
            formants: [
                (rng.random_range(350.0..850.0), rng.random_range(60.0..110.0)),
                (rng.random_range(1000.0..2200.0), rng.random_range(80.0..150.0)),
                (rng.random_range(2500.0..3400.0), rng.random_range(100.0..200.0)),
            ],
        }
    }
}

/// Speech between a leading and trailing pause, over a faint background floor.
fn recording(spk: &Speaker, n: usize, sr: f64, cfg: &ToyCorpusConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lead = ((rng.random_range(1.0..=1.25) * cfg.lead_secs * sr) as usize).min(n / 4);
    let tail = ((rng.random_range(1.0..=1.25) * cfg.tail_secs * sr) as usize).min(n / 8);
    let speech = human_utterance(spk, n - lead - tail, sr, rng);
    let mut y = vec![0.0; n];
    y[lead..lead + speech.len()].copy_from_slice(&speech);
    if cfg.noise_floor > 0.0 {
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += 0.5 * cfg.noise_floor * z;
        }
    }
    normalize_peak(y, 0.5)
}

/// Jittered pulse train through the speaker's formants (shifted per
/// utterance), plus aspiration noise and a syllabic envelope.
fn human_utterance(spk: &Speaker, n: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0 = spk.f0 * rng.random_range(0.9..1.1);
    let (vr, vd) = (rng.random_range(3.0..6.0), rng.random_range(0.02..0.06));
    let glide = rng.random_range(-0.15..0.15);
    let dur = n as f64 / sr;
    let exc = pulse_train(n, sr, |t| f0 * (1.0 + glide * t / dur) * (1.0 + vd * (2.0 * PI * vr * t).sin()));
    let mut y = vec![0.0; n];
    for &(f, b) in &spk.formants {
        let f = f * rng.random_range(0.92..1.08);
        for (acc, v) in y.iter_mut().zip(resonate(&exc, f, b, sr)) {
            *acc += v;
        }
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let syll = rng.random_range(2.5..4.5);
    let ph = rng.random_range(0.0..1.0);
    for (i, v) in y.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let z: f64 = StandardNormal.sample(rng);
        *v = (*v / peak + 0.01 * z) * (PI * (syll * t + ph)).sin().abs().powf(0.6);
    }
    normalize_peak(y, 0.5)
}

fn normalize_peak(mut y: Vec<f64>, target: f64) -> Vec<f64> {
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        y.iter_mut().for_each(|v| *v *= target / peak);
    }
    y
}

/// One windowed frame resynthesized from its (optionally smoothed)
/// magnitude with zero phase, as a pulse centred in the frame.
fn zero_phase_frame(frame: &[f64], w: &[f64], smooth_bins: usize) -> Vec<f64> {
    let n = frame.len();
    let half = n / 2;
    let mut buf: Vec<Complex64> = frame.iter().zip(w).map(|(x, w)| Complex64::new(x * w, 0.0)).collect();
    fft_forward(&mut buf);
    let mag: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
    let mut sm = vec![0.0; n];
    for k in 0..=half {
        let lo = k.saturating_sub(smooth_bins / 2);
        let hi = (k + smooth_bins / 2).min(half);
        sm[k] = mag[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
    }
    for k in half + 1..n {
        sm[k] = sm[n - k];
    }
    let mut spec: Vec<Complex64> = sm.iter().map(|&m| Complex64::new(m, 0.0)).collect();
    fft_inverse(&mut spec);
    (0..n).map(|i| spec[(i + half) % n].re * w[i]).collect()
}

/// Magnitude-only STFT resynthesis with zero phase (half-overlap sine windows).
fn zero_phase_vocoder(x: &[f64], attack: Attack) -> Vec<f64> {
    let n = attack.frame;
    let hop = n / 2;
    let w: Vec<f64> = (0..n).map(|i| (PI * i as f64 / n as f64).sin()).collect();
    let len = x.len();
    let padded_len = len + 2 * n;
    let mut xp = vec![0.0; padded_len];
    xp[n..n + len].copy_from_slice(x);
    let mut out = vec![0.0; padded_len];
    let mut start = 0;
    while start + n <= padded_len {
        let y = zero_phase_frame(&xp[start..start + n], &w, attack.smooth_bins);
        out[start..start + n].iter_mut().zip(y).for_each(|(o, v)| *o += v);
        start += hop;
    }
    normalize_peak(out[n..n + len].to_vec(), 0.5)
}

/// Writes `wav/<utt>.wav` and `manifest.tsv` under `out_dir`; pseudo-speakers
/// are disjoint across subsets.
pub fn make_toy_corpus(seed: u64, out_dir: &Path, config: &ToyCorpusConfig) -> Result<Manifest> {
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let sr = config.sample_rate as f64;
    let mut rows = Vec::new();
    for (subset, count) in [
        (Subset::Train, config.n_train),
        (Subset::Dev, config.n_dev),
        (Subset::Eval, config.n_eval),
        (Subset::Background, config.n_background),
    ] {
        let name = subset.to_string();
        let mut spk_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[&name, "speakers"]));
        let speakers: Vec<Speaker> = (0..config.speakers_per_subset.max(1)).map(|_| Speaker::draw(&mut spk_rng)).collect();
        for i in 0..count {
            let spoof = i % 2 == 1;
            let spk = &speakers[(i / 2) % speakers.len()];
            let utt_id = format!("{name}_{i:04}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[&utt_id]));
            let secs = rng.random_range(config.min_secs..=config.max_secs);
            let n = (secs * sr) as usize;
            let natural = recording(spk, n, sr, config, &mut rng);
            let (samples, label, attack_id) = if spoof {
                let a = ATTACKS[(i / 2) % ATTACKS.len()];
                (zero_phase_vocoder(&natural, a), Label::Spoof, Some(a.id.to_string()))
            } else {
                (natural, Label::Human, None)
            };
            let rel = PathBuf::from("wav").join(format!("{utt_id}.wav"));
            write_wav(&out_dir.join(&rel), &AudioSignal::new(samples, config.sample_rate)?)?;
            rows.push(ManifestRow {
                utt_id,
                wav_path: rel,
                label,
                attack_id,
                subset,
                condition: None,
            });
        }
    }
    let manifest = Manifest::new(rows, out_dir)?;
    manifest.write(&out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_wav;

    fn small() -> ToyCorpusConfig {
        ToyCorpusConfig {
            n_train: 8,
            n_dev: 4,
            n_eval: 4,
            n_background: 2,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = make_toy_corpus(3, a.path(), &small()).unwrap();
        make_toy_corpus(3, b.path(), &small()).unwrap();
        for r in &ma.rows {
            assert_eq!(
                std::fs::read(a.path().join(&r.wav_path)).unwrap(),
                std::fs::read(b.path().join(&r.wav_path)).unwrap()
            );
        }
        assert_eq!(std::fs::read(a.path().join("manifest.tsv")).unwrap(), std::fs::read(b.path().join("manifest.tsv")).unwrap());
        for s in [Subset::Train, Subset::Dev, Subset::Eval] {
            let labels: Vec<Label> = ma.subset(s).map(|r| r.label).collect();
            assert!(labels.contains(&Label::Human) && labels.contains(&Label::Spoof));
        }
        assert_eq!(ma.subset(Subset::Train).count(), 8);
        assert!(ma.rows.iter().all(|r| (r.label == Label::Spoof) == r.attack_id.is_some()));
        let back = Manifest::read(&a.path().join("manifest.tsv")).unwrap();
        assert_eq!(back.rows, ma.rows);
        read_wav(&back.resolve(&back.rows[0])).unwrap();
    }

    #[test]
    fn vocoder_frames_are_symmetric_pulses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spk = Speaker::draw(&mut rng);
        let x = human_utterance(&spk, 16000, 16000.0, &mut rng);
        let w: Vec<f64> = (0..512).map(|i| (PI * i as f64 / 512.0).sin()).collect();
        for smooth in [1, 3] {
            let y = zero_phase_frame(&x[4000..4512], &w, smooth);
            for j in 1..256 {
                assert!((y[256 + j] - y[256 - j]).abs() < 1e-12);
            }
            // energy concentrates at the centre
            let peak = y.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
            assert_eq!(peak, 256);
        }
        let y = zero_phase_vocoder(&x, ATTACKS[0]);
        assert_eq!(y.len(), x.len());
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn recordings_open_with_a_quiet_pause() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spk = Speaker::draw(&mut rng);
        let x = recording(&spk, 16000, 16000.0, &ToyCorpusConfig::default(), &mut rng);
        let rms = |s: &[f64]| (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt();
        let lead = rms(&x[..1920]);
        assert!(lead > 0.0 && 20.0 * (rms(&x) / lead).log10() > 30.0);
    }
}
