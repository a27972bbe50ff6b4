//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spoofbench::dsp::{dct_features, dct_row, frame_signal, power_spectrum, phase_spectrum, wrap_phase, AudioSignal, Window};
use spoofbench::eval::eer_rocch;
use spoofbench::features::{extract, harmonic_phases, imfcc_base, modified_group_delay, FeatureConfig, FeatureKind, Smoothing};
use spoofbench::filterbank::{inverted_mel_filterbank, mel_filterbank};
use spoofbench::fusion::{apply_fusion, fuse_average, train_logistic_fusion};
use spoofbench::gmm::{train_gmm, GmmConfig, GmmModel};
use spoofbench::harness::{make_toy_corpus, run_experiment, Backend, ExperimentConfig, FusionSection, GmmSection, IvectorSection, NoiseCell, ToyCorpusConfig};
use spoofbench::enhance::EnhanceMethod;
use spoofbench::fusion::FusionKind;
use spoofbench::io::Subset;
use spoofbench::ivector::{baum_welch_stats, cosine_score, extract_ivector, train_tv, train_wccn, BwStats, TvConfig};
use spoofbench::matrix::Matrix;
use spoofbench::noise::{mix_at_snr, speech_level, LevelMethod, MixSpec, NoiseKind, NoiseSource};
use spoofbench::scores::{Label, ScoreSet, TrialScore};
use spoofbench::synth::toy_talker;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// direct-summation half spectrum of a zero-padded frame
fn naive_dft(x: &[f64], k_size: usize) -> Vec<(f64, f64)> {
    (0..=k_size / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in x.iter().enumerate() {
                let a = 2.0 * PI * ((k * n) % k_size) as f64 / k_size as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            (re, im)
        })
        .collect()
}

fn oracle_hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dsp_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_p, mut worst_ph, mut worst_dct) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let x: Vec<f64> = (0..320).map(|_| rng.random_range(-1.0..1.0)).collect();
        let window = if i % 2 == 0 { Window::Hamming } else { Window::Rectangular };
        let sig = AudioSignal::new(x.clone(), 16000).unwrap();
        let frames = frame_signal(&sig, 20.0, 10.0, window).unwrap();
        let p = power_spectrum(&frames, 512).unwrap();
        let ph = phase_spectrum(&frames, 512).unwrap();
        let w = match window {
            Window::Hamming => oracle_hamming(320),
            Window::Rectangular => vec![1.0; 320],
        };
        let xw: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        let spec = naive_dft(&xw, 512);
        let want_p: Vec<f64> = spec.iter().map(|(r, i)| r * r + i * i).collect();
        let peak = max_abs(want_p.iter().copied());
        let err = max_abs(p.values.row(0).iter().zip(&want_p).map(|(a, b)| a - b));
        worst_p = worst_p.max(err / peak);
        for (k, &(re, im)) in spec.iter().enumerate() {
            // phase is only meaningful where the bin carries energy
            if re * re + im * im > 1e-6 * peak {
                let d = wrap_phase(ph.values.get(0, k) - im.atan2(re)).abs();
                worst_ph = worst_ph.max(d / PI);
            }
        }
        let m = 16 + i % 48;
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let d = 1 + i % m;
        let got = dct_row(&v, d);
        let want: Vec<f64> = (0..d)
            .map(|k| {
                let s = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
                s * v.iter().enumerate().map(|(j, x)| x * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos()).sum::<f64>()
            })
            .collect();
        let scale = max_abs(want.iter().copied()).max(1e-300);
        worst_dct = worst_dct.max(max_abs(got.iter().zip(&want).map(|(a, b)| a - b)) / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = worst_p.max(worst_ph).max(worst_dct);
    outcome(
        worst <= 1e-9 && secs < 5.0,
        format!("power {worst_p:.1e}, phase {worst_ph:.1e}, dct {worst_dct:.1e} relative; {secs:.2} s"),
    )
}

// straight-line MFCC: window, direct DFT, triangular mel bank, log, DCT,
// deltas, mean subtraction, energy VAD
fn oracle_mfcc(x: &[f64]) -> Vec<Vec<f64>> {
    let (sr, n, shift, k_size, m_filt, n_cep) = (16000.0, 320, 160, 512, 32, 32);
    let w = oracle_hamming(n);
    let n_frames = (x.len() - n) / shift + 1;
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let edges: Vec<f64> = (0..m_filt + 2).map(|i| hz(mel(sr / 2.0) * i as f64 / (m_filt + 1) as f64)).collect();
    let mut bank = vec![vec![0.0; k_size / 2 + 1]; m_filt];
    for (i, row) in bank.iter_mut().enumerate() {
        let (lo, c, hi) = (edges[i], edges[i + 1], edges[i + 2]);
        for (k, v) in row.iter_mut().enumerate() {
            let f = k as f64 * sr / k_size as f64;
            if f > lo && f <= c {
                *v = (f - lo) / (c - lo);
            } else if f > c && f < hi {
                *v = (hi - f) / (hi - c);
            }
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        row.iter_mut().for_each(|v| *v /= peak);
    }
    let mut base = Vec::new();
    let mut energy = Vec::new();
    for t in 0..n_frames {
        let fr: Vec<f64> = (0..n).map(|i| x[t * shift + i] * w[i]).collect();
        energy.push(fr.iter().map(|v| v * v).sum::<f64>());
        let p: Vec<f64> = naive_dft(&fr, k_size).iter().map(|(r, i)| r * r + i * i).collect();
        let loge: Vec<f64> = bank
            .iter()
            .map(|row| row.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>().max(1e-10).ln())
            .collect();
        let c: Vec<f64> = (0..n_cep)
            .map(|k| {
                let s = if k == 0 { (1.0 / m_filt as f64).sqrt() } else { (2.0 / m_filt as f64).sqrt() };
                s * loge.iter().enumerate().map(|(j, v)| v * (PI * k as f64 * (2 * j + 1) as f64 / (2 * m_filt) as f64).cos()).sum::<f64>()
            })
            .collect();
        base.push(c);
    }
    let delta = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let last = rows.len() as isize - 1;
        (0..rows.len() as isize)
            .map(|t| {
                (0..rows[0].len())
                    .map(|j| {
                        let at = |u: isize| rows[u.clamp(0, last) as usize][j];
                        (at(t + 1) - at(t - 1) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0
                    })
                    .collect()
            })
            .collect()
    };
    let d1 = delta(&base);
    let d2 = delta(&d1);
    let mut full: Vec<Vec<f64>> = (0..n_frames).map(|t| [base[t].clone(), d1[t].clone(), d2[t].clone()].concat()).collect();
    let dim = full[0].len();
    for j in 0..dim {
        let mean = full.iter().map(|r| r[j]).sum::<f64>() / n_frames as f64;
        full.iter_mut().for_each(|r| r[j] -= mean);
    }
    let max_db = 10.0 * energy.iter().cloned().fold(0.0, f64::max).log10();
    full.into_iter()
        .zip(&energy)
        .filter(|(_, &e)| e > 0.0 && 10.0 * e.log10() > max_db - 30.0)
        .map(|(r, _)| r)
        .collect()
}

fn toy_utterance(rng: &mut ChaCha8Rng, secs: f64) -> Vec<f64> {
    let n = (secs * 16000.0) as usize;
    let lead = rng.random_range(800..3200);
    let mut x = vec![0.0; n];
    let speech = toy_talker(n - lead, 16000.0, rng);
    x[lead..].copy_from_slice(&speech);
    let peak = max_abs(x.iter().copied());
    x.iter_mut().for_each(|v| *v = 0.5 * *v / peak + 1e-4 * rng.random_range(-1.0..1.0));
    x
}

fn mfcc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = FeatureConfig::new(FeatureKind::Mfcc);
    let (mut worst, mut rows_ok, mut bitwise, mut mirrored) = (0.0f64, true, true, 0.0f64);
    for _ in 0..10 {
        let secs = rng.random_range(0.5..1.2);
        let x = toy_utterance(&mut rng, secs);
        let sig = AudioSignal::new(x.clone(), 16000).unwrap();
        let got = extract(&sig, &cfg).unwrap();
        let want = oracle_mfcc(&x);
        if got.values.rows() != want.len() {
            rows_ok = false;
            continue;
        }
        for (t, row) in want.iter().enumerate() {
            worst = worst.max(max_abs(got.values.row(t).iter().zip(row).map(|(a, b)| a - b)));
        }

        let imf = imfcc_base(&sig, &cfg).unwrap();
        let frames = frame_signal(&sig, 20.0, 10.0, Window::Hamming).unwrap();
        let p = power_spectrum(&frames, 512).unwrap();
        let bank = mel_filterbank(32, 512, 16000).unwrap();
        let inv = inverted_mel_filterbank(32, 512, 16000).unwrap();
        let mut flip = Matrix::zeros(p.values.rows(), 32);
        let mut direct = Matrix::zeros(p.values.rows(), 32);
        for t in 0..p.values.rows() {
            let mut rev = p.values.row(t).to_vec();
            rev.reverse();
            let mut e = bank.apply(&rev).unwrap();
            e.reverse();
            for (d, v) in flip.row_mut(t).iter_mut().zip(e) {
                *d = v.max(1e-10).ln();
            }
            for (d, v) in direct.row_mut(t).iter_mut().zip(inv.apply(p.values.row(t)).unwrap()) {
                *d = v.max(1e-10).ln();
            }
        }
        let flipped = dct_features(&flip, 32).unwrap().values;
        bitwise &= flipped.as_slice() == imf.as_slice();
        let via_bank = dct_features(&direct, 32).unwrap().values;
        mirrored = mirrored.max(max_abs(via_bank.as_slice().iter().zip(imf.as_slice()).map(|(a, b)| a - b)));
    }
    outcome(
        rows_ok && worst <= 1e-8 && bitwise && mirrored <= 1e-9,
        format!(
            "max |mfcc - oracle| {worst:.1e}; imfcc vs flipped spectrum {}; vs mirrored bank {mirrored:.1e}",
            if bitwise { "bit-identical" } else { "DIFFERS" }
        ),
    )
}

fn rps_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let w = oracle_hamming(320);
    let mut worst = 0.0f64;
    let (mut checked, mut within) = (0, 0);
    let mut by_order: BTreeMap<usize, f64> = BTreeMap::new();
    for _ in 0..25 {
        let f0 = rng.random_range(160.0..260.0);
        let phi1 = rng.random_range(-PI..PI);
        let n_harm = (8000.0 / f0) as usize;
        let mut theta: Vec<f64> = (0..n_harm).map(|_| rng.random_range(-PI..PI)).collect();
        // relative to the fundamental, so θ₁ is zero by construction
        theta[0] = 0.0;
        let offset = rng.random_range(0..400) as f64;
        let frame: Vec<f64> = (0..320)
            .map(|i| {
                let n = i as f64 + offset;
                let base = 2.0 * PI * f0 * n / 16000.0;
                let s: f64 = theta
                    .iter()
                    .enumerate()
                    .map(|(j, th)| {
                        let k = (j + 1) as f64;
                        (k * (base + phi1) + th).cos() / k.sqrt()
                    })
                    .sum();
                s * w[i]
            })
            .collect();
        let got = harmonic_phases(&frame, f0, 16000, 512);
        for (j, th) in theta.iter().enumerate() {
            if (j + 1) as f64 * f0 < 4000.0 {
                let e = wrap_phase(got[j] - th).abs();
                worst = worst.max(e);
                checked += 1;
                within += usize::from(e <= 0.1);
                let band = by_order.entry((j + 1).div_ceil(5)).or_default();
                *band = band.max(e);
            }
        }
    }
    let bands: Vec<String> = by_order.iter().map(|(b, e)| format!("k{}-{} {e:.3}", 5 * b - 4, 5 * b)).collect();
    outcome(
        worst <= 0.1,
        format!(
            "25 configurations, {within}/{checked} harmonics below 4 kHz within 0.1 rad, worst {worst:.3} rad (worst by order: {})",
            bands.join(", ")
        ),
    )
}

fn mgd_sanity() -> Outcome {
    let mut worst = 0.0f64;
    for a in [0.3, 0.5, 0.7, 0.9, -0.6] {
        let frame: Vec<f64> = (0..400).map(|n| f64::powi(a, n)).collect();
        let tau = modified_group_delay(&frame, 512, 1.0, 1.0, Smoothing::None);
        let resonance = if a > 0.0 { 0.0 } else { PI };
        for (k, t) in tau.iter().enumerate() {
            let w = 2.0 * PI * k as f64 / 512.0;
            if (w - resonance).abs() < 0.1 {
                continue;
            }
            let want = (a * w.cos() - a * a) / (1.0 - 2.0 * a * w.cos() + a * a);
            let rel = (t - want).abs() / (want.abs() + 1e-9);
            worst = worst.max(rel);
        }
    }
    outcome(worst <= 0.05, format!("worst relative error {worst:.1e} over five poles"))
}

fn gmm_em() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut monotone, mut mean_err, mut weight_err, mut sum_err) = (true, 0.0f64, 0.0f64, 0.0f64);
    for set in 0..20 {
        let d = 2 + set % 3;
        let w0 = rng.random_range(0.3..0.7);
        let mu: Vec<Vec<f64>> = (0..2).map(|c| (0..d).map(|_| rng.random_range(-1.0..1.0) + 6.0 * c as f64).collect()).collect();
        let sd: Vec<Vec<f64>> = (0..2).map(|_| (0..d).map(|_| rng.random_range(0.5..1.2)).collect()).collect();
        let n = 3000;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let c = usize::from(rng.random::<f64>() >= w0);
            for k in 0..d {
                data.push(mu[c][k] + sd[c][k] * normal(&mut rng));
            }
        }
        let m = Matrix::from_vec(n, d, data).unwrap();
        let cfg = GmmConfig { n_components: 2, n_iter: 30, seed: set as u64, ..GmmConfig::default() };
        let (model, log) = train_gmm(&[&m], &cfg).unwrap();
        monotone &= log.loglik.windows(2).all(|p| p[1] >= p[0] - 1e-9 * p[0].abs());
        sum_err = sum_err.max((model.weights().iter().sum::<f64>() - 1.0).abs());
        let dist = |c: usize, j: usize| max_abs((0..d).map(|k| model.means().get(j, k) - mu[c][k]));
        let swap = dist(0, 1) + dist(1, 0) < dist(0, 0) + dist(1, 1);
        let map = if swap { [1, 0] } else { [0, 1] };
        for c in 0..2 {
            mean_err = mean_err.max(dist(c, map[c]));
            let want = if c == 0 { w0 } else { 1.0 - w0 };
            weight_err = weight_err.max((model.weights()[map[c]] - want).abs());
        }

        // unstructured data, more components than clusters
        let u = Matrix::from_vec(500, 3, (0..1500).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let cfg = GmmConfig { n_components: 8, n_iter: 15, seed: set as u64, ..GmmConfig::default() };
        let (model, log) = train_gmm(&[&u], &cfg).unwrap();
        monotone &= log.loglik.windows(2).all(|p| p[1] >= p[0] - 1e-9 * p[0].abs());
        sum_err = sum_err.max((model.weights().iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        monotone && mean_err <= 0.1 && weight_err <= 0.05 && sum_err <= 1e-9,
        format!(
            "log-likelihood {}; mean error {mean_err:.3}, weight error {weight_err:.3}, |Σw - 1| {sum_err:.1e}",
            if monotone { "monotone" } else { "DECREASED" }
        ),
    )
}

fn snr_mixing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let sources = [NoiseSource::White, NoiseSource::CarSurrogate, NoiseSource::BabbleSurrogate];
    let (mut worst, mut deterministic, mut cells) = (0.0f64, true, 0);
    for i in 0..20 {
        let secs = rng.random_range(1.0..2.0);
        let clean = AudioSignal::new(toy_utterance(&mut rng, secs), 16000).unwrap();
        let level = speech_level(&clean, LevelMethod::P56Active).unwrap();
        let source = &sources[i % 3];
        for snr in [0.0, 10.0, 20.0] {
            let seed = 1000 + i as u64;
            let mix = mix_at_snr(&clean, source, &MixSpec::new(snr), seed).unwrap();
            let p_noise = clean
                .samples()
                .iter()
                .zip(mix.signal.samples())
                .map(|(s, y)| (y / mix.clip_gain - s).powi(2))
                .sum::<f64>()
                / clean.len() as f64;
            let measured = level.level_db - 10.0 * p_noise.log10();
            worst = worst.max((measured - snr).abs());
            let again = mix_at_snr(&clean, source, &MixSpec::new(snr), seed).unwrap();
            deterministic &= again.signal.samples() == mix.signal.samples();
            let other = mix_at_snr(&clean, source, &MixSpec::new(snr), seed + 1).unwrap();
            deterministic &= other.signal.samples() != mix.signal.samples();
            cells += 1;
        }
    }
    outcome(
        worst <= 0.5 && deterministic,
        format!(
            "{cells} mixes over white/car/babble, worst deviation {worst:.3} dB; {}",
            if deterministic { "seeded output reproducible" } else { "NOT reproducible" }
        ),
    )
}

fn eer_oracle() -> Outcome {
    let cases: [(&[f64], &[f64], f64); 12] = [
        (&[1.0], &[0.0], 0.0),
        (&[0.5, 0.5, 0.5], &[0.5, 0.5], 0.5),
        (&[2.0, 3.0], &[1.0, 2.5], 0.25),
        (&[3.0, 1.0], &[2.0, 0.0], 0.25),
        (&[1.0, 2.0, 3.0], &[0.0], 0.0),
        (&[0.0], &[1.0], 0.5),
        (&[1.0, 2.0, 3.0, 4.0], &[2.5], 1.0 / 3.0),
        (&[1.0, 2.0, 3.0], &[1.5, 2.5], 0.4),
        (&[0.9, 0.8, 0.7, 0.2], &[0.6, 0.1, 0.05, 0.3], 1.0 / 6.0),
        (&[2.0, 2.0], &[2.0, 1.0], 1.0 / 3.0),
        (&[5.0], &[1.0, 2.0, 3.0, 6.0], 0.2),
        (&[3.0, 4.0], &[1.0, 2.0, 5.0], 0.25),
    ];
    let mut bad = Vec::new();
    for (i, (tar, non, want)) in cases.iter().enumerate() {
        let got = eer_rocch(tar, non).unwrap();
        if (got - want).abs() > 1e-12 {
            bad.push(format!("case {} got {got:.4} want {want:.4}", i + 1));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("{} hand-enumerated hulls match", cases.len()) } else { bad.join("; ") })
}

fn ivector_stack() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    // occupancy counts
    let pool = Matrix::from_vec(600, 3, (0..1800).map(|_| normal(&mut rng)).collect()).unwrap();
    let (ubm, _) = train_gmm(&[&pool], &GmmConfig { n_components: 8, n_iter: 5, ..GmmConfig::default() }).unwrap();
    let mut occ = 0.0f64;
    for n in [1, 7, 50, 333] {
        let f = Matrix::from_vec(n, 3, (0..n * 3).map(|_| 3.0 * normal(&mut rng)).collect()).unwrap();
        let s = baum_welch_stats(&f, &ubm).unwrap();
        occ = occ.max((s.n.iter().sum::<f64>() - n as f64).abs());
    }

    // planted total variability
    let (m, d, r) = (8, 4, 3);
    let ubm = GmmModel::new(
        vec![1.0 / m as f64; m],
        Matrix::from_vec(m, d, (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
        Matrix::from_vec(m, d, (0..m * d).map(|_| rng.random_range(0.5..1.5)).collect()).unwrap(),
    )
    .unwrap();
    let t_true = DMatrix::from_fn(m * d, r, |_, _| normal(&mut rng));
    let mut stats = Vec::new();
    let mut ws = Vec::new();
    for _ in 0..300 {
        let w = DVector::from_fn(r, |_, _| normal(&mut rng));
        let shift = &t_true * &w;
        let n: Vec<f64> = (0..m).map(|_| rng.random_range(30.0..80.0)).collect();
        let mut f = Matrix::zeros(m, d);
        for c in 0..m {
            for k in 0..d {
                let v = ubm.variances().get(c, k);
                f.set(c, k, n[c] * (ubm.means().get(c, k) + shift[c * d + k]) + (n[c] * v).sqrt() * normal(&mut rng));
            }
        }
        stats.push(BwStats { n, f, n_frames: 0 });
        ws.push(w);
    }
    let (tv, _) = train_tv(&stats, &ubm, &TvConfig { rank: r, n_iter: 10, seed: 7 }).unwrap();
    let (mut err, mut tot) = (0.0, 0.0);
    for (s, w) in stats.iter().zip(&ws) {
        let truth = &t_true * w;
        let est = &tv.t * DVector::from_vec(extract_ivector(s, &tv).unwrap());
        err += (&truth - &est).norm_squared();
        tot += truth.norm_squared();
    }
    let captured = 1.0 - err / tot;

    // WCCN: Bᵀ W B = I with W the mean of the per-class biased covariances
    let dim = 5;
    let classes: Vec<Vec<Vec<f64>>> = (0..4)
        .map(|c| {
            let scale: Vec<f64> = (0..dim).map(|_| rng.random_range(0.3..2.0)).collect();
            (0..40 + 10 * c).map(|_| (0..dim).map(|k| c as f64 + scale[k] * normal(&mut rng)).collect()).collect()
        })
        .collect();
    let refs: Vec<Vec<&[f64]>> = classes.iter().map(|c| c.iter().map(|v| v.as_slice()).collect()).collect();
    let wccn = train_wccn(&refs).unwrap();
    let mut within = DMatrix::zeros(dim, dim);
    for c in &classes {
        let mean = c.iter().fold(DVector::zeros(dim), |a, v| a + DVector::from_column_slice(v)) / c.len() as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for v in c {
            let e = DVector::from_column_slice(v) - &mean;
            cov += &e * e.transpose();
        }
        within += cov / c.len() as f64;
    }
    within /= classes.len() as f64;
    let post = (wccn.b.transpose() * &within * &wccn.b - DMatrix::identity(dim, dim)).norm();

    // cosine scoring
    let (mut range, mut symmetric, mut scale_err) = (true, true, 0.0f64);
    for _ in 0..200 {
        let a: Vec<f64> = (0..10).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..10).map(|_| normal(&mut rng)).collect();
        let s = cosine_score(&a, &b).unwrap();
        range &= (-1.0..=1.0).contains(&s);
        symmetric &= s == cosine_score(&b, &a).unwrap();
        let k = rng.random_range(0.01..100.0);
        let ak: Vec<f64> = a.iter().map(|v| v * k).collect();
        scale_err = scale_err.max((cosine_score(&ak, &b).unwrap() - s).abs());
        range &= cosine_score(&a, &a).unwrap() <= 1.0;
    }
    outcome(
        occ <= 1e-9 && captured >= 0.95 && post <= 1e-6 && range && symmetric && scale_err <= 1e-12,
        format!(
            "|ΣN - T| {occ:.1e}; planted variance captured {:.2}%; WCCN residual {post:.1e}; cosine range {}, symmetry {}, scale error {scale_err:.1e}",
            100.0 * captured,
            if range { "ok" } else { "VIOLATED" },
            if symmetric { "exact" } else { "INEXACT" }
        ),
    )
}

fn scores_fixture(rng: &mut ChaCha8Rng, n: usize, f: impl Fn(bool, &mut ChaCha8Rng) -> f64) -> ScoreSet {
    ScoreSet::new(
        (0..n)
            .map(|i| {
                let human = i % 3 != 0;
                TrialScore {
                    utt_id: format!("u{i:03}"),
                    score: f(human, rng),
                    label: if human { Label::Human } else { Label::Spoof },
                    attack_id: (!human).then(|| "S1".to_string()),
                    condition: "clean".into(),
                }
            })
            .collect(),
    )
}

fn fusion_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let sets: Vec<ScoreSet> = (0..4).map(|_| scores_fixture(&mut rng, 60, |_, r| r.random_range(-7.0..7.0))).collect();
    let s = &sets[0];
    let mut idem = fuse_average(std::slice::from_ref(s)).unwrap().scores() == s.scores();
    for copies in 2..=5 {
        idem &= fuse_average(&vec![s.clone(); copies]).unwrap().scores() == s.scores();
    }
    let reference = fuse_average(&sets).unwrap().scores();
    let mut perm = true;
    for order in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1], [0, 2, 1, 3]] {
        let shuffled: Vec<ScoreSet> = order.iter().map(|&i| sets[i].clone()).collect();
        perm &= fuse_average(&shuffled).unwrap().scores() == reference;
    }

    let good = scores_fixture(&mut rng, 90, |h, r| if h { r.random_range(1.0..3.0) } else { r.random_range(-3.0..-0.5) });
    let noise = scores_fixture(&mut rng, 90, |_, r| r.random_range(-1.0..1.0));
    let dev = [good, noise];
    let (model, log) = train_logistic_fusion(vec!["good".into(), "noise".into()], &dev, 1e-3).unwrap();
    let (tar, non) = apply_fusion(&model, &dev).unwrap().split();
    let eer = eer_rocch(&tar, &non).unwrap();
    let monotone = log.objective.windows(2).all(|p| p[1] <= p[0]);
    outcome(
        idem && perm && eer == 0.0 && monotone && log.grad_norm < 1e-6,
        format!(
            "averaging idempotent {}, permutation invariant {}; logistic dev EER {:.2}%, objective {} over {} steps, final gradient norm {:.1e}",
            idem,
            perm,
            100.0 * eer,
            if monotone { "non-increasing" } else { "ROSE" },
            log.objective.len() - 1,
            log.grad_norm
        ),
    )
}

fn trend_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 11,
        features: FeatureKind::ALL.to_vec(),
        backends: vec![Backend::Gmm, Backend::IvectorCosine, Backend::IvectorPlda],
        noise: vec![NoiseCell { kind: NoiseKind::White, snr_db: 0.0 }],
        enhancement: vec![EnhanceMethod::SpecSubMagnitude],
        subsets: vec![Subset::Dev, Subset::Eval],
        fusion: FusionSection { methods: vec![FusionKind::Average, FusionKind::Logistic], ..FusionSection::default() },
        ..ExperimentConfig::default()
    }
}

fn end_to_end(tmp: &Path) -> Vec<(String, Outcome)> {
    let start = Instant::now();
    let manifest = match make_toy_corpus(5, &tmp.join("corpus"), &ToyCorpusConfig::default()) {
        Ok(m) => m,
        Err(e) => return vec![("10".into(), outcome(false, format!("toy corpus: {e}")))],
    };
    let cfg = trend_config();
    let run = match run_experiment(&cfg, &manifest, &tmp.join("run")) {
        Ok(r) => r,
        Err(e) => return vec![("10".into(), outcome(false, format!("run failed: {e}")))],
    };
    let secs = start.elapsed().as_secs_f64();
    let eer = |cond: &str, sys: &str, b: Backend| run.eer(Subset::Eval, cond, sys, b).unwrap_or(f64::NAN);
    let backends = [Backend::Gmm, Backend::IvectorCosine, Backend::IvectorPlda];
    let mut out = Vec::new();

    let clean_gmm: Vec<(FeatureKind, f64)> = FeatureKind::ALL.iter().map(|&k| (k, eer("clean", k.name(), Backend::Gmm))).collect();
    let worst = clean_gmm.iter().cloned().fold((FeatureKind::Mfcc, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    out.push((
        "10a".into(),
        outcome(
            clean_gmm.iter().all(|(_, e)| *e < 10.0),
            format!(
                "clean GMM EER {}; worst {} {:.2}%",
                clean_gmm.iter().map(|(k, e)| format!("{k} {e:.1}")).collect::<Vec<_>>().join(", "),
                worst.0,
                worst.1
            ),
        ),
    ));

    let mut rises = Vec::new();
    for &k in &FeatureKind::ALL {
        for &b in &backends {
            rises.push((format!("{k}/{b}"), eer("white_0dB", k.name(), b) - eer("clean", k.name(), b)));
        }
    }
    let short: Vec<&(String, f64)> = rises.iter().filter(|(_, d)| !(*d >= 10.0)).collect();
    out.push((
        "10b".into(),
        outcome(
            short.is_empty(),
            if short.is_empty() {
                format!("all {} systems rise by at least 10 points at 0 dB", rises.len())
            } else {
                format!(
                    "{}/{} systems rise by at least 10 points; short: {}",
                    rises.len() - short.len(),
                    rises.len(),
                    short.iter().map(|(s, d)| format!("{s} {d:+.1}")).collect::<Vec<_>>().join(", ")
                )
            },
        ),
    ));

    let wins: Vec<(FeatureKind, f64, f64)> = FeatureKind::ALL
        .iter()
        .map(|&k| (k, eer("clean", k.name(), Backend::Gmm), eer("clean", k.name(), Backend::IvectorCosine)))
        .collect();
    let n_win = wins.iter().filter(|(_, g, c)| g <= c).count();
    out.push((
        "10c".into(),
        outcome(
            n_win >= 7,
            format!(
                "GMM <= cosine in {n_win}/8 (gmm/cos: {})",
                wins.iter().map(|(k, g, c)| format!("{k} {g:.1}/{c:.1}")).collect::<Vec<_>>().join(", ")
            ),
        ),
    ));

    let fused = eer("clean", "fusion-average", Backend::Gmm);
    let best = clean_gmm.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let logistic = eer("clean", "fusion-logistic-oracle-condition", Backend::Gmm);
    out.push((
        "10d".into(),
        outcome(
            fused <= best,
            format!("clean GMM average fusion {fused:.2}% vs best standalone {best:.2}% (logistic fusion {logistic:.2}%)"),
        ),
    ));

    let (mut d_clean, mut d_noisy) = (0.0, 0.0);
    let mut per = Vec::new();
    for &k in &FeatureKind::ALL {
        let dc = eer("clean+specsub-mag", k.name(), Backend::Gmm) - eer("clean", k.name(), Backend::Gmm);
        let dn = eer("white_0dB", k.name(), Backend::Gmm) - eer("white_0dB+specsub-mag", k.name(), Backend::Gmm);
        d_clean += dc.abs();
        d_noisy += dn;
        per.push(format!("{k} {dc:+.1}/{dn:+.1}"));
    }
    let n = FeatureKind::ALL.len() as f64;
    out.push((
        "10e".into(),
        outcome(
            d_clean / n < d_noisy / n,
            format!(
                "spectral subtraction, mean over GMM systems: clean EER change {:.2} points, 0 dB improvement {:.2} points (clean change/0 dB gain: {})",
                d_clean / n,
                d_noisy / n,
                per.join(", ")
            ),
        ),
    ));

    let empty: usize = run.empty_feature_utts.values().sum();
    println!("toy-corpus eval EER (%), every system and condition:");
    for line in run.summary_tsv().lines().filter(|l| l.starts_with("subset") || l.starts_with("eval")) {
        println!("  {line}");
    }
    out.push((
        "10".into(),
        outcome(
            secs < 600.0,
            format!("full grid (8 features x 3 back-ends x 4 conditions, fusion) in {secs:.0} s; {empty} feature-less utterances scored 0"),
        ),
    ));
    out
}

fn score_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.join("scores")];
    while let Some(d) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "tsv") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(tmp: &Path) -> Outcome {
    let toy = ToyCorpusConfig { n_train: 24, n_dev: 12, n_eval: 12, speakers_per_subset: 4, ..ToyCorpusConfig::default() };
    let cfg = ExperimentConfig {
        seed: 3,
        features: vec![FeatureKind::Mfcc, FeatureKind::Mgd],
        backends: vec![Backend::Gmm, Backend::IvectorCosine],
        noise: vec![NoiseCell { kind: NoiseKind::Babble, snr_db: 10.0 }],
        fusion: FusionSection { methods: vec![FusionKind::Average, FusionKind::Logistic], ..FusionSection::default() },
        gmm: GmmSection { n_components: 4, ..GmmSection::default() },
        ivector: IvectorSection { ubm_components: 4, rank: 5, ..IvectorSection::default() },
        ..ExperimentConfig::default()
    };
    let mut runs = Vec::new();
    for i in 0..2 {
        let root = tmp.join(format!("det{i}"));
        let res = make_toy_corpus(8, &root.join("corpus"), &toy).and_then(|m| run_experiment(&cfg, &m, &root.join("run")));
        if let Err(e) = res {
            return outcome(false, format!("run {i} failed: {e}"));
        }
        runs.push(score_files(&root.join("run")));
    }
    let same = runs[0] == runs[1] && !runs[0].is_empty();
    outcome(same, format!("{} score files compared across two fresh runs, {}", runs[0].len(), if same { "byte-identical" } else { "DIFFER" }))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(String, Outcome)> = vec![
        ("1".into(), dsp_oracles()),
        ("2".into(), mfcc_oracle()),
        ("3".into(), rps_round_trip()),
        ("4".into(), mgd_sanity()),
        ("5".into(), gmm_em()),
        ("6".into(), snr_mixing()),
        ("7".into(), eer_oracle()),
        ("8".into(), ivector_stack()),
        ("9".into(), fusion_checks()),
    ];
    for r in &results {
        println!("criterion {:<4} {}  {}", r.0, if r.1.pass { "PASS" } else { "FAIL" }, r.1.detail);
    }
    let mut rest = end_to_end(tmp.path());
    rest.push(("11".into(), determinism(tmp.path())));
    for r in &rest {
        println!("criterion {:<4} {}  {}", r.0, if r.1.pass { "PASS" } else { "FAIL" }, r.1.detail);
    }
    results.extend(rest);
    let failed: Vec<&str> = results.iter().filter(|r| !r.1.pass).map(|r| r.0.as_str()).collect();
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing {}", failed.join(", "));
        std::process::exit(1);
    }
}
