//! The eight front-ends and their post-processing policy. Every extractor
//! emits `n_coeffs` base coefficients per frame on the shared 20 ms / 10 ms grid.

mod config;
mod cosphase;
mod cqcc;
mod magnitude;
mod mgd;
mod mhec;
mod pitch;
mod rps;
mod spline;

pub use config::{FeatureConfig, FeatureKind};
pub use cosphase::{cosphase_base, cosphase_frame, unwrap_phase};
pub use cqcc::{cqcc_base, linear_resample};
pub use magnitude::{imfcc_base, mfcc_base, scm_frame, scmc_base};
pub use mgd::{mgd_base, modified_group_delay, Smoothing};
pub use mhec::mhec_base;
pub use pitch::{estimate_f0, F0Track, PitchConfig};
pub use rps::{harmonic_phases, rps_base, rps_frame};
pub use spline::CubicSpline;

pub use crate::dsp::{Block, FeatureMatrix};

use crate::dsp::{
    append_deltas, cms, energy_vad, frame_signal, AudioSignal, DeltaOrder, FrameMatrix, VadMask,
    Window,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Base coefficients for every analysis frame plus a per-frame validity flag
/// (false where the representation is undefined, e.g. unvoiced RPS frames).
#[derive(Debug, Clone)]
pub struct RawFeatures {
    pub values: Matrix,
    pub valid: Vec<bool>,
}

impl RawFeatures {
    fn all_valid(values: Matrix) -> Self {
        let valid = vec![true; values.rows()];
        Self { values, valid }
    }
}

pub(crate) fn analysis_frames(signal: &AudioSignal, config: &FeatureConfig) -> Result<FrameMatrix> {
    frame_signal(signal, config.frame_ms, config.shift_ms, Window::Hamming)
}

/// Energy VAD on the feature frame grid.
pub fn compute_vad(signal: &AudioSignal, config: &FeatureConfig) -> Result<VadMask> {
    Ok(energy_vad(&analysis_frames(signal, config)?, config.vad_threshold_db))
}

/// Base (un-post-processed) coefficients for the configured kind.
pub fn extract_raw(signal: &AudioSignal, config: &FeatureConfig) -> Result<RawFeatures> {
    config.validate()?;
    let values = match config.kind {
        FeatureKind::Mfcc => mfcc_base(signal, config)?,
        FeatureKind::Imfcc => imfcc_base(signal, config)?,
        FeatureKind::Scmc => scmc_base(signal, config)?,
        FeatureKind::Cqcc => cqcc_base(signal, config)?,
        FeatureKind::Mhec => mhec_base(signal, config)?,
        FeatureKind::Mgd => mgd_base(signal, config)?,
        FeatureKind::CosPhase => cosphase_base(signal, config)?,
        FeatureKind::Rps => return rps_base(signal, config),
    };
    Ok(RawFeatures::all_valid(values))
}

/// Deltas, then CMS, then dropping of the frames the mask marks as non-speech.
pub fn postprocess(
    features: &FeatureMatrix,
    config: &FeatureConfig,
    vad: &VadMask,
) -> Result<FeatureMatrix> {
    if vad.len() != features.n_frames() {
        return Err(Error::invalid(format!(
            "VAD mask has {} frames, features have {}",
            vad.len(),
            features.n_frames()
        )));
    }
    if features.n_frames() == 0 {
        return Err(Error::EmptyFeatures("no analysis frames".into()));
    }
    let mut out = features.clone();
    if config.add_deltadelta {
        out = append_deltas(&out, DeltaOrder::Second)?;
    } else if config.add_delta {
        out = append_deltas(&out, DeltaOrder::First)?;
    }
    if config.apply_cms {
        out = cms(&out)?;
    }
    let values = out.values.select_rows(&vad.flags)?;
    if values.is_empty() {
        return Err(Error::EmptyFeatures("no speech frames after VAD".into()));
    }
    Ok(FeatureMatrix {
        values,
        base_dim: out.base_dim,
        blocks: out.blocks,
    })
}

/// Full pipeline with an externally supplied mask (e.g. from the clean
/// version of a noisy utterance).
pub fn extract_with_vad(
    signal: &AudioSignal,
    config: &FeatureConfig,
    vad: &VadMask,
) -> Result<FeatureMatrix> {
    let raw = extract_raw(signal, config)?;
    if raw.values.rows() == 0 {
        return Err(Error::EmptyFeatures("signal shorter than one analysis frame".into()));
    }
    if vad.len() != raw.values.rows() {
        return Err(Error::invalid(format!(
            "VAD mask has {} frames, features have {}",
            vad.len(),
            raw.values.rows()
        )));
    }
    if raw.valid.iter().all(|&v| v) {
        return postprocess(&FeatureMatrix::base(raw.values), config, vad);
    }
    if !raw.valid.iter().any(|&v| v) {
        return Err(Error::EmptyFeatures(format!(
            "no frames where {} is defined",
            config.kind
        )));
    }
    let kept = raw.values.select_rows(&raw.valid)?;
    let mask = VadMask {
        flags: vad
            .flags
            .iter()
            .zip(&raw.valid)
            .filter(|(_, &v)| v)
            .map(|(&f, _)| f)
            .collect(),
    };
    postprocess(&FeatureMatrix::base(kept), config, &mask)
}

/// Full pipeline with the signal's own energy VAD.
pub fn extract(signal: &AudioSignal, config: &FeatureConfig) -> Result<FeatureMatrix> {
    let vad = compute_vad(signal, config)?;
    extract_with_vad(signal, config, &vad)
}

macro_rules! kind_extractor {
    ($name:ident, $kind:expr) => {
        pub fn $name(signal: &AudioSignal, config: &FeatureConfig) -> Result<FeatureMatrix> {
            let mut cfg = config.clone();
            cfg.kind = $kind;
            extract(signal, &cfg)
        }
    };
}

kind_extractor!(extract_mfcc, FeatureKind::Mfcc);
kind_extractor!(extract_imfcc, FeatureKind::Imfcc);
kind_extractor!(extract_scmc, FeatureKind::Scmc);
kind_extractor!(extract_cqcc, FeatureKind::Cqcc);
kind_extractor!(extract_mhec, FeatureKind::Mhec);
kind_extractor!(extract_rps, FeatureKind::Rps);
kind_extractor!(extract_mgd, FeatureKind::Mgd);
kind_extractor!(extract_cosphase, FeatureKind::CosPhase);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> AudioSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n)
            .map(|_| 0.1 * { let v: f64 = StandardNormal.sample(&mut rng); v })
            .collect::<Vec<f64>>();
        AudioSignal::new(x, 16_000).unwrap()
    }

    #[test]
    fn postprocess_identity_without_flags() {
        let mut cfg = FeatureConfig::new(FeatureKind::Mfcc);
        cfg.add_delta = false;
        cfg.add_deltadelta = false;
        cfg.apply_cms = false;
        let m = Matrix::from_rows(2, (0..5).map(|t| vec![t as f64, 1.0])).unwrap();
        let vad = VadMask {
            flags: vec![true, false, true, true, false],
        };
        let out = postprocess(&FeatureMatrix::base(m.clone()), &cfg, &vad).unwrap();
        assert_eq!(out.values, m.select_rows(&vad.flags).unwrap());
        assert_eq!(out.n_frames(), 3);
    }

    #[test]
    fn postprocess_full_policy() {
        let cfg = FeatureConfig::new(FeatureKind::Mfcc);
        let x = noise(8_000, 1);
        let f = extract(&x, &cfg).unwrap();
        assert_eq!(f.dim(), 96);
        // all frames speech on stationary noise, so CMS means survive dropping
        assert!(f.values.column_means().iter().all(|m| m.abs() < 1e-9));
    }

    #[test]
    fn postprocess_length_mismatch() {
        let cfg = FeatureConfig::new(FeatureKind::Mfcc);
        let m = Matrix::zeros(4, 32);
        assert!(postprocess(&FeatureMatrix::base(m), &cfg, &VadMask::all(3, true)).is_err());
    }

    #[test]
    fn silent_utterance_is_empty_features() {
        let cfg = FeatureConfig::new(FeatureKind::Mfcc);
        let s = AudioSignal::new(vec![0.0; 8_000], 16_000).unwrap();
        assert!(matches!(extract(&s, &cfg), Err(Error::EmptyFeatures(_))));
    }

    #[test]
    fn every_kind_emits_n_coeffs_and_finite_values() {
        let x = noise(12_000, 2);
        for kind in FeatureKind::ALL {
            let mut cfg = FeatureConfig::new(kind);
            cfg.add_delta = false;
            cfg.add_deltadelta = false;
            cfg.apply_cms = false;
            if kind == FeatureKind::Rps {
                continue;
            }
            let raw = extract_raw(&x, &cfg).unwrap();
            assert_eq!(raw.values.cols(), 32, "{kind}");
            assert_eq!(raw.values.rows(), 74, "{kind}");
            assert!(raw.values.as_slice().iter().all(|v| v.is_finite()), "{kind}");
        }
    }
}
