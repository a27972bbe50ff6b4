use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::DEFAULT_VAD_THRESHOLD_DB;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Imfcc,
    Scmc,
    Cqcc,
    Mhec,
    Rps,
    Mgd,
    #[serde(rename = "cosphase")]
    CosPhase,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 8] = [
        FeatureKind::Mfcc,
        FeatureKind::Imfcc,
        FeatureKind::Scmc,
        FeatureKind::Cqcc,
        FeatureKind::Mhec,
        FeatureKind::Rps,
        FeatureKind::Mgd,
        FeatureKind::CosPhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Imfcc => "imfcc",
            FeatureKind::Scmc => "scmc",
            FeatureKind::Cqcc => "cqcc",
            FeatureKind::Mhec => "mhec",
            FeatureKind::Rps => "rps",
            FeatureKind::Mgd => "mgd",
            FeatureKind::CosPhase => "cosphase",
        }
    }

    /// Deltas + CMS everywhere except RPS and CosPhase, which stay raw.
    pub fn default_postprocessing(self) -> bool {
        !matches!(self, FeatureKind::Rps | FeatureKind::CosPhase)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown feature kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub n_coeffs: usize,
    pub add_delta: bool,
    pub add_deltadelta: bool,
    pub apply_cms: bool,
    pub frame_ms: f64,
    pub shift_ms: f64,
    pub dft_size: usize,
    pub n_filters: usize,
    pub vad_threshold_db: f64,
    pub mgd_alpha: f64,
    pub mgd_gamma: f64,
    /// Number of real-cepstrum coefficients kept when smoothing |X| for MGD.
    pub mgd_cepstral_order: usize,
    pub cqt_bins_per_octave: usize,
    pub cqt_octaves: u32,
    /// Points of the uniform linear-frequency grid the log CQT power is resampled onto.
    pub cqcc_linear_points: usize,
    pub envelope_cutoff_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::new(FeatureKind::Mfcc)
    }
}

impl FeatureConfig {
    pub fn new(kind: FeatureKind) -> Self {
        let post = kind.default_postprocessing();
        Self {
            kind,
            n_coeffs: 32,
            add_delta: post,
            add_deltadelta: post,
            apply_cms: post,
            frame_ms: 20.0,
            shift_ms: 10.0,
            dft_size: 512,
            n_filters: 32,
            vad_threshold_db: DEFAULT_VAD_THRESHOLD_DB,
            mgd_alpha: 0.3,
            mgd_gamma: 0.1,
            mgd_cepstral_order: 30,
            cqt_bins_per_octave: 96,
            cqt_octaves: 9,
            cqcc_linear_points: 512,
            envelope_cutoff_hz: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.add_deltadelta && !self.add_delta {
            return Err(Error::Config("ΔΔ requires Δ".into()));
        }
        if self.n_coeffs == 0 {
            return Err(Error::Config("n_coeffs must be positive".into()));
        }
        Ok(())
    }

    /// Output dimensionality after post-processing.
    pub fn output_dim(&self) -> usize {
        let blocks = if self.add_deltadelta {
            3
        } else if self.add_delta {
            2
        } else {
            1
        };
        blocks * self.n_coeffs
    }

    /// Stable textual form used for cache keys.
    pub fn fingerprint(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
