use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::enhance::{EnhanceConfig, EnhanceMethod};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureKind};
use crate::fusion::{FusionKind, DEFAULT_L2};
use crate::gmm::GmmConfig;
use crate::io::Subset;
use crate::ivector::{PldaConfig, TvConfig};
use crate::noise::{LevelMethod, NoiseKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Backend {
    #[serde(rename = "gmm")]
    Gmm,
    #[serde(rename = "ivector-cosine")]
    IvectorCosine,
    #[serde(rename = "ivector-plda")]
    IvectorPlda,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Gmm => "gmm",
            Backend::IvectorCosine => "ivector-cosine",
            Backend::IvectorPlda => "ivector-plda",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Backend::Gmm, Backend::IvectorCosine, Backend::IvectorPlda]
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown backend `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCell {
    pub kind: NoiseKind,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Logistic weights trained on dev scores of the same condition.
    OracleCondition,
    /// One set of weights from dev scores pooled over all conditions.
    Pooled,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::OracleCondition => "oracle-condition",
            FusionMode::Pooled => "pooled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSection {
    pub methods: Vec<FusionKind>,
    pub mode: FusionMode,
    pub l2: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            methods: Vec::new(),
            mode: FusionMode::OracleCondition,
            l2: DEFAULT_L2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IvectorSection {
    pub ubm_components: usize,
    pub ubm_iter: usize,
    pub rank: usize,
    pub tv_iter: usize,
    pub plda_iter: usize,
    pub plda_latent_dim: Option<usize>,
}

impl Default for IvectorSection {
    fn default() -> Self {
        Self {
            ubm_components: 64,
            ubm_iter: 5,
            rank: 100,
            tv_iter: 5,
            plda_iter: 10,
            plda_latent_dim: None,
        }
    }
}

impl IvectorSection {
    pub fn ubm(&self, seed: u64) -> GmmConfig {
        GmmConfig {
            n_components: self.ubm_components,
            n_iter: self.ubm_iter,
            seed,
            ..GmmConfig::default()
        }
    }

    pub fn tv(&self, seed: u64) -> TvConfig {
        TvConfig {
            rank: self.rank,
            n_iter: self.tv_iter,
            seed,
        }
    }

    pub fn plda(&self) -> PldaConfig {
        PldaConfig {
            latent_dim: self.plda_latent_dim,
            n_iter: self.plda_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmSection {
    pub n_components: usize,
    pub n_iter: usize,
    pub kmeans_iter: usize,
    pub variance_floor: f64,
}

impl Default for GmmSection {
    fn default() -> Self {
        Self {
            n_components: 64,
            n_iter: 5,
            kmeans_iter: 10,
            variance_floor: 1e-4,
        }
    }
}

impl GmmSection {
    pub fn config(&self, seed: u64) -> GmmConfig {
        GmmConfig {
            n_components: self.n_components,
            n_iter: self.n_iter,
            seed,
            variance_floor: self.variance_floor,
            kmeans_iter: self.kmeans_iter,
        }
    }
}

/// Experiment grid. The clean condition is always evaluated unless
/// `include_clean = false`; every noise cell and enhancement method adds
/// conditions on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub features: Vec<FeatureKind>,
    pub backends: Vec<Backend>,
    pub include_clean: bool,
    pub noise: Vec<NoiseCell>,
    pub level_method: LevelMethod,
    pub enhancement: Vec<EnhanceMethod>,
    pub enhance: EnhanceConfig,
    pub subsets: Vec<Subset>,
    pub attack_subset: Option<Vec<String>>,
    pub fusion: FusionSection,
    pub gmm: GmmSection,
    pub ivector: IvectorSection,
    /// Per-kind overrides of the feature defaults, keyed by kind name.
    pub feature: BTreeMap<String, toml::Table>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            features: FeatureKind::ALL.to_vec(),
            backends: vec![Backend::Gmm],
            include_clean: true,
            noise: Vec::new(),
            level_method: LevelMethod::P56Active,
            enhancement: Vec::new(),
            enhance: EnhanceConfig::default(),
            subsets: vec![Subset::Dev, Subset::Eval],
            attack_subset: None,
            fusion: FusionSection::default(),
            gmm: GmmSection::default(),
            ivector: IvectorSection::default(),
            feature: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("no features selected".into()));
        }
        if self.backends.is_empty() {
            return Err(Error::Config("no backends selected".into()));
        }
        if !self.include_clean && self.noise.is_empty() {
            return Err(Error::Config("empty condition grid".into()));
        }
        if self.subsets.iter().any(|s| matches!(s, Subset::Train | Subset::Background)) {
            return Err(Error::Config("only dev and eval subsets can be scored".into()));
        }
        for cell in &self.noise {
            if cell.snr_db.is_nan() {
                return Err(Error::Config("SNR must be a number".into()));
            }
            if let NoiseKind::File(p) = &cell.kind {
                if !Path::new(p).exists() {
                    return Err(Error::Config(format!("noise file `{p}` does not exist")));
                }
            }
        }
        for key in self.feature.keys() {
            key.parse::<FeatureKind>().map_err(|e| Error::Config(e.to_string()))?;
        }
        for k in &self.features {
            self.feature_config(*k)?;
        }
        if self.fusion.methods.contains(&FusionKind::Logistic) && !self.subsets.contains(&Subset::Dev) {
            return Err(Error::Config("logistic fusion needs the dev subset".into()));
        }
        Ok(())
    }

    /// Defaults for `kind`, with any `[feature.<kind>]` keys laid over them.
    pub fn feature_config(&self, kind: FeatureKind) -> Result<FeatureConfig> {
        let base = FeatureConfig::new(kind);
        let Some(over) = self.feature.get(kind.name()) else {
            return Ok(base);
        };
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in over {
            if k == "kind" {
                return Err(Error::Config(format!("[feature.{kind}] cannot change `kind`")));
            }
            if !table.contains_key(k) {
                return Err(Error::Config(format!("[feature.{kind}]: unknown key `{k}`")));
            }
            table.insert(k.clone(), v.clone());
        }
        let cfg: FeatureConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
