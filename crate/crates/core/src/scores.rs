//! Trial scores shared by the back-ends, fusion and evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Spoof,
}

impl Label {
    pub fn is_target(self) -> bool {
        self == Label::Human
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Human => "human",
            Label::Spoof => "spoof",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" | "genuine" | "natural" => Ok(Label::Human),
            "spoof" | "synthetic" => Ok(Label::Spoof),
            _ => Err(Error::invalid(format!("unknown label `{s}`"))),
        }
    }
}

/// One detection trial; higher scores mean "more human".
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub utt_id: String,
    pub score: f64,
    pub label: Label,
    pub attack_id: Option<String>,
    pub condition: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub trials: Vec<TrialScore>,
}

impl ScoreSet {
    pub fn new(trials: Vec<TrialScore>) -> Self {
        Self { trials }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.score).collect()
    }

    /// Target (human) and non-target (spoof) score lists.
    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let mut tar = Vec::new();
        let mut non = Vec::new();
        for t in &self.trials {
            if t.label.is_target() {
                tar.push(t.score);
            } else {
                non.push(t.score);
            }
        }
        (tar, non)
    }

    pub fn with_scores(&self, scores: &[f64]) -> Result<ScoreSet> {
        if scores.len() != self.trials.len() {
            return Err(Error::DimensionMismatch {
                expected: self.trials.len(),
                found: scores.len(),
            });
        }
        Ok(ScoreSet {
            trials: self
                .trials
                .iter()
                .zip(scores)
                .map(|(t, &s)| TrialScore { score: s, ..t.clone() })
                .collect(),
        })
    }

    /// Errors unless `other` lists the same trials in the same order.
    pub fn check_aligned(&self, other: &ScoreSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Alignment(format!(
                "{} trials vs {} trials",
                self.len(),
                other.len()
            )));
        }
        for (i, (a, b)) in self.trials.iter().zip(&other.trials).enumerate() {
            if a.utt_id != b.utt_id || a.label != b.label {
                return Err(Error::Alignment(format!(
                    "trial {i}: `{}` vs `{}`",
                    a.utt_id, b.utt_id
                )));
            }
        }
        Ok(())
    }
}
