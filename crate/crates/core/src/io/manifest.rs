use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Dev,
    Eval,
    /// Unlabelled-use data for UBM and total-variability training.
    Background,
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::Train => "train",
            Subset::Dev => "dev",
            Subset::Eval => "eval",
            Subset::Background => "background",
        })
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "dev" => Ok(Subset::Dev),
            "eval" => Ok(Subset::Eval),
            "background" => Ok(Subset::Background),
            _ => Err(Error::invalid(format!("unknown subset `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub utt_id: String,
    /// Absolute, or relative to the manifest's directory.
    pub wav_path: PathBuf,
    pub label: Label,
    pub attack_id: Option<String>,
    pub subset: Subset,
    /// Noise condition tag; `None` for clean recordings.
    pub condition: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub base_dir: PathBuf,
}

const HEADER: [&str; 5] = ["utt_id", "wav_path", "label", "attack_id", "subset"];

fn opt(s: &str) -> Option<String> {
    match s {
        "" | "-" => None,
        v => Some(v.to_string()),
    }
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            rows,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::invalid(format!("duplicate utt_id `{}`", r.utt_id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.wav_path.is_absolute() {
            row.wav_path.clone()
        } else {
            self.base_dir.join(&row.wav_path)
        }
    }

    pub fn subset(&self, s: Subset) -> impl Iterator<Item = &ManifestRow> + '_ {
        self.rows.iter().filter(move |r| r.subset == s)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(origin, "empty manifest"))?;
        let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
        if cols.len() < 5 || cols[..5] != HEADER {
            return Err(Error::format(origin, format!("header must start with {}", HEADER.join("\\t"))));
        }
        let cond_col = cols.iter().position(|c| *c == "condition");
        let mut rows = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() < 5 {
                return Err(Error::format(origin, format!("line {}: expected 5 columns", i + 1)));
            }
            let at = |e: Error| Error::format(origin, format!("line {}: {e}", i + 1));
            rows.push(ManifestRow {
                utt_id: f[0].to_string(),
                wav_path: PathBuf::from(f[1]),
                label: f[2].parse().map_err(at)?,
                attack_id: opt(f[3]),
                subset: f[4].parse().map_err(at)?,
                condition: cond_col.and_then(|c| f.get(c)).and_then(|s| opt(s)),
            });
        }
        Self::new(rows, base_dir)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        let with_cond = self.rows.iter().any(|r| r.condition.is_some());
        let mut s = HEADER.join("\t");
        if with_cond {
            s.push_str("\tcondition");
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}",
                r.utt_id,
                r.wav_path.display(),
                r.label,
                r.attack_id.as_deref().unwrap_or("-"),
                r.subset
            ));
            if with_cond {
                s.push('\t');
                s.push_str(r.condition.as_deref().unwrap_or("-"));
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_tsv();
        super::write_atomic(path, |w| {
            use std::io::Write;
            w.write_all(text.as_bytes())?;
            Ok(())
        })
    }
}
