//! Score-level fusion: plain averaging and logistic-regression weighted sums.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scores::ScoreSet;

pub const DEFAULT_L2: f64 = 1e-3;
const GRAD_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    #[serde(alias = "avg")]
    Average,
    Logistic,
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionKind::Average => "average",
            FusionKind::Logistic => "logistic",
        })
    }
}

impl FromStr for FusionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(FusionKind::Average),
            "logistic" | "lr" => Ok(FusionKind::Logistic),
            _ => Err(Error::invalid(format!("unknown fusion method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub kind: FusionKind,
    pub systems: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrainingLog {
    /// Objective after each accepted step, the initial point first.
    pub objective: Vec<f64>,
    pub grad_norm: f64,
}

impl FusionModel {
    pub fn average(systems: Vec<String>) -> Result<Self> {
        if systems.is_empty() {
            return Err(Error::invalid("fusion needs at least one system"));
        }
        let n = systems.len();
        Ok(Self {
            kind: FusionKind::Average,
            systems,
            weights: vec![1.0 / n as f64; n],
            bias: 0.0,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_string();
        write_atomic(path, |w| {
            use std::io::Write;
            w.write_all(text.as_bytes())?;
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut bias = None;
        let mut systems = Vec::new();
        let mut weights = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let bad = || Error::invalid(format!("malformed fusion line `{line}`"));
            match key {
                "kind" => kind = Some(it.next().ok_or_else(bad)?.parse()?),
                "bias" => bias = Some(it.next().ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?),
                "system" => {
                    let id = it.next().ok_or_else(bad)?;
                    let w = it.next().ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?;
                    systems.push(id.to_string());
                    weights.push(w);
                }
                _ => return Err(bad()),
            }
        }
        let kind = kind.ok_or_else(|| Error::invalid("fusion model has no `kind` line"))?;
        if systems.is_empty() {
            return Err(Error::invalid("fusion model lists no systems"));
        }
        Ok(Self {
            kind,
            systems,
            weights,
            bias: bias.unwrap_or(0.0),
        })
    }
}

impl fmt::Display for FusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind {}", self.kind)?;
        writeln!(f, "bias {:e}", self.bias)?;
        for (s, w) in self.systems.iter().zip(&self.weights) {
            writeln!(f, "system {s} {w:e}")?;
        }
        Ok(())
    }
}

fn check_systems(sets: &[ScoreSet]) -> Result<()> {
    let first = sets.first().ok_or_else(|| Error::invalid("fusion needs at least one system"))?;
    for s in &sets[1..] {
        first.check_aligned(s)?;
    }
    Ok(())
}

pub fn fuse_average(sets: &[ScoreSet]) -> Result<ScoreSet> {
    check_systems(sets)?;
    let n = sets.len() as f64;
    // sorted offsets from the minimum: exact under reordering and for
    // duplicated identical systems
    let mut buf = Vec::with_capacity(sets.len());
    let fused: Vec<f64> = (0..sets[0].len())
        .map(|i| {
            buf.clear();
            buf.extend(sets.iter().map(|s| s.trials[i].score));
            buf.sort_by(f64::total_cmp);
            let lo = buf[0];
            lo + buf.iter().map(|v| v - lo).sum::<f64>() / n
        })
        .collect();
    sets[0].with_scores(&fused)
}

pub fn apply_fusion(model: &FusionModel, sets: &[ScoreSet]) -> Result<ScoreSet> {
    if sets.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            found: sets.len(),
        });
    }
    if model.kind == FusionKind::Average {
        return fuse_average(sets);
    }
    check_systems(sets)?;
    let fused: Vec<f64> = (0..sets[0].len())
        .map(|i| model.bias + sets.iter().zip(&model.weights).map(|(s, w)| w * s.trials[i].score).sum::<f64>())
        .collect();
    sets[0].with_scores(&fused)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Problem {
    /// Standardized scores with a trailing 1 for the bias.
    x: Vec<DVector<f64>>,
    /// ±1
    y: Vec<f64>,
    c: Vec<f64>,
    l2: f64,
}

impl Problem {
    fn objective(&self, w: &DVector<f64>) -> f64 {
        let n = w.len() - 1;
        let reg = 0.5 * self.l2 * w.rows(0, n).norm_squared();
        reg + self
            .x
            .iter()
            .zip(&self.y)
            .zip(&self.c)
            .map(|((x, y), c)| c * softplus(-y * w.dot(x)))
            .sum::<f64>()
    }

    fn grad_hess(&self, w: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = w.len();
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for ((x, y), c) in self.x.iter().zip(&self.y).zip(&self.c) {
            let m = y * w.dot(x);
            let s = sigmoid(-m);
            g.axpy(-c * y * s, x, 1.0);
            h.ger(c * s * (1.0 - s), x, x, 1.0);
        }
        for j in 0..p - 1 {
            g[j] += self.l2 * w[j];
            h[(j, j)] += self.l2;
        }
        (g, h)
    }
}

/// Class-balanced L2-regularized logistic regression on per-system
/// standardized scores, solved by damped Newton iterations.
pub fn train_logistic_fusion(
    systems: Vec<String>,
    dev: &[ScoreSet],
    l2: f64,
) -> Result<(FusionModel, FusionTrainingLog)> {
    check_systems(dev)?;
    if systems.len() != dev.len() {
        return Err(Error::DimensionMismatch {
            expected: dev.len(),
            found: systems.len(),
        });
    }
    if !(l2 >= 0.0) {
        return Err(Error::invalid("regularization must be nonnegative"));
    }
    let k = dev.len();
    let n = dev[0].len();
    let n_tar = dev[0].trials.iter().filter(|t| t.label.is_target()).count();
    let n_non = n - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::DegenerateTraining(
            "logistic fusion needs both human and spoof trials in the development set".into(),
        ));
    }
    let mut mu = vec![0.0; k];
    let mut sd = vec![1.0; k];
    for (j, s) in dev.iter().enumerate() {
        let v = s.scores();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("system {} has non-finite scores", systems[j])));
        }
        mu[j] = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mu[j]).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            sd[j] = var.sqrt();
        }
    }
    let (c_tar, c_non) = (n as f64 / (2.0 * n_tar as f64), n as f64 / (2.0 * n_non as f64));
    let mut prob = Problem {
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        l2,
    };
    for i in 0..n {
        let mut x = DVector::from_element(k + 1, 1.0);
        for j in 0..k {
            x[j] = (dev[j].trials[i].score - mu[j]) / sd[j];
        }
        let target = dev[0].trials[i].label.is_target();
        prob.x.push(x);
        prob.y.push(if target { 1.0 } else { -1.0 });
        prob.c.push(if target { c_tar } else { c_non });
    }

    let mut w = DVector::zeros(k + 1);
    let mut f = prob.objective(&w);
    let mut history = vec![f];
    let mut gnorm = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let (g, mut h) = prob.grad_hess(&w);
        gnorm = g.norm();
        if gnorm < GRAD_TOL {
            break;
        }
        let mut damp = 0.0;
        let step = loop {
            if let Some(ch) = h.clone().cholesky() {
                break ch.solve(&g);
            }
            damp = if damp == 0.0 { 1e-10 * h.diagonal().amax().max(1.0) } else { damp * 10.0 };
            for j in 0..=k {
                h[(j, j)] += damp;
            }
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &w - &step * t;
            let fc = prob.objective(&cand);
            if fc <= f - 1e-4 * t * slope {
                w = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        history.push(f);
        if !accepted {
            // no representable decrease left
            gnorm = prob.grad_hess(&w).0.norm();
            break;
        }
    }
    if gnorm >= GRAD_TOL {
        log::warn!("logistic fusion stopped with gradient norm {gnorm:.2e}");
    }
    let weights: Vec<f64> = (0..k).map(|j| w[j] / sd[j]).collect();
    let bias = w[k] - (0..k).map(|j| w[j] * mu[j] / sd[j]).sum::<f64>();
    Ok((
        FusionModel {
            kind: FusionKind::Logistic,
            systems,
            weights,
            bias,
        },
        FusionTrainingLog {
            objective: history,
            grad_norm: gnorm,
        },
    ))
}
