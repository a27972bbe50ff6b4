//! Total-variability i-vectors with WCCN, length normalization, cosine and
//! simplified-PLDA scoring.

mod plda;
mod stats;
mod tv;
mod wccn;

pub use plda::{train_plda, PldaClass, PldaConfig, PldaModel, PLDA_MAGIC};
pub use stats::{baum_welch_stats, BwStats};
pub use tv::{extract_ivector, train_tv, TvConfig, TvMatrix, TvTrainingLog, TV_MAGIC};
pub use wccn::{train_wccn, WccnTransform, WCCN_MAGIC};

use crate::error::{Error, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projects onto the unit sphere.
pub fn length_normalize(w: &[f64]) -> Result<Vec<f64>> {
    let n = norm(w);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateVector);
    }
    Ok(w.iter().map(|x| x / n).collect())
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::DegenerateVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `cos(w̄_nat, w) − cos(w̄_syn, w)`.
pub fn ivector_detection_score(test: &[f64], mean_nat: &[f64], mean_syn: &[f64]) -> Result<f64> {
    Ok(cosine_score(mean_nat, test)? - cosine_score(mean_syn, test)?)
}

/// Class mean of length-normalized vectors, re-normalized.
pub fn class_mean(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or_else(|| Error::invalid("class has no vectors"))?;
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        if v.len() != acc.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                found: v.len(),
            });
        }
        acc.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
    }
    length_normalize(&acc)
}
