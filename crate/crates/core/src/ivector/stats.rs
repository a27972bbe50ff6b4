use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::matrix::Matrix;

/// Zeroth- and first-order Baum-Welch statistics of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct BwStats {
    /// `N_i = Σ_t γ_t(i)`
    pub n: Vec<f64>,
    /// `F_i = Σ_t γ_t(i) x_t`, one row per component.
    pub f: Matrix,
    pub n_frames: usize,
}

impl BwStats {
    pub fn n_components(&self) -> usize {
        self.n.len()
    }

    pub fn dim(&self) -> usize {
        self.f.cols()
    }

    /// `F̃_i = F_i − N_i m_i` flattened to a supervector.
    pub fn centered(&self, means: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = self.f.as_slice().to_vec();
        for (i, &ni) in self.n.iter().enumerate() {
            for k in 0..d {
                out[i * d + k] -= ni * means[i * d + k];
            }
        }
        out
    }
}

pub fn baum_welch_stats(features: &Matrix, ubm: &GmmModel) -> Result<BwStats> {
    if features.cols() != ubm.dim() {
        return Err(Error::DimensionMismatch {
            expected: ubm.dim(),
            found: features.cols(),
        });
    }
    let m = ubm.n_components();
    let d = ubm.dim();
    let mut n = vec![0.0; m];
    let mut f = Matrix::zeros(m, d);
    let mut post = vec![0.0; m];
    for x in features.iter_rows() {
        ubm.posteriors(x, &mut post);
        for (i, &g) in post.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            n[i] += g;
            for (acc, v) in f.row_mut(i).iter_mut().zip(x) {
                *acc += g * v;
            }
        }
    }
    Ok(BwStats {
        n,
        f,
        n_frames: features.rows(),
    })
}
