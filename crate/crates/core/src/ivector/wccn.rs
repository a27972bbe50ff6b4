use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::{write_atomic, BinReader, BinWriter};

pub const WCCN_MAGIC: &[u8; 5] = b"SPWC1";
/// Largest acceptable eigenvalue spread before the diagonal is loaded.
const MAX_CONDITION: f64 = 1e12;
const REGULARIZATION: f64 = 1e-6;

/// `B = chol(W⁻¹)`, lower triangular; vectors are mapped to `Bᵀw`.
#[derive(Debug, Clone, PartialEq)]
pub struct WccnTransform {
    pub b: DMatrix<f64>,
    /// True when the within-class covariance had to be diagonally loaded.
    pub regularized: bool,
}

impl WccnTransform {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        Ok(self.b.tr_mul(&DVector::from_column_slice(w)).iter().copied().collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            let mut b = BinWriter::new(w);
            b.magic(WCCN_MAGIC)?;
            b.u32(self.dim())?;
            b.f64s(self.b.transpose().as_slice())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let f = std::fs::File::open(path)?;
        let mut r = BinReader::new(std::io::BufReader::new(f), origin.clone());
        r.expect_magic(WCCN_MAGIC)?;
        let n = r.u32()?;
        let v = r.f64s(n * n)?;
        r.finish()?;
        let b = DMatrix::from_row_slice(n, n, &v);
        let lower = (0..n).all(|i| b[(i, i)] > 0.0 && (i + 1..n).all(|j| b[(i, j)] == 0.0));
        if !lower {
            return Err(Error::format(origin, "WCCN factor is not lower triangular with positive diagonal"));
        }
        Ok(Self { b, regularized: false })
    }
}

/// Mean over classes of each class's (biased) covariance.
fn within_class_covariance(classes: &[Vec<&[f64]>], dim: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(dim, dim);
    for class in classes {
        let n = class.len() as f64;
        let mut mean = DVector::zeros(dim);
        for v in class {
            mean += DVector::from_column_slice(v);
        }
        mean /= n;
        let mut s = DMatrix::zeros(dim, dim);
        for v in class {
            let e = DVector::from_column_slice(v) - &mean;
            s.ger(1.0 / n, &e, &e, 1.0);
        }
        w += s;
    }
    w / classes.len() as f64
}

pub fn train_wccn(classes: &[Vec<&[f64]>]) -> Result<WccnTransform> {
    if classes.len() < 2 {
        return Err(Error::invalid("WCCN needs at least two classes"));
    }
    if let Some(c) = classes.iter().position(|c| c.len() < 2) {
        return Err(Error::invalid(format!("WCCN class {c} has fewer than two vectors")));
    }
    let dim = classes[0][0].len();
    if dim == 0 {
        return Err(Error::invalid("empty i-vectors"));
    }
    for v in classes.iter().flatten() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let mut w = within_class_covariance(classes, dim);
    let eig = w.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    let mut regularized = false;
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        let load = REGULARIZATION * w.trace() / dim as f64;
        if !(load > 0.0) {
            return Err(Error::Conditioning("within-class covariance is zero".into()));
        }
        log::warn!("within-class covariance is ill-conditioned; loading the diagonal by {load:.3e}");
        for i in 0..dim {
            w[(i, i)] += load;
        }
        regularized = true;
    }
    let inv = w
        .cholesky()
        .ok_or_else(|| Error::Conditioning("within-class covariance is not positive definite".into()))?
        .inverse();
    let inv = (&inv + inv.transpose()) * 0.5;
    let b = inv
        .cholesky()
        .ok_or_else(|| Error::Conditioning("inverse within-class covariance is not positive definite".into()))?
        .unpack();
    Ok(WccnTransform { b, regularized })
}
