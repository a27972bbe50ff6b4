use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_atomic, BinReader, BinWriter};

pub const PLDA_MAGIC: &[u8; 5] = b"SPPL1";
const DEGENERATE_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PldaConfig {
    /// Defaults to `min(dim, n_classes − 1)`.
    pub latent_dim: Option<usize>,
    pub n_iter: usize,
}

impl Default for PldaConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            n_iter: 20,
        }
    }
}

/// `x = m + Φy + ε`, `y ~ N(0, I)`, `ε ~ N(0, Σ)`.
#[derive(Debug, Clone)]
pub struct PldaModel {
    pub mean: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// Between-class loading is negligible next to the residual.
    pub degenerate: bool,
    sigma_inv: DMatrix<f64>,
    marginal: Gaussian,
}

impl PartialEq for PldaModel {
    fn eq(&self, o: &Self) -> bool {
        self.mean == o.mean && self.phi == o.phi && self.sigma == o.sigma
    }
}

#[derive(Debug, Clone)]
struct Gaussian {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl Gaussian {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len() as f64;
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Conditioning("PLDA covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            chol,
            log_norm: -0.5 * (d * (2.0 * PI).ln() + log_det),
        })
    }

    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let e = x - &self.mean;
        let z = self.chol.l_dirty().solve_lower_triangular(&e).expect("nonsingular factor");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// Predictive distribution of a class given its enrollment vectors.
#[derive(Debug, Clone)]
pub struct PldaClass {
    predictive: Gaussian,
}

impl PldaModel {
    pub fn new(mean: DVector<f64>, phi: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if phi.nrows() != d || sigma.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: phi.nrows(),
            });
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let sigma_inv = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Conditioning("PLDA residual covariance is not positive definite".into()))?
            .inverse();
        let between = &phi * phi.transpose();
        let degenerate = between.trace() < DEGENERATE_RATIO * sigma.trace();
        let marginal = Gaussian::new(mean.clone(), &sigma + &between)?;
        Ok(Self {
            mean,
            phi,
            sigma,
            degenerate,
            sigma_inv,
            marginal,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn between_covariance(&self) -> DMatrix<f64> {
        &self.phi * self.phi.transpose()
    }

    fn vector(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(DVector::from_column_slice(x))
    }

    /// Posterior of `y` for a class whose `n` vectors average to `class_mean`.
    fn latent_posterior(&self, centered_sum: &DVector<f64>, n: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let q = self.latent_dim();
        let pt = self.phi.transpose() * &self.sigma_inv;
        let l = DMatrix::<f64>::identity(q, q) + (&pt * &self.phi) * n;
        let chol = l
            .cholesky()
            .ok_or_else(|| Error::Conditioning("PLDA latent precision is not positive definite".into()))?;
        let y = chol.solve(&(pt * centered_sum));
        Ok((y, chol.inverse()))
    }

    pub fn enroll(&self, class_mean: &[f64], n: usize) -> Result<PldaClass> {
        if n == 0 {
            return Err(Error::invalid("enrollment needs at least one vector"));
        }
        let sum = (self.vector(class_mean)? - &self.mean) * n as f64;
        let (y, cov) = self.latent_posterior(&sum, n as f64)?;
        let pmean = &self.mean + &self.phi * y;
        let pcov = &self.sigma + &self.phi * cov * self.phi.transpose();
        let pcov = (&pcov + pcov.transpose()) * 0.5;
        Ok(PldaClass {
            predictive: Gaussian::new(pmean, pcov)?,
        })
    }

    /// Same-class versus different-class log-likelihood ratio.
    pub fn score(&self, class: &PldaClass, test: &[f64]) -> Result<f64> {
        let x = self.vector(test)?;
        Ok(class.predictive.log_pdf(&x) - self.marginal.log_pdf(&x))
    }

    pub fn llr(&self, class_mean: &[f64], n: usize, test: &[f64]) -> Result<f64> {
        self.score(&self.enroll(class_mean, n)?, test)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            let mut b = BinWriter::new(w);
            b.magic(PLDA_MAGIC)?;
            b.u32(self.dim())?;
            b.u32(self.latent_dim())?;
            b.f64s(self.mean.as_slice())?;
            b.f64s(self.phi.transpose().as_slice())?;
            b.f64s(self.sigma.transpose().as_slice())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let f = std::fs::File::open(path)?;
        let mut r = BinReader::new(std::io::BufReader::new(f), origin.clone());
        r.expect_magic(PLDA_MAGIC)?;
        let d = r.u32()?;
        let q = r.u32()?;
        let mean = DVector::from_vec(r.f64s(d)?);
        let phi = DMatrix::from_row_slice(d, q, &r.f64s(d * q)?);
        let sigma = DMatrix::from_row_slice(d, d, &r.f64s(d * d)?);
        r.finish()?;
        Self::new(mean, phi, sigma).map_err(|e| Error::format(origin, e.to_string()))
    }
}

/// EM for the simplified PLDA model, initialized from a PCA of the class means.
pub fn train_plda(classes: &[Vec<&[f64]>], config: &PldaConfig) -> Result<PldaModel> {
    if classes.len() < 2 {
        return Err(Error::invalid("PLDA needs at least two classes"));
    }
    if classes.iter().any(|c| c.is_empty()) {
        return Err(Error::invalid("PLDA class without vectors"));
    }
    let d = classes[0][0].len();
    for v in classes.iter().flatten() {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let q = config.latent_dim.unwrap_or(d.min(classes.len() - 1));
    if q == 0 || q > d {
        return Err(Error::invalid(format!("latent dimension {q} must lie in 1..={d}")));
    }
    let total: usize = classes.iter().map(|c| c.len()).sum();
    let nt = total as f64;
    let mut mean = DVector::zeros(d);
    for v in classes.iter().flatten() {
        mean += DVector::from_column_slice(v);
    }
    mean /= nt;

    let mut sums = Vec::with_capacity(classes.len());
    let mut scatter = DMatrix::zeros(d, d);
    let mut within = DMatrix::zeros(d, d);
    let mut between = DMatrix::zeros(d, d);
    for class in classes {
        let n = class.len() as f64;
        let mut s = DVector::zeros(d);
        for v in class {
            let e = DVector::from_column_slice(v) - &mean;
            scatter.ger(1.0, &e, &e, 1.0);
            s += e;
        }
        let cm = &s / n;
        between.ger(n, &cm, &cm, 1.0);
        for v in class {
            let e = DVector::from_column_slice(v) - &mean - &cm;
            within.ger(1.0, &e, &e, 1.0);
        }
        sums.push(s);
    }
    between /= nt;
    within /= nt;

    let eig = between.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut phi = DMatrix::zeros(d, q);
    for (j, &k) in order.iter().take(q).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        phi.set_column(j, &(eig.eigenvectors.column(k) * scale));
    }
    let load = 1e-6 * within.trace().max(scatter.trace() / nt) / d as f64;
    let mut sigma = within;
    let ev = sigma.clone().symmetric_eigen().eigenvalues;
    if ev.iter().any(|&e| !(e > load)) {
        log::warn!("PLDA within-class scatter is degenerate; loading the diagonal by {load:.3e}");
        for i in 0..d {
            sigma[(i, i)] += load;
        }
    }
    let mut model = PldaModel::new(mean.clone(), phi, sigma)?;

    for _ in 0..config.n_iter {
        let mut r_acc = DMatrix::zeros(d, q);
        let mut a_acc = DMatrix::zeros(q, q);
        for (class, s) in classes.iter().zip(&sums) {
            let n = class.len() as f64;
            let (y, cov) = model.latent_posterior(s, n)?;
            r_acc.ger(1.0, s, &y, 1.0);
            a_acc += (cov + &y * y.transpose()) * n;
        }
        let a_chol = a_acc
            .cholesky()
            .ok_or_else(|| Error::Conditioning("PLDA latent second moment is singular".into()))?;
        let phi = a_chol.solve(&r_acc.transpose()).transpose();
        let mut sigma = (&scatter - &phi * r_acc.transpose()) / nt;
        sigma = (&sigma + sigma.transpose()) * 0.5;
        if sigma.clone().cholesky().is_none() {
            for i in 0..d {
                sigma[(i, i)] += load;
            }
        }
        model = PldaModel::new(mean.clone(), phi, sigma)?;
    }
    if model.degenerate {
        log::warn!("PLDA between-class variance is negligible; scores will not discriminate");
    }
    Ok(model)
}
