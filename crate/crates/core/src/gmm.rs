//! Diagonal-covariance Gaussian mixture models: k-means++ seeded EM training
//! and frame-averaged log-likelihood scoring.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_atomic, BinReader, BinWriter};
use crate::matrix::Matrix;

pub const GMM_MAGIC: &[u8; 5] = b"SPGM1";
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Matrix,
    variances: Matrix,
    /// `log w_i − ½ Σ_d log(2π σ²_id)`
    log_consts: Vec<f64>,
    inv_var: Matrix,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Matrix, variances: Matrix) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if means.rows() != m || variances.rows() != m || means.cols() != variances.cols() {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: means.rows(),
            });
        }
        let all_finite = weights.iter().chain(means.as_slice()).chain(variances.as_slice()).all(|v| v.is_finite());
        if !all_finite || variances.as_slice().iter().any(|&v| v <= 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("mixture parameters must be finite with positive variances"));
        }
        let log_consts = (0..m)
            .map(|i| {
                weights[i].ln()
                    - 0.5 * variances.row(i).iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>()
            })
            .collect();
        let inv_var = variances.map(|v| 1.0 / v);
        Ok(Self {
            weights,
            means,
            variances,
            log_consts,
            inv_var,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    /// Per-component joint log densities `log w_i + log N(x; μ_i, Σ_i)` into
    /// `out`; returns their log-sum-exp, `log p(x)`.
    pub fn component_log_densities(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (i, o) in out.iter_mut().enumerate() {
            let mu = self.means.row(i);
            let iv = self.inv_var.row(i);
            let mut q = 0.0;
            for d in 0..x.len() {
                let e = x[d] - mu[d];
                q += e * e * iv[d];
            }
            *o = self.log_consts[i] - 0.5 * q;
            max = max.max(*o);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + out.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
    }

    /// Posterior responsibilities of every component for `x` into `out`;
    /// returns `log p(x)`.
    pub fn posteriors(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let ll = self.component_log_densities(x, out);
        out.iter_mut().for_each(|v| *v = (*v - ll).exp());
        ll
    }

    pub fn frame_loglik(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.n_components()];
        self.component_log_densities(x, &mut buf)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            let mut b = BinWriter::new(w);
            b.magic(GMM_MAGIC)?;
            b.u32(self.n_components())?;
            b.u32(self.dim())?;
            b.f64s(&self.weights)?;
            b.f64s(self.means.as_slice())?;
            b.f64s(self.variances.as_slice())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut r = BinReader::new(std::io::BufReader::new(f), path.display().to_string());
        Self::read_from(&mut r)
    }

    pub(crate) fn read_from<R: std::io::Read>(r: &mut BinReader<R>) -> Result<Self> {
        r.expect_magic(GMM_MAGIC)?;
        let m = r.u32()?;
        let d = r.u32()?;
        let weights = r.f64s(m)?;
        let means = Matrix::from_vec(m, d, r.f64s(m * d)?)?;
        let variances = Matrix::from_vec(m, d, r.f64s(m * d)?)?;
        let path = r.path().to_string();
        Self::new(weights, means, variances).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = BinWriter::new(Vec::new());
        b.magic(GMM_MAGIC).and_then(|_| b.u32(self.n_components()))
            .and_then(|_| b.u32(self.dim()))
            .and_then(|_| b.f64s(&self.weights))
            .and_then(|_| b.f64s(self.means.as_slice()))
            .and_then(|_| b.f64s(self.variances.as_slice()))
            .expect("in-memory write");
        b.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(bytes, "<memory>");
        let g = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub n_components: usize,
    pub n_iter: usize,
    pub seed: u64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor: f64,
    pub kmeans_iter: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            n_components: 512,
            n_iter: 5,
            seed: 0,
            variance_floor: 1e-4,
            kmeans_iter: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    /// Total data log-likelihood before the first and after every EM iteration.
    pub loglik: Vec<f64>,
}

fn pool(features: &[&Matrix]) -> Result<Matrix> {
    let d = features
        .first()
        .map(|m| m.cols())
        .ok_or_else(|| Error::invalid("empty feature set"))?;
    if let Some(bad) = features.iter().find(|m| m.cols() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.cols(),
        });
    }
    let parts: Vec<f64> = features.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    let n = parts.len() / d.max(1);
    Matrix::from_vec(n, d, parts)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(x, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
fn kmeans(data: &Matrix, k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = data.rows();
    let d = data.cols();
    let mut centers = Matrix::zeros(k, d);
    centers.row_mut(0).copy_from_slice(data.row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|t| sq_dist(data.row(t), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (t, &w) in dist.iter().enumerate() {
                if u < w {
                    idx = t;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(data.row(pick));
        for (t, dt) in dist.iter_mut().enumerate() {
            *dt = dt.min(sq_dist(data.row(t), centers.row(c)));
        }
    }
    for _ in 0..iters {
        let assign: Vec<usize> = (0..n)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|t| nearest(data.row(t), &centers).0)
            .collect();
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (t, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(data.row(t)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }
    centers
}

struct Accum {
    n: Vec<f64>,
    f: Matrix,
    s: Matrix,
    ll: f64,
}

impl Accum {
    fn new(m: usize, d: usize) -> Self {
        Self {
            n: vec![0.0; m],
            f: Matrix::zeros(m, d),
            s: Matrix::zeros(m, d),
            ll: 0.0,
        }
    }

    fn add(&mut self, o: &Accum) {
        self.n.iter_mut().zip(&o.n).for_each(|(a, b)| *a += b);
        for (a, b) in self.f.as_mut_slice().iter_mut().zip(o.f.as_slice()) {
            *a += b;
        }
        for (a, b) in self.s.as_mut_slice().iter_mut().zip(o.s.as_slice()) {
            *a += b;
        }
        self.ll += o.ll;
    }
}

/// E-step statistics; chunks are processed in parallel and reduced in chunk order.
fn e_step(model: &GmmModel, data: &Matrix) -> Accum {
    let m = model.n_components();
    let d = model.dim();
    let n_chunks = data.rows().div_ceil(CHUNK);
    let parts: Vec<Accum> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accum::new(m, d);
            let mut post = vec![0.0; m];
            for t in c * CHUNK..((c + 1) * CHUNK).min(data.rows()) {
                let x = data.row(t);
                acc.ll += model.posteriors(x, &mut post);
                for (i, &g) in post.iter().enumerate() {
                    if g < 1e-300 {
                        continue;
                    }
                    acc.n[i] += g;
                    let f = acc.f.row_mut(i);
                    for k in 0..d {
                        f[k] += g * x[k];
                    }
                    let s = acc.s.row_mut(i);
                    for k in 0..d {
                        s[k] += g * x[k] * x[k];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Accum::new(m, d);
    for p in &parts {
        total.add(p);
    }
    total
}

/// Total log-likelihood of the pooled frames under `model`.
pub fn total_loglik(model: &GmmModel, data: &Matrix) -> f64 {
    e_step(model, data).ll
}

fn m_step(acc: &Accum, prev: &GmmModel, floor: &[f64]) -> Result<GmmModel> {
    let m = prev.n_components();
    let d = prev.dim();
    let total: f64 = acc.n.iter().sum();
    let mut weights = vec![0.0; m];
    let mut means = prev.means.clone();
    let mut vars = prev.variances.clone();
    for i in 0..m {
        let ni = acc.n[i];
        if ni < 1e-10 {
            // starved component: keeps its parameters with a negligible weight
            weights[i] = 1e-10;
            continue;
        }
        weights[i] = ni / total;
        for k in 0..d {
            let mu = acc.f.get(i, k) / ni;
            let v = (acc.s.get(i, k) / ni - mu * mu).max(floor[k]);
            means.set(i, k, mu);
            vars.set(i, k, v);
        }
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    GmmModel::new(weights, means, vars)
}

fn variance_floor(data: &Matrix, ratio: f64) -> Vec<f64> {
    data.column_variances()
        .into_iter()
        .map(|v| (ratio * v).max(1e-12))
        .collect()
}

/// Initial mixture from k-means clusters (hard assignment statistics).
fn init_from_kmeans(data: &Matrix, config: &GmmConfig, floor: &[f64]) -> Result<GmmModel> {
    let m = config.n_components;
    let d = data.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers = kmeans(data, m, config.kmeans_iter, &mut rng);
    let global_var = data.column_variances();
    let mut acc = Accum::new(m, d);
    for t in 0..data.rows() {
        let x = data.row(t);
        let (c, _) = nearest(x, &centers);
        acc.n[c] += 1.0;
        for k in 0..d {
            acc.f.row_mut(c)[k] += x[k];
            acc.s.row_mut(c)[k] += x[k] * x[k];
        }
    }
    let prev = GmmModel::new(
        vec![1.0 / m as f64; m],
        centers,
        Matrix::from_rows(d, (0..m).map(|_| global_var.iter().map(|v| v.max(1e-12)).collect::<Vec<_>>()))?,
    )?;
    m_step(&acc, &prev, floor)
}

/// EM training on the pooled frames of `features`.
pub fn train_gmm(features: &[&Matrix], config: &GmmConfig) -> Result<(GmmModel, TrainingLog)> {
    let data = pool(features)?;
    if data.rows() == 0 {
        return Err(Error::invalid("empty feature set"));
    }
    if config.n_components == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    if data.rows() < config.n_components {
        return Err(Error::invalid(format!(
            "{} frames cannot train {} components",
            data.rows(),
            config.n_components
        )));
    }
    let floor = variance_floor(&data, config.variance_floor);
    let mut model = init_from_kmeans(&data, config, &floor)?;
    let mut history = Vec::with_capacity(config.n_iter + 1);
    for _ in 0..config.n_iter {
        let acc = e_step(&model, &data);
        history.push(acc.ll);
        model = m_step(&acc, &model, &floor)?;
    }
    history.push(total_loglik(&model, &data));
    Ok((model, TrainingLog { loglik: history }))
}

/// `(1/T) Σ_t log p(x_t)`.
pub fn avg_loglik(features: &Matrix, model: &GmmModel) -> Result<f64> {
    if features.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: features.cols(),
        });
    }
    if features.rows() == 0 {
        return Err(Error::EmptyFeatures("no frames to score".into()));
    }
    let mut buf = vec![0.0; model.n_components()];
    let total: f64 = features
        .iter_rows()
        .map(|x| model.component_log_densities(x, &mut buf))
        .sum();
    Ok(total / features.rows() as f64)
}

/// `avg_loglik(nat) − avg_loglik(syn)`; positive means "more human".
pub fn llr_score(features: &Matrix, natural: &GmmModel, synthetic: &GmmModel) -> Result<f64> {
    if natural.dim() != synthetic.dim() {
        return Err(Error::DimensionMismatch {
            expected: natural.dim(),
            found: synthetic.dim(),
        });
    }
    Ok(avg_loglik(features, natural)? - avg_loglik(features, synthetic)?)
}
