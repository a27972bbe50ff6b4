use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BwStats;
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::io::{write_atomic, BinReader, BinWriter};

pub const TV_MAGIC: &[u8; 5] = b"SPTV1";
const REDUCE_CHUNKS: usize = 16;

/// `μ = m + T w` with the UBM's diagonal covariances as residual.
#[derive(Debug, Clone, PartialEq)]
pub struct TvMatrix {
    pub n_components: usize,
    pub dim: usize,
    /// Mean supervector, component-major.
    pub mean: Vec<f64>,
    /// `(M·D) × R`.
    pub t: DMatrix<f64>,
    /// Diagonal of Σ as a supervector.
    pub sigma: Vec<f64>,
    /// `T_cᵀ Σ_c⁻¹ T_c` per component.
    precision_blocks: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvConfig {
    pub rank: usize,
    pub n_iter: usize,
    pub seed: u64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            rank: 100,
            n_iter: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvTrainingLog {
    /// `Σ_u ½ bᵀL⁻¹b − ½ log|L|` evaluated with the matrix entering each iteration.
    pub objective: Vec<f64>,
}

struct Posterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    b: DVector<f64>,
    log_det_l: f64,
}

impl TvMatrix {
    fn from_parts(n_components: usize, dim: usize, mean: Vec<f64>, t: DMatrix<f64>, sigma: Vec<f64>) -> Result<Self> {
        let md = n_components * dim;
        if mean.len() != md || sigma.len() != md || t.nrows() != md {
            return Err(Error::DimensionMismatch {
                expected: md,
                found: t.nrows(),
            });
        }
        if t.ncols() == 0 || t.ncols() >= md {
            return Err(Error::invalid(format!("rank {} must lie in 1..{md}", t.ncols())));
        }
        if sigma.iter().any(|&s| !(s > 0.0)) || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("total-variability parameters must be finite with positive variances"));
        }
        let precision_blocks = (0..n_components)
            .map(|c| {
                let tc = t.rows(c * dim, dim);
                let inv = DVector::from_iterator(dim, sigma[c * dim..(c + 1) * dim].iter().map(|s| 1.0 / s));
                let scaled = DMatrix::from_fn(dim, tc.ncols(), |i, j| tc[(i, j)] * inv[i]);
                tc.transpose() * scaled
            })
            .collect();
        Ok(Self {
            n_components,
            dim,
            mean,
            t,
            sigma,
            precision_blocks,
        })
    }

    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    /// Builds from an explicit matrix, taking mean and covariances from the UBM.
    pub fn with_matrix(ubm: &GmmModel, t: DMatrix<f64>) -> Result<Self> {
        Self::from_parts(
            ubm.n_components(),
            ubm.dim(),
            ubm.means().as_slice().to_vec(),
            t,
            ubm.variances().as_slice().to_vec(),
        )
    }

    fn check(&self, s: &BwStats) -> Result<()> {
        if s.n_components() != self.n_components || s.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.n_components * self.dim,
                found: s.n_components() * s.dim(),
            });
        }
        Ok(())
    }

    fn posterior(&self, s: &BwStats) -> Result<Posterior> {
        self.check(s)?;
        let r = self.rank();
        let f = s.centered(&self.mean);
        let weighted = DVector::from_iterator(f.len(), f.iter().zip(&self.sigma).map(|(v, sg)| v / sg));
        let b = self.t.tr_mul(&weighted);
        let mut l = DMatrix::<f64>::identity(r, r);
        for (c, blk) in self.precision_blocks.iter().enumerate() {
            if s.n[c] != 0.0 {
                l += blk * s.n[c];
            }
        }
        let chol = l
            .cholesky()
            .ok_or_else(|| Error::Conditioning("i-vector posterior precision is not positive definite".into()))?;
        let log_det_l = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mean = chol.solve(&b);
        let cov = chol.inverse();
        Ok(Posterior {
            mean,
            cov,
            b,
            log_det_l,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            let mut b = BinWriter::new(w);
            b.magic(TV_MAGIC)?;
            b.u32(self.n_components)?;
            b.u32(self.dim)?;
            b.u32(self.rank())?;
            b.f64s(&self.mean)?;
            // row-major
            let rows: Vec<f64> = (0..self.t.nrows()).flat_map(|i| self.t.row(i).iter().copied().collect::<Vec<_>>()).collect();
            b.f64s(&rows)
        })
    }

    /// Reads `m` and `T`; the residual covariances come from the UBM.
    pub fn read(path: &Path, ubm: &GmmModel) -> Result<Self> {
        let origin = path.display().to_string();
        let f = std::fs::File::open(path)?;
        let mut r = BinReader::new(std::io::BufReader::new(f), origin.clone());
        r.expect_magic(TV_MAGIC)?;
        let m = r.u32()?;
        let d = r.u32()?;
        let rank = r.u32()?;
        if m != ubm.n_components() || d != ubm.dim() {
            return Err(Error::format(origin, format!("TV is {m}x{d}, UBM is {}x{}", ubm.n_components(), ubm.dim())));
        }
        let mean = r.f64s(m * d)?;
        let rows = r.f64s(m * d * rank)?;
        r.finish()?;
        let t = DMatrix::from_row_slice(m * d, rank, &rows);
        Self::from_parts(m, d, mean, t, ubm.variances().as_slice().to_vec())
            .map_err(|e| Error::format(origin, e.to_string()))
    }
}

/// Posterior mean `w = L⁻¹ Tᵀ Σ⁻¹ F̃` with `L = I + Σ_c N_c T_cᵀ Σ_c⁻¹ T_c`.
pub fn extract_ivector(stats: &BwStats, tv: &TvMatrix) -> Result<Vec<f64>> {
    Ok(tv.posterior(stats)?.mean.iter().copied().collect())
}

struct TvAccum {
    a: Vec<DMatrix<f64>>,
    c: DMatrix<f64>,
    objective: f64,
}

/// Total-variability EM. The matrix is initialized with Gaussian entries
/// scaled by the residual standard deviations.
pub fn train_tv(stats: &[BwStats], ubm: &GmmModel, config: &TvConfig) -> Result<(TvMatrix, TvTrainingLog)> {
    if stats.is_empty() {
        return Err(Error::invalid("no statistics to train the total-variability matrix"));
    }
    let m = ubm.n_components();
    let d = ubm.dim();
    let md = m * d;
    let r = config.rank;
    if r == 0 || r >= md {
        return Err(Error::invalid(format!("rank {r} must lie in 1..{md}")));
    }
    let sigma = ubm.variances().as_slice().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = DMatrix::from_fn(md, r, |i, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.1 * z * sigma[i].sqrt()
    });
    let mut tv = TvMatrix::with_matrix(ubm, init)?;
    let centered: Vec<DVector<f64>> = stats
        .iter()
        .map(|s| {
            tv.check(s)?;
            Ok(DVector::from_vec(s.centered(&tv.mean)))
        })
        .collect::<Result<_>>()?;
    let mut objective = Vec::with_capacity(config.n_iter + 1);
    let chunk = stats.len().div_ceil(REDUCE_CHUNKS).max(1);
    for _ in 0..config.n_iter {
        let parts: Vec<Result<TvAccum>> = stats
            .par_chunks(chunk)
            .zip(centered.par_chunks(chunk))
            .map(|(ss, fs)| {
                let mut acc = TvAccum {
                    a: vec![DMatrix::zeros(r, r); m],
                    c: DMatrix::zeros(md, r),
                    objective: 0.0,
                };
                for (s, f) in ss.iter().zip(fs) {
                    let p = tv.posterior(s)?;
                    acc.objective += 0.5 * p.b.dot(&p.mean) - 0.5 * p.log_det_l;
                    let eww = &p.cov + &p.mean * p.mean.transpose();
                    for (c, a) in acc.a.iter_mut().enumerate() {
                        if s.n[c] != 0.0 {
                            *a += &eww * s.n[c];
                        }
                    }
                    acc.c.ger(1.0, f, &p.mean, 1.0);
                }
                Ok(acc)
            })
            .collect();
        let mut total: Option<TvAccum> = None;
        for p in parts {
            let p = p?;
            match total.as_mut() {
                None => total = Some(p),
                Some(t) => {
                    for (x, y) in t.a.iter_mut().zip(&p.a) {
                        *x += y;
                    }
                    t.c += &p.c;
                    t.objective += p.objective;
                }
            }
        }
        let total = total.expect("at least one chunk");
        objective.push(total.objective);
        let mut t_new = DMatrix::zeros(md, r);
        for c in 0..m {
            let chol = total.a[c].clone().cholesky().ok_or_else(|| {
                Error::Conditioning(format!("component {c} accumulator is singular; it has no occupancy"))
            })?;
            // T_c = C_c A_c⁻¹  ⇔  A_c T_cᵀ = C_cᵀ
            let ct = total.c.rows(c * d, d).transpose();
            let sol = chol.solve(&ct);
            t_new.view_mut((c * d, 0), (d, r)).copy_from(&sol.transpose());
        }
        tv = TvMatrix::with_matrix(ubm, t_new)?;
    }
    let last: f64 = stats
        .iter()
        .map(|s| tv.posterior(s).map(|p| 0.5 * p.b.dot(&p.mean) - 0.5 * p.log_det_l))
        .sum::<Result<f64>>()?;
    objective.push(last);
    Ok((tv, TvTrainingLog { objective }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand::Rng;

    fn planted(seed: u64, n_utts: usize) -> (GmmModel, DMatrix<f64>, Vec<BwStats>, Vec<DVector<f64>>) {
        let (m, d, r) = (8, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ubm = GmmModel::new(
            vec![1.0 / m as f64; m],
            Matrix::from_vec(m, d, (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
            Matrix::from_vec(m, d, (0..m * d).map(|_| rng.random_range(0.5..1.5)).collect()).unwrap(),
        )
        .unwrap();
        let t = DMatrix::from_fn(m * d, r, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let mut stats = Vec::new();
        let mut ws = Vec::new();
        for _ in 0..n_utts {
            let w = DVector::from_fn(r, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let shift = &t * &w;
            let n: Vec<f64> = (0..m).map(|_| rng.random_range(30.0..80.0)).collect();
            let mut f = Matrix::zeros(m, d);
            for c in 0..m {
                for k in 0..d {
                    let i = c * d + k;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = ubm.variances().get(c, k);
                    // sum of n frames drawn from N(m + Tw, σ²)
                    f.set(c, k, n[c] * (ubm.means().get(c, k) + shift[i]) + (n[c] * v).sqrt() * z);
                }
            }
            stats.push(BwStats { n, f, n_frames: 0 });
            ws.push(w);
        }
        (ubm, t, stats, ws)
    }

    #[test]
    fn planted_model_variance_captured_and_objective_monotone() {
        let (ubm, t_true, stats, ws) = planted(1, 300);
        let cfg = TvConfig { rank: 3, n_iter: 10, seed: 2 };
        let (tv, log) = train_tv(&stats, &ubm, &cfg).unwrap();
        for p in log.objective.windows(2) {
            assert!(p[1] >= p[0] - 1e-6 * p[0].abs(), "{:?}", log.objective);
        }
        let (mut err, mut tot) = (0.0, 0.0);
        for (s, w) in stats.iter().zip(&ws) {
            let truth = &t_true * w;
            let what = DVector::from_vec(extract_ivector(s, &tv).unwrap());
            let est = &tv.t * &what;
            err += (&truth - &est).norm_squared();
            tot += truth.norm_squared();
        }
        let captured = 1.0 - err / tot;
        assert!(captured >= 0.95, "captured {captured}");
    }

    #[test]
    fn recovered_ivectors_correlate_with_planted() {
        let (ubm, t_true, stats, ws) = planted(3, 300);
        // with the true matrix, w is recovered up to the prior shrinkage
        let tv = TvMatrix::with_matrix(&ubm, t_true).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (s, w) in stats.iter().zip(&ws) {
            let e = extract_ivector(s, &tv).unwrap();
            a.extend(e);
            b.extend(w.iter().copied());
        }
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        assert!(cov / (va * vb).sqrt() > 0.9);
    }

    #[test]
    fn zero_centered_stats_give_zero_and_linearity() {
        let (ubm, t, stats, _) = planted(4, 2);
        let tv = TvMatrix::with_matrix(&ubm, t).unwrap();
        let mut s = stats[0].clone();
        for c in 0..s.n_components() {
            for k in 0..s.dim() {
                s.f.set(c, k, s.n[c] * ubm.means().get(c, k));
            }
        }
        assert!(extract_ivector(&s, &tv).unwrap().iter().all(|&v| v == 0.0));
        // scaling F̃ by 2 with N fixed doubles w
        let w1 = extract_ivector(&stats[0], &tv).unwrap();
        let mut s2 = stats[0].clone();
        for c in 0..s2.n_components() {
            for k in 0..s2.dim() {
                let nm = s2.n[c] * ubm.means().get(c, k);
                s2.f.set(c, k, nm + 2.0 * (stats[0].f.get(c, k) - nm));
            }
        }
        let w2 = extract_ivector(&s2, &tv).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert!((2.0 * a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn deterministic_roundtrip_and_errors() {
        let (ubm, _, stats, _) = planted(5, 20);
        let cfg = TvConfig { rank: 2, n_iter: 2, seed: 9 };
        let (a, _) = train_tv(&stats, &ubm, &cfg).unwrap();
        let (b, _) = train_tv(&stats, &ubm, &cfg).unwrap();
        assert_eq!(a.t, b.t);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tv.sptv");
        a.write(&p).unwrap();
        assert_eq!(TvMatrix::read(&p, &ubm).unwrap(), a);
        assert!(train_tv(&[], &ubm, &cfg).is_err());
    }
}
