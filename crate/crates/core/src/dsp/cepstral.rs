use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Which block of coefficients a column group holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Base,
    Delta,
    DeltaDelta,
}

/// T frames × D coefficients of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub base_dim: usize,
    pub blocks: Vec<Block>,
}

impl FeatureMatrix {
    pub fn base(values: Matrix) -> Self {
        let base_dim = values.cols();
        Self {
            values,
            base_dim,
            blocks: vec![Block::Base],
        }
    }

    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaOrder {
    First,
    Second,
}

/// Orthonormal DCT-II basis, `d` rows of length `m`.
pub fn dct_matrix(m: usize, d: usize) -> Vec<Vec<f64>> {
    let s0 = (1.0 / m as f64).sqrt();
    let s = (2.0 / m as f64).sqrt();
    (0..d)
        .map(|k| {
            let scale = if k == 0 { s0 } else { s };
            (0..m)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * m) as f64).cos())
                .collect()
        })
        .collect()
}

/// First `d` orthonormal DCT-II coefficients of one row.
pub fn dct_row(x: &[f64], d: usize) -> Vec<f64> {
    apply_basis(&dct_matrix(x.len(), d), x)
}

fn apply_basis(basis: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    basis
        .iter()
        .map(|b| b.iter().zip(x).map(|(a, v)| a * v).sum())
        .collect()
}

/// Inverse of the orthonormal DCT-II (coefficients beyond `c.len()` taken as zero).
pub fn idct_row(c: &[f64], m: usize) -> Vec<f64> {
    let basis = dct_matrix(m, c.len());
    let mut x = vec![0.0; m];
    for (b, &ck) in basis.iter().zip(c) {
        for (xi, bi) in x.iter_mut().zip(b) {
            *xi += ck * bi;
        }
    }
    x
}

/// Row-wise orthonormal DCT-II keeping coefficients `c0..c_{d-1}`.
pub fn dct_features(log_energies: &Matrix, n_coeffs: usize) -> Result<FeatureMatrix> {
    let m = log_energies.cols();
    if n_coeffs > m {
        return Err(Error::invalid(format!(
            "cannot keep {n_coeffs} DCT coefficients from {m} bands"
        )));
    }
    let basis = dct_matrix(m, n_coeffs);
    let out = Matrix::from_rows(
        n_coeffs,
        log_energies.iter_rows().map(|r| apply_basis(&basis, r)),
    )?;
    Ok(FeatureMatrix::base(out))
}

/// Regression deltas over ±2 frames with edge replication.
fn deltas(x: &Matrix) -> Matrix {
    const CONTEXT: isize = 2;
    let t_max = x.rows() as isize - 1;
    let norm: f64 = 2.0 * (1..=CONTEXT).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for t in 0..x.rows() as isize {
        let row = out.row_mut(t as usize);
        for n in 1..=CONTEXT {
            let fwd = x.row((t + n).min(t_max) as usize);
            let bwd = x.row((t - n).max(0) as usize);
            for ((o, a), b) in row.iter_mut().zip(fwd).zip(bwd) {
                *o += n as f64 * (a - b);
            }
        }
        row.iter_mut().for_each(|o| *o /= norm);
    }
    out
}

/// Appends Δ (and for `Second`, ΔΔ) blocks computed from the base block.
pub fn append_deltas(base: &FeatureMatrix, order: DeltaOrder) -> Result<FeatureMatrix> {
    if base.n_frames() == 0 {
        return Err(Error::EmptyFeatures("cannot compute deltas of zero frames".into()));
    }
    let d1 = deltas(&base.values);
    let (values, blocks) = match order {
        DeltaOrder::First => (
            Matrix::hstack(&[&base.values, &d1])?,
            vec![Block::Base, Block::Delta],
        ),
        DeltaOrder::Second => {
            let d2 = deltas(&d1);
            (
                Matrix::hstack(&[&base.values, &d1, &d2])?,
                vec![Block::Base, Block::Delta, Block::DeltaDelta],
            )
        }
    };
    Ok(FeatureMatrix {
        values,
        base_dim: base.base_dim,
        blocks,
    })
}

/// Per-utterance cepstral mean subtraction.
pub fn cms(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.n_frames() == 0 {
        return Err(Error::EmptyFeatures("cannot normalize zero frames".into()));
    }
    let mean = features.values.column_means();
    let mut values = features.values.clone();
    for t in 0..values.rows() {
        for (v, m) in values.row_mut(t).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    Ok(FeatureMatrix {
        values,
        base_dim: features.base_dim,
        blocks: features.blocks.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct cosine-sum DCT-II written from the definition.
    fn naive_dct(x: &[f64], d: usize) -> Vec<f64> {
        let m = x.len() as f64;
        (0..d)
            .map(|k| {
                let mut acc = 0.0;
                for (i, v) in x.iter().enumerate() {
                    acc += v * ((PI / m) * (i as f64 + 0.5) * k as f64).cos();
                }
                let a = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                a * acc
            })
            .collect()
    }

    #[test]
    fn constant_row_has_only_c0() {
        let c = dct_row(&[3.0; 32], 32);
        assert!((c[0] - 3.0 * 32f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dct_matches_naive_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..32).map(|_| rng.random_range(-5.0..5.0)).collect();
            let c = dct_row(&x, 32);
            for (a, b) in c.iter().zip(naive_dct(&x, 32)) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
            let back = idct_row(&c, 32);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn too_many_coefficients() {
        let m = Matrix::zeros(3, 8);
        assert!(dct_features(&m, 9).is_err());
        assert_eq!(dct_features(&m, 8).unwrap().dim(), 8);
    }

    #[test]
    fn constant_sequence_zero_deltas() {
        let m = Matrix::from_rows(4, (0..10).map(|_| vec![1.0, -2.0, 3.5, 0.0])).unwrap();
        let f = append_deltas(&FeatureMatrix::base(m), DeltaOrder::Second).unwrap();
        assert_eq!(f.dim(), 12);
        for r in f.values.iter_rows() {
            assert!(r[4..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ramp_deltas_closed_form() {
        let slope = [0.5, -1.25];
        let m = Matrix::from_rows(2, (0..20).map(|t| vec![slope[0] * t as f64, 7.0 + slope[1] * t as f64]))
            .unwrap();
        let f = append_deltas(&FeatureMatrix::base(m), DeltaOrder::Second).unwrap();
        // Δ exact two frames from the edge, ΔΔ exact four frames from the edge
        for t in 2..18 {
            assert!((f.values.get(t, 2) - slope[0]).abs() < 1e-12);
            assert!((f.values.get(t, 3) - slope[1]).abs() < 1e-12);
        }
        for t in 4..16 {
            assert!(f.values.get(t, 4).abs() < 1e-12);
            assert!(f.values.get(t, 5).abs() < 1e-12);
        }
    }

    #[test]
    fn base_32_with_double_deltas_is_96() {
        let m = Matrix::zeros(5, 32);
        let f = append_deltas(&FeatureMatrix::base(m), DeltaOrder::Second).unwrap();
        assert_eq!(f.dim(), 96);
        assert_eq!(f.blocks, vec![Block::Base, Block::Delta, Block::DeltaDelta]);
    }

    #[test]
    fn cms_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Matrix::from_rows(
            5,
            (0..40).map(|_| (0..5).map(|_| rng.random_range(-3.0..10.0)).collect::<Vec<_>>()),
        )
        .unwrap();
        let once = cms(&FeatureMatrix::base(m)).unwrap();
        assert!(once.values.column_means().iter().all(|v| v.abs() < 1e-12));
        let twice = cms(&once).unwrap();
        for (a, b) in once.values.as_slice().iter().zip(twice.values.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let single = Matrix::from_rows(3, [vec![1.0, 2.0, 3.0]]).unwrap();
        let z = cms(&FeatureMatrix::base(single)).unwrap();
        assert!(z.values.as_slice().iter().all(|&v| v == 0.0));
    }
}
