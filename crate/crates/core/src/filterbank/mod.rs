//! Frequency-integration matrices and auditory/constant-Q analysis banks.

mod cqt;
mod gammatone;
mod mel;

pub use cqt::{cqt, CqtKernel, CqtPower};
pub use gammatone::{erb_bandwidth, erb_rate, erb_rate_inverse, gammatone_bank, GammatoneBank};
pub use mel::{hz_to_mel, inverted_mel_filterbank, linear_rectangular_bank, mel_filterbank, mel_to_hz};

use std::io::Write;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Mel,
    InvertedMel,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Triangular,
    Rectangular,
}

/// `M × (K/2 + 1)` nonnegative weights applied to a half spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    pub weights: Matrix,
    pub scale: Scale,
    pub shape: Shape,
    pub f_low: f64,
    pub f_high: f64,
    /// Center (peak) frequency of each filter in Hz.
    pub centers_hz: Vec<f64>,
}

impl Filterbank {
    pub fn n_filters(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.cols()
    }

    /// Weighted sums `Σ_k w[i][k]·x[k]` for one spectrum row.
    pub fn apply(&self, spectrum: &[f64]) -> Result<Vec<f64>> {
        if spectrum.len() != self.n_bins() {
            return Err(Error::DimensionMismatch {
                expected: self.n_bins(),
                found: spectrum.len(),
            });
        }
        Ok(self
            .weights
            .iter_rows()
            .map(|w| w.iter().zip(spectrum).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Debug dump: `filter,bin,weight` for every nonzero weight.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "filter,bin,weight")?;
        for (i, row) in self.weights.iter_rows().enumerate() {
            for (k, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    writeln!(out, "{i},{k},{w}")?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_dft_size(k: usize) -> Result<()> {
    if !k.is_power_of_two() || k < 2 {
        return Err(Error::invalid(format!("DFT size {k} is not a power of two")));
    }
    Ok(())
}
