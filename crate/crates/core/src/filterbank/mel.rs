use super::{check_dft_size, Filterbank, Scale, Shape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with centers equally spaced on the mel scale between
/// 0 and `sr/2`. Each row is scaled so its largest weight is exactly 1.
pub fn mel_filterbank(n_filters: usize, dft_size: usize, sample_rate: u32) -> Result<Filterbank> {
    check_dft_size(dft_size)?;
    if n_filters == 0 {
        return Err(Error::invalid("filterbank needs at least one filter"));
    }
    let sr = sample_rate as f64;
    let n_bins = dft_size / 2 + 1;
    let mel_max = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
        .collect();
    let mut weights = Matrix::zeros(n_filters, n_bins);
    for i in 0..n_filters {
        let (lo, c, hi) = (edges[i], edges[i + 1], edges[i + 2]);
        let row = weights.row_mut(i);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * sr / dft_size as f64;
            *w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::invalid(format!(
                "{n_filters} mel filters exceed the resolution of a {dft_size}-point DFT"
            )));
        }
        row.iter_mut().for_each(|w| *w /= peak);
    }
    Ok(Filterbank {
        weights,
        scale: Scale::Mel,
        shape: Shape::Triangular,
        f_low: 0.0,
        f_high: sr / 2.0,
        centers_hz: edges[1..=n_filters].to_vec(),
    })
}

/// The mel bank mirrored on the frequency axis: `w'(i, k) = w(M-1-i, K/2-k)`.
pub fn inverted_mel_filterbank(
    n_filters: usize,
    dft_size: usize,
    sample_rate: u32,
) -> Result<Filterbank> {
    let mel = mel_filterbank(n_filters, dft_size, sample_rate)?;
    Ok(mirror(&mel, Scale::InvertedMel))
}

pub(crate) fn mirror(bank: &Filterbank, scale: Scale) -> Filterbank {
    let m = bank.n_filters();
    let b = bank.n_bins();
    let mut weights = Matrix::zeros(m, b);
    for i in 0..m {
        let src = bank.weights.row(m - 1 - i);
        for (k, w) in weights.row_mut(i).iter_mut().enumerate() {
            *w = src[b - 1 - k];
        }
    }
    let nyq = bank.f_high;
    Filterbank {
        weights,
        scale,
        shape: bank.shape,
        f_low: bank.f_low,
        f_high: bank.f_high,
        centers_hz: bank.centers_hz.iter().rev().map(|c| nyq - c).collect(),
    }
}

/// Contiguous equal-width rectangular subbands partitioning bins `0..=K/2`;
/// band `i` covers bins `floor(i·B/M) .. floor((i+1)·B/M)` with `B = K/2 + 1`.
pub fn linear_rectangular_bank(
    n_filters: usize,
    dft_size: usize,
    sample_rate: u32,
) -> Result<Filterbank> {
    check_dft_size(dft_size)?;
    let n_bins = dft_size / 2 + 1;
    if n_filters == 0 || n_filters > n_bins {
        return Err(Error::invalid(format!(
            "{n_filters} rectangular bands cannot partition {n_bins} bins"
        )));
    }
    let sr = sample_rate as f64;
    let mut weights = Matrix::zeros(n_filters, n_bins);
    let mut centers = Vec::with_capacity(n_filters);
    for i in 0..n_filters {
        let (start, end) = band_edges(i, n_filters, n_bins);
        weights.row_mut(i)[start..end].iter_mut().for_each(|w| *w = 1.0);
        let mid = (start + end - 1) as f64 / 2.0;
        centers.push(mid * sr / dft_size as f64);
    }
    Ok(Filterbank {
        weights,
        scale: Scale::Linear,
        shape: Shape::Rectangular,
        f_low: 0.0,
        f_high: sr / 2.0,
        centers_hz: centers,
    })
}

pub(crate) fn band_edges(i: usize, n_filters: usize, n_bins: usize) -> (usize, usize) {
    (i * n_bins / n_filters, (i + 1) * n_bins / n_filters)
}
