use super::{CubicSpline, FeatureConfig};
use crate::dsp::{dct_features, floored_ln, AudioSignal};
use crate::error::{Error, Result};
use crate::filterbank::{cqt, CqtKernel};
use crate::matrix::Matrix;

/// Spline-resamples a function known on geometric knots onto `n` uniformly
/// spaced points spanning the same range.
pub fn linear_resample(knots_hz: &[f64], values: &[f64], n: usize) -> Result<Vec<f64>> {
    let s = CubicSpline::new(knots_hz, values)?;
    let (lo, hi) = (knots_hz[0], knots_hz[knots_hz.len() - 1]);
    if n < 2 {
        return Err(Error::invalid("need at least two resampling points"));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|j| s.eval(lo + j as f64 * step)).collect())
}

pub(crate) fn cqt_kernel(sample_rate: u32, config: &FeatureConfig) -> Result<CqtKernel> {
    let f_max = sample_rate as f64 / 2.0;
    let f_min = f_max / 2f64.powi(config.cqt_octaves as i32);
    let mut k = CqtKernel::new(sample_rate, config.cqt_bins_per_octave, f_min, f_max)?;
    k.frame_ms = config.frame_ms;
    k.shift_ms = config.shift_ms;
    Ok(k)
}

pub fn cqcc_base(signal: &AudioSignal, config: &FeatureConfig) -> Result<Matrix> {
    let kernel = cqt_kernel(signal.sample_rate(), config)?;
    let p = cqt(signal, &kernel)?;
    let mut uniform = Matrix::zeros(p.power.rows(), config.cqcc_linear_points);
    for t in 0..p.power.rows() {
        let log_p: Vec<f64> = p.power.row(t).iter().map(|&v| floored_ln(v)).collect();
        let r = linear_resample(&kernel.center_freqs, &log_p, config.cqcc_linear_points)?;
        uniform.row_mut(t).copy_from_slice(&r);
    }
    Ok(dct_features(&uniform, config.n_coeffs)?.values)
}
