use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::FrameMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// In-place forward DFT (unnormalized, `e^{-j2πkn/N}` kernel).
pub fn fft_forward(buf: &mut [Complex64]) {
    if !buf.is_empty() {
        forward_plan(buf.len()).process(buf);
    }
}

/// In-place inverse DFT, scaled by `1/N`.
pub(crate) fn fft_inverse(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    inverse_plan(buf.len()).process(buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
}

/// DFT of a real sequence zero-padded to `k`; returns bins `0..=k/2`.
pub(crate) fn real_dft_half(x: &[f64], k: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    fft_forward(&mut buf);
    buf.truncate(k / 2 + 1);
    buf
}

pub(crate) fn check_dft_size(n: usize, k: usize) -> Result<()> {
    if !k.is_power_of_two() {
        return Err(Error::invalid(format!("DFT size {k} is not a power of two")));
    }
    if k < n {
        return Err(Error::invalid(format!(
            "DFT size {k} is smaller than the frame length {n}"
        )));
    }
    Ok(())
}

/// Complex half spectrum of every frame (rows: frames, entries: bins `0..=K/2`).
pub fn complex_spectrum(frames: &FrameMatrix, dft_size: usize) -> Result<Vec<Vec<Complex64>>> {
    check_dft_size(frames.frame_len, dft_size)?;
    Ok(frames
        .frames
        .iter_rows()
        .map(|r| real_dft_half(r, dft_size))
        .collect())
}

#[derive(Debug, Clone)]
pub struct PowerSpectrum {
    pub values: Matrix,
    pub dft_size: usize,
}

#[derive(Debug, Clone)]
pub struct PhaseSpectrum {
    pub values: Matrix,
    pub dft_size: usize,
}

/// Squared DFT magnitude per frame and bin.
pub fn power_spectrum(frames: &FrameMatrix, dft_size: usize) -> Result<PowerSpectrum> {
    let spec = complex_spectrum(frames, dft_size)?;
    let values = Matrix::from_rows(
        dft_size / 2 + 1,
        spec.iter()
            .map(|row| row.iter().map(|c| c.norm_sqr()).collect::<Vec<_>>()),
    )?;
    Ok(PowerSpectrum { values, dft_size })
}

/// Maps an angle to the principal interval `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Principal-value phase per frame and bin.
pub fn phase_spectrum(frames: &FrameMatrix, dft_size: usize) -> Result<PhaseSpectrum> {
    let spec = complex_spectrum(frames, dft_size)?;
    let values = Matrix::from_rows(
        dft_size / 2 + 1,
        spec.iter().map(|row| {
            row.iter()
                .map(|c| {
                    let a = c.im.atan2(c.re);
                    if a == -PI {
                        PI
                    } else {
                        a
                    }
                })
                .collect::<Vec<_>>()
        }),
    )?;
    Ok(PhaseSpectrum { values, dft_size })
}
