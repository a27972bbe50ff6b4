use std::f64::consts::PI;

use super::{ms_to_samples, AudioSignal};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hamming => hamming(n),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

/// Windowed short-term frames of a signal, one frame per row.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    pub frames: Matrix,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub frame_len: usize,
    pub shift: usize,
    pub window: Window,
    pub sample_rate: u32,
}

impl FrameMatrix {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }
}

/// Splits a signal into overlapping windowed frames. Frame `t` starts at
/// sample `t * shift`; a trailing partial frame is dropped.
pub fn frame_signal(
    signal: &AudioSignal,
    frame_ms: f64,
    shift_ms: f64,
    window: Window,
) -> Result<FrameMatrix> {
    if !(shift_ms > 0.0) {
        return Err(Error::invalid("frame shift must be positive"));
    }
    if frame_ms < shift_ms {
        return Err(Error::invalid("frame length must be at least the frame shift"));
    }
    let sr = signal.sample_rate();
    let n = ms_to_samples(frame_ms, sr);
    let shift = ms_to_samples(shift_ms, sr);
    if n == 0 || shift == 0 {
        return Err(Error::invalid("frame length and shift must cover at least one sample"));
    }
    let x = signal.samples();
    let n_frames = if x.len() < n { 0 } else { (x.len() - n) / shift + 1 };
    let w = window.coefficients(n);
    let mut frames = Matrix::zeros(n_frames, n);
    for t in 0..n_frames {
        let src = &x[t * shift..t * shift + n];
        for ((d, s), wv) in frames.row_mut(t).iter_mut().zip(src).zip(&w) {
            *d = s * wv;
        }
    }
    Ok(FrameMatrix {
        frames,
        frame_length_ms: frame_ms,
        frame_shift_ms: shift_ms,
        frame_len: n,
        shift,
        window,
        sample_rate: sr,
    })
}
