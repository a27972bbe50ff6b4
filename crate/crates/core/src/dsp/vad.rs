use super::FrameMatrix;

/// Default detection threshold below the utterance's loudest frame.
pub const DEFAULT_VAD_THRESHOLD_DB: f64 = 30.0;

/// Speech / non-speech flag per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VadMask {
    pub flags: Vec<bool>,
}

impl VadMask {
    pub fn all(n: usize, value: bool) -> Self {
        Self {
            flags: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn n_speech(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Max-referenced log-energy detector: a frame is speech when its energy is
/// within `threshold_db` of the loudest frame. All-zero input is all non-speech.
pub fn energy_vad(frames: &FrameMatrix, threshold_db: f64) -> VadMask {
    let energies: Vec<f64> = frames
        .frames
        .iter_rows()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .collect();
    let max = energies.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return VadMask::all(energies.len(), false);
    }
    let max_db = 10.0 * max.log10();
    let flags = energies
        .iter()
        .map(|&e| e > 0.0 && 10.0 * e.log10() > max_db - threshold_db)
        .collect();
    VadMask { flags }
}
