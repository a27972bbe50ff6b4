use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};

/// Reads a mono WAV file (integer PCM of any depth, or 32-bit float) as
/// samples in `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<AudioSignal> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::format(
            path.display().to_string(),
            format!("{} channels, expected mono", spec.channels),
        ));
    }
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
    };
    AudioSignal::new(samples, spec.sample_rate)
}

/// Writes 16-bit mono PCM; samples are clamped to full scale.
pub fn write_wav(path: &Path, signal: &AudioSignal) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &v in signal.samples() {
        w.write_sample((v * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}
