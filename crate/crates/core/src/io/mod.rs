//! File formats: WAV audio, little-endian binary arrays, TSV manifests and scores.

mod binary;
mod manifest;
mod score_tsv;
mod wav;

pub use binary::{read_features, write_features, BinReader, BinWriter};
pub use manifest::{Manifest, ManifestRow, Subset};
pub use score_tsv::{read_scores, write_scores};
pub use wav::{read_wav, write_wav};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Writes through a sibling temporary file and renames, so readers never see
/// partial output.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
