use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FEATURE_MAGIC: &[u8; 5] = b"SPBF1";

/// Little-endian writer for the model and cache formats.
pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn magic(&mut self, m: &[u8]) -> Result<()> {
        self.inner.write_all(m)?;
        Ok(())
    }

    pub fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in u32")))?;
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64s(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.inner.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct BinReader<R: Read> {
    inner: R,
    path: String,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R, path: impl Into<String>) -> Self {
        Self {
            inner,
            path: path.into(),
        }
    }

    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::format(self.path.clone(), format!("truncated while reading {what}")))
    }

    pub fn expect_magic(&mut self, m: &[u8]) -> Result<()> {
        let mut buf = vec![0u8; m.len()];
        self.exact(&mut buf, "magic")?;
        if buf != m {
            return Err(Error::format(
                self.path.clone(),
                format!("bad magic, expected {}", String::from_utf8_lossy(m)),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<usize> {
        let mut b = [0u8; 4];
        self.exact(&mut b, "header")?;
        Ok(u32::from_le_bytes(b) as usize)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n.checked_mul(8).ok_or_else(|| Error::format(self.path.clone(), "size overflow"))?];
        self.exact(&mut buf, "payload")?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    /// Errors if any bytes remain.
    pub fn finish(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::format(self.path, "trailing bytes")),
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }
}

pub fn write_features(path: &Path, m: &Matrix) -> Result<()> {
    super::write_atomic(path, |w| {
        let mut b = BinWriter::new(w);
        b.magic(FEATURE_MAGIC)?;
        b.u32(m.rows())?;
        b.u32(m.cols())?;
        b.f64s(m.as_slice())
    })
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    let f = std::fs::File::open(path)?;
    let mut r = BinReader::new(std::io::BufReader::new(f), path.display().to_string());
    r.expect_magic(FEATURE_MAGIC)?;
    let t = r.u32()?;
    let d = r.u32()?;
    let data = r.f64s(t * d)?;
    r.finish()?;
    Matrix::from_vec(t, d, data)
}
