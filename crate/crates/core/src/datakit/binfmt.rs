//! Shared little-endian record encoding with magic tag, format version,
//! and trailing CRC32. Used by the dataset, episode, and checkpoint
//! files.

use crate::{Error, Result};
use std::io::Read;
use std::path::Path;

pub(crate) const FORMAT_VERSION: u16 = 1;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { buf }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        std::fs::write(path, &self.buf).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

pub(crate) struct Reader<'a> {
    path: String,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Verifies the checksum, magic, and version before any field read.
    pub fn open(path: &Path, buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let path_s = path.display().to_string();
        if buf.len() < 10 {
            return Err(Error::Format {
                path: path_s,
                detail: "file too short for header and checksum".into(),
            });
        }
        let (payload, crc_bytes) = buf.split_at(buf.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::Checksum {
                path: path_s,
                stored,
                computed,
            });
        }
        let mut r = Self {
            path: path_s,
            buf: payload,
            pos: 0,
        };
        let found = r.bytes(4)?;
        if found != magic {
            return Err(Error::Format {
                path: r.path,
                detail: format!("bad magic {found:?}, expected {magic:?}"),
            });
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                path: r.path,
                detail: format!("unsupported format version {version}"),
            });
        }
        Ok(r)
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                path: self.path.clone(),
                detail: format!("truncated: wanted {n} bytes at offset {}", self.pos),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.bytes(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            path: self.path.clone(),
            detail: "non-utf8 string field".into(),
        })
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format {
                path: self.path.clone(),
                detail: format!(
                    "{} trailing payload bytes after last record",
                    self.buf.len() - self.pos
                ),
            });
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(buf)
}
