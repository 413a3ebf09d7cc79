//! Primitives for the single-file binary container format.
//!
//! Checkpoints and corpus caches share one encoding: an 8-byte magic tag,
//! a u32 format version, then a body of length-prefixed fields. Everything
//! is little-endian; floats are raw f64 bits, so values round-trip
//! exactly. Strings are u32-length-prefixed UTF-8. Tensors are a u32 rank,
//! that many u32 extents, then the row-major f64 data.
//!
//! Files are written to a sibling temporary path and renamed into place,
//! so a crash mid-write never leaves a truncated file under the real name.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DscError, DscResult};
use crate::tensor::Tensor;

fn io_err(path: &Path, e: std::io::Error) -> DscError {
    DscError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Accumulates one container body in memory.
pub struct ContainerWriter {
    buf: Vec<u8>,
}

impl ContainerWriter {
    pub fn new(magic: &[u8; 8], version: u32) -> ContainerWriter {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        ContainerWriter { buf }
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_string(&mut self, s: &str) {
        self.put_u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn put_tensor(&mut self, t: &Tensor) {
        self.put_u32(t.shape().len() as u32);
        for &e in t.shape() {
            self.put_u32(e as u32);
        }
        for &v in t.data() {
            self.put_f64(v);
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }

    /// Writes atomically: temp file in the target directory, then rename.
    pub fn write_to(&self, path: &Path) -> DscResult<()> {
        let tmp_name = format!(
            ".{}.tmp",
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        );
        let tmp = match path.parent().filter(|p| !p.as_os_str().is_empty()) {
            Some(d) => d.join(&tmp_name),
            None => std::path::PathBuf::from(&tmp_name),
        };
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(&self.buf).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
        Ok(())
    }
}

/// Walks one container body, validating as it goes.
pub struct ContainerReader {
    buf: Vec<u8>,
    pos: usize,
    source: String,
}

impl ContainerReader {
    pub fn open(path: &Path, magic: &[u8; 8], expect_version: u32) -> DscResult<ContainerReader> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| io_err(path, e))?;
        let mut r = ContainerReader {
            buf,
            pos: 0,
            source: path.display().to_string(),
        };
        let head = r.take(8)?;
        if head != magic {
            return Err(DscError::Container(format!(
                "{}: wrong magic, not a {} file",
                r.source,
                String::from_utf8_lossy(&magic[..magic.len() - 1])
            )));
        }
        let version = r.get_u32()?;
        if version != expect_version {
            return Err(DscError::Container(format!(
                "{}: format version {} is unsupported (expected {})",
                r.source, version, expect_version
            )));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> DscResult<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(DscError::Container(format!(
                "{}: truncated at byte {}",
                self.source, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn get_u8(&mut self) -> DscResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u32(&mut self) -> DscResult<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn get_u64(&mut self) -> DscResult<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn get_f64(&mut self) -> DscResult<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn get_string(&mut self) -> DscResult<String> {
        let len = self.get_u32()? as usize;
        let source = self.source.clone();
        let b = self.take(len)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| DscError::Container(format!("{}: invalid UTF-8 string", source)))
    }

    pub fn get_tensor(&mut self) -> DscResult<Tensor> {
        let rank = self.get_u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(DscError::Container(format!(
                "{}: implausible tensor rank {}",
                self.source, rank
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.get_u32()? as usize);
        }
        let len: usize = shape.iter().product();
        if len == 0 || len.saturating_mul(8) > self.buf.len() {
            return Err(DscError::Container(format!(
                "{}: implausible tensor shape {:?}",
                self.source, shape
            )));
        }
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.get_f64()?);
        }
        Tensor::from_vec(&shape, data)
            .map_err(|e| DscError::Container(format!("{}: {}", self.source, e)))
    }

    /// Fails unless every byte has been consumed; trailing garbage means
    /// the file does not match the expected layout.
    pub fn finish(self) -> DscResult<()> {
        if self.pos != self.buf.len() {
            return Err(DscError::Container(format!(
                "{}: {} unread trailing bytes",
                self.source,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}
