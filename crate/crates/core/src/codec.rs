//! Little-endian binary container helpers shared by the model and feature
//! store formats.
//!
//! Every container is `magic (8 bytes) | version u32 | body | sha256(all previous bytes)`.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DIGEST_LEN: usize = 32;

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn opt_str(&mut self, s: Option<&str>) {
        match s {
            Some(s) => {
                self.u8(1);
                self.str(s);
            }
            None => self.u8(0),
        }
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.usize(vs.len());
        for &v in vs {
            self.f64(v);
        }
    }

    /// Appends the checksum and returns the finished container.
    pub fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(digest.as_slice());
        self.buf
    }
}

pub struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
    pub version: u32,
}

impl<'a> Reader<'a> {
    /// Verifies magic, checksum, and that the version is one of `accepted`.
    pub fn open(bytes: &'a [u8], magic: &[u8; 8], accepted: &[u32]) -> Result<Self> {
        if bytes.len() < 8 + 4 + DIGEST_LEN {
            return Err(Error::Format("file too short".into()));
        }
        if &bytes[..8] != magic {
            return Err(Error::Format(format!(
                "bad magic, expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let (content, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(content).as_slice() != digest {
            return Err(Error::Format("checksum mismatch (truncated or corrupted file)".into()));
        }
        let version = u32::from_le_bytes(content[8..12].try_into().unwrap());
        if !accepted.contains(&version) {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected one of {accepted:?}"
            )));
        }
        Ok(Reader {
            body: content,
            pos: 12,
            version,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.body.len() {
            return Err(Error::Format("unexpected end of container".into()));
        }
        let s = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("length {v} overflows usize")))
    }

    /// Reads a length prefix and checks it against the bytes that remain,
    /// so a corrupted length can't trigger a huge allocation.
    pub fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.usize()?;
        let remaining = self.body.len() - self.pos;
        if n.saturating_mul(elem_size.max(1)) > remaining {
            return Err(Error::Format(format!("length {n} exceeds container size")));
        }
        Ok(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid utf-8 string".into()))
    }

    pub fn opt_str(&mut self) -> Result<Option<String>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.str()?)),
            t => Err(Error::Format(format!("bad option tag {t}"))),
        }
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.body.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.body.len() - self.pos)));
        }
        Ok(())
    }
}

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
