//! Shared framing for the binary container formats: 4-byte magic, `u16`
//! version, `u32` JSON header length, JSON header, then a raw payload. All
//! integers and floats are little-endian.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, offset: 0 }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(Error::parse(
                self.offset,
                format!("truncated: need {n} bytes, {} remain", self.bytes.len() - self.offset),
            ));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::parse(self.offset, "size overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::parse(
                self.offset,
                format!("{} trailing bytes", self.bytes.len() - self.offset),
            ));
        }
        Ok(())
    }

    /// Magic, version and JSON header.
    pub fn header<H: DeserializeOwned>(&mut self, magic: &[u8; 4], version: u16) -> Result<H> {
        let found = self.take(4)?;
        if found != magic {
            return Err(Error::parse(0, format!("bad magic {found:?}, expected {magic:?}")));
        }
        let v = self.u16()?;
        if v != version {
            return Err(Error::UnsupportedVersion {
                found: v,
                expected: version,
            });
        }
        let len = self.u32()? as usize;
        let at = self.offset;
        let json = self.take(len)?;
        serde_json::from_slice(json).map_err(|e| Error::parse(at, format!("header JSON: {e}")))
    }
}

pub(crate) fn write_header<H: Serialize>(out: &mut Vec<u8>, magic: &[u8; 4], version: u16, header: &H) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(())
}

pub(crate) fn write_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
