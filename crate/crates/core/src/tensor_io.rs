//! Single-tensor dump container used for mask exports.
//!
//! Layout: magic `WSEDTNSR`, version `u32`, dtype `u8` (0 = float32), rank `u8`,
//! `rank` dims as `u64`, then the row-major float32 payload. All little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"WSEDTNSR";
pub const TENSOR_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct DumpedTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn write_tensor<W: Write>(w: &mut W, dims: &[usize], data: &[f32]) -> Result<()> {
    let n: usize = dims.iter().product();
    if n != data.len() {
        return Err(Error::Shape(format!("{} values for dims {dims:?}", data.len())));
    }
    let rank = u8::try_from(dims.len())
        .map_err(|_| Error::InvalidArgument(format!("rank {} too large", dims.len())))?;
    let mut buf = Vec::with_capacity(16 + 8 * dims.len() + 4 * n);
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    buf.push(DTYPE_F32);
    buf.push(rank);
    for &d in dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io("<tensor stream>", e))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<DumpedTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<tensor stream>", e))?;
    let mut cur = Cursor::new(&bytes);
    if cur.take(8)? != TENSOR_MAGIC {
        return Err(Error::Format("not a tensor dump (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != TENSOR_VERSION {
        return Err(Error::Version {
            found: version,
            expected: TENSOR_VERSION,
        });
    }
    let dtype = cur.u8()?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported tensor dtype {dtype}")));
    }
    let rank = cur.u8()? as usize;
    let dims = (0..rank)
        .map(|_| cur.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("tensor dims overflow".into()))?;
    let payload = cur.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
    if !cur.is_at_end() {
        return Err(Error::Format("trailing bytes after tensor payload".into()));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(DumpedTensor { dims, data })
}

pub fn save_tensor(path: impl AsRef<Path>, dims: &[usize], data: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_tensor(&mut w, dims, data)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<DumpedTensor> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(&mut BufReader::new(f))
}

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn is_at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}
