//! Little-endian binary parameter checkpoints.
//!
//! Layout:
//!
//! ```text
//! magic        8 bytes   "PLLCKPT\0"
//! version      u32       1
//! header_len   u32       followed by UTF-8 header text (free-form key=value lines)
//! count        u32       number of tensors
//! shape table  count x { name_len u16, name bytes, ndim u32, dims u64 x ndim }
//! payload      f64 x sum(prod(dims)), tensors in table order
//! ```

use std::io::{Read, Write};

use super::KernelError;

pub const MAGIC: &[u8; 8] = b"PLLCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub header: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Looks up `key=value` in the header text.
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.lines().find_map(|line| {
            let (k, v) = line.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, KernelError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header = self.header.as_bytes();
        out.extend_from_slice(&u32::try_from(header.len()).map_err(too_big)?.to_le_bytes());
        out.extend_from_slice(header);
        out.extend_from_slice(&u32::try_from(self.tensors.len()).map_err(too_big)?.to_le_bytes());
        for t in &self.tensors {
            let expected: usize = t.shape.iter().product();
            if expected != t.values.len() {
                return Err(KernelError::Dimension {
                    expected: format!("{expected} values for {}", t.name),
                    found: format!("{}", t.values.len()),
                });
            }
            let name = t.name.as_bytes();
            out.extend_from_slice(&u16::try_from(name.len()).map_err(too_big)?.to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&u32::try_from(t.shape.len()).map_err(too_big)?.to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), KernelError> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, KernelError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KernelError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(KernelError::Checkpoint("bad magic bytes".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(KernelError::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = cur.u32()? as usize;
        let header = String::from_utf8(cur.take(header_len)?.to_vec())
            .map_err(|_| KernelError::Checkpoint("header is not UTF-8".into()))?;
        let count = cur.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| KernelError::Checkpoint("tensor name is not UTF-8".into()))?;
            let ndim = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                shape.push(usize::try_from(cur.u64()?).map_err(|_| {
                    KernelError::Checkpoint("dimension does not fit in usize".into())
                })?);
            }
            table.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(table.len());
        for (name, shape) in table {
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| KernelError::Checkpoint(format!("tensor {name} is too large")))?;
            let mut values = Vec::with_capacity(n.min(bytes.len() / 8));
            for _ in 0..n {
                values.push(f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")));
            }
            tensors.push(NamedTensor { name, shape, values });
        }
        if cur.pos != bytes.len() {
            return Err(KernelError::Checkpoint(format!(
                "{} trailing bytes after payload",
                bytes.len() - cur.pos
            )));
        }
        Ok(Self { header, tensors })
    }
}

fn too_big<E>(_: E) -> KernelError {
    KernelError::Checkpoint("field exceeds format limits".into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KernelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            KernelError::Checkpoint(format!("truncated checkpoint at byte {}", self.pos))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, KernelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, KernelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, KernelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
