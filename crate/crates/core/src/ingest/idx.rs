//! Reader and writer for the IDX container MNIST ships in.
//!
//! Layout: a 4-byte big-endian magic (`0x00000803` for image stacks,
//! `0x00000801` for label vectors), one 4-byte big-endian length per
//! dimension, then an unsigned-byte payload in row-major order.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxKind {
    Images,
    Labels,
}

impl IdxKind {
    pub fn magic(self) -> u32 {
        match self {
            IdxKind::Images => IMAGES_MAGIC,
            IdxKind::Labels => LABELS_MAGIC,
        }
    }

    fn rank(self) -> usize {
        match self {
            IdxKind::Images => 3,
            IdxKind::Labels => 1,
        }
    }

    fn from_magic(magic: u32) -> Option<Self> {
        match magic {
            IMAGES_MAGIC => Some(IdxKind::Images),
            LABELS_MAGIC => Some(IdxKind::Labels),
            _ => None,
        }
    }
}

/// Decoded IDX file: dimensions exactly as encoded plus the raw payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub kind: IdxKind,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn images(n: usize, rows: usize, cols: usize, data: Vec<u8>) -> Self {
        Self {
            kind: IdxKind::Images,
            dims: vec![n, rows, cols],
            data,
        }
    }

    pub fn labels(data: Vec<u8>) -> Self {
        Self {
            kind: IdxKind::Labels,
            dims: vec![data.len()],
            data,
        }
    }

    /// Number of items along the leading dimension.
    pub fn count(&self) -> usize {
        self.dims[0]
    }

    /// Bytes per item (product of the trailing dimensions).
    pub fn item_size(&self) -> usize {
        self.dims[1..].iter().product()
    }
}

/// Decodes an IDX byte buffer. `origin` is only used to label errors.
pub fn parse_idx(bytes: &[u8], origin: &Path) -> Result<IdxTensor> {
    let fail = |msg: String| Error::Format {
        path: origin.to_path_buf(),
        msg,
    };
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| fail(format!("truncated header at byte {at}")))
    };

    let magic = word(0)?;
    let kind = IdxKind::from_magic(magic)
        .ok_or_else(|| fail(format!("unknown IDX magic number {magic:#010x}")))?;
    let dims = (0..kind.rank())
        .map(|d| word(4 + 4 * d).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * dims.len();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| fail("dimension product overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(fail(format!(
            "payload is {} bytes, dimensions {:?} require {expected}",
            payload.len(),
            dims
        )));
    }
    Ok(IdxTensor {
        kind,
        dims,
        data: payload.to_vec(),
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_idx(&bytes, path)
}

pub fn encode_idx(tensor: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&tensor.kind.magic().to_be_bytes());
    for d in &tensor.dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}

pub fn write_idx(path: impl AsRef<Path>, tensor: &IdxTensor) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_idx(tensor))?;
    f.sync_all()
}
