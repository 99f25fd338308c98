//! Binary weight file.
//!
//! Little-endian throughout:
//!
//! ```text
//! "CNWB"            4 bytes magic
//! version           u32 (= 1)
//! layer_count       u32
//! per layer:
//!   name_len        u16
//!   name            name_len bytes, UTF-8
//!   dtype           u8 (0 = f32)
//!   ndim            u8
//!   dims            ndim x u32
//!   data            prod(dims) x f32
//! crc32             u32 over every preceding byte
//! ```

use std::path::Path;

use crate::graph::weights::{WeightEntry, WeightStore};

pub const MAGIC: &[u8; 4] = b"CNWB";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, thiserror::Error)]
pub enum WeightFileError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),
    #[error("bad shape for `{name}`: {reason}")]
    BadShape { name: String, reason: String },
    #[error("layer name is not valid UTF-8")]
    BadName,
    #[error("duplicate layer `{0}`")]
    DuplicateLayer(String),
    #[error("file truncated")]
    Truncated,
    #[error("{0} trailing bytes after the last layer")]
    TrailingBytes(usize),
    #[error("cannot encode `{name}`: {reason}")]
    Unencodable { name: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl WeightFileError {
    /// Stable numeric code per failure class.
    pub fn code(&self) -> u8 {
        match self {
            Self::BadMagic(_) => 1,
            Self::UnsupportedVersion(_) => 2,
            Self::ChecksumMismatch { .. } => 3,
            Self::UnsupportedDtype(_) => 4,
            Self::BadShape { .. } => 5,
            Self::BadName => 6,
            Self::DuplicateLayer(_) => 7,
            Self::Truncated => 8,
            Self::TrailingBytes(_) => 9,
            Self::Unencodable { .. } => 10,
            Self::Io(_) => 11,
        }
    }
}

pub fn encode(ws: &WeightStore) -> Result<Vec<u8>, WeightFileError> {
    let floats = ws.scalar_count();
    let mut out = Vec::with_capacity(16 + floats * 4 + ws.entries.len() * 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ws.entries.len() as u32).to_le_bytes());
    for (name, e) in &ws.entries {
        let bad = |reason: &str| WeightFileError::Unencodable {
            name: name.clone(),
            reason: reason.into(),
        };
        let name_len = u16::try_from(name.len()).map_err(|_| bad("name longer than 65535 bytes"))?;
        let ndim = u8::try_from(e.shape.len()).map_err(|_| bad("more than 255 dims"))?;
        if e.shape.iter().product::<usize>() != e.data.len() {
            return Err(bad("shape does not match data length"));
        }
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(ndim);
        for &d in &e.shape {
            let d = u32::try_from(d).map_err(|_| bad("dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightFileError> {
        let end = self.pos.checked_add(n).ok_or(WeightFileError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(WeightFileError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WeightFileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WeightFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WeightFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<WeightStore, WeightFileError> {
    if bytes.len() < 4 {
        return Err(WeightFileError::Truncated);
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(WeightFileError::BadMagic(magic));
    }
    if bytes.len() < 16 {
        return Err(WeightFileError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(WeightFileError::UnsupportedVersion(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WeightFileError::ChecksumMismatch { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 8 };
    let count = r.u32()?;
    let mut ws = WeightStore::default();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| WeightFileError::BadName)?
            .to_string();
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(WeightFileError::UnsupportedDtype(dtype));
        }
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let bad = |reason: &str| WeightFileError::BadShape {
            name: name.clone(),
            reason: reason.into(),
        };
        if shape.is_empty() {
            return Err(bad("zero dimensions"));
        }
        if shape.contains(&0) {
            return Err(bad("zero-sized dimension"));
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= (body.len() - r.pos) / 4)
            .ok_or_else(|| bad("extent exceeds remaining file"))?;
        let data = r
            .take(len * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if ws.entries.contains_key(&name) {
            return Err(WeightFileError::DuplicateLayer(name));
        }
        ws.insert(name, WeightEntry { shape, data });
    }
    if r.pos != body.len() {
        return Err(WeightFileError::TrailingBytes(body.len() - r.pos));
    }
    Ok(ws)
}

pub fn save_weights(ws: &WeightStore, path: impl AsRef<Path>) -> Result<u64, WeightFileError> {
    let bytes = encode(ws)?;
    std::fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore, WeightFileError> {
    decode(&std::fs::read(path)?)
}
