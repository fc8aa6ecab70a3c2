//! Binary raster container.
//!
//! Layout: magic `BONU`, version byte (1), dtype byte (0 = f32, 1 = u16,
//! 2 = u8), height and width as u32 little-endian, then the row-major
//! payload in little-endian. Readers reject anything else, naming the byte
//! offset of the problem.

use std::io::Write;
use std::path::Path;

use nucseg_core::Raster;

pub const MAGIC: &[u8; 4] = b"BONU";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    U16 = 1,
    U8 = 2,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U16 => 2,
            DType::U8 => 1,
        }
    }

    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(DType::F32),
            1 => Some(DType::U16),
            2 => Some(DType::U8),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::U16 => "u16",
            DType::U8 => "u8",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("byte {offset}: file ends early, expected {expected} more bytes")]
    Truncated { offset: usize, expected: usize },
    #[error("byte 0: bad magic {found:?}, expected \"BONU\"")]
    BadMagic { found: Vec<u8> },
    #[error("byte 4: unsupported version {0}")]
    BadVersion(u8),
    #[error("byte 5: unknown dtype {0}")]
    BadDType(u8),
    #[error("byte {offset}: {what} must be positive")]
    ZeroDim { offset: usize, what: &'static str },
    #[error("byte {offset}: {extra} trailing bytes after the payload")]
    Trailing { offset: usize, extra: usize },
    #[error("byte 5: expected dtype {expected}, found {found}")]
    WrongDType {
        expected: &'static str,
        found: &'static str,
    },
    #[error("byte {offset}: non-finite value {value}")]
    NonFinite { offset: usize, value: f32 },
}

/// Element types storable in a raster file.
pub trait Element: Copy {
    const DTYPE: DType;
    fn put(self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(b: &[u8]) -> Self {
        f32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }
}

impl Element for u16 {
    const DTYPE: DType = DType::U16;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(b: &[u8]) -> Self {
        u16::from_le_bytes([b[0], b[1]])
    }
}

impl Element for u8 {
    const DTYPE: DType = DType::U8;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn take(b: &[u8]) -> Self {
        b[0]
    }
}

/// A decoded raster of whichever dtype the file declared.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyRaster {
    F32(Raster<f32>),
    U16(Raster<u16>),
    U8(Raster<u8>),
}

impl AnyRaster {
    pub fn dtype(&self) -> DType {
        match self {
            AnyRaster::F32(_) => DType::F32,
            AnyRaster::U16(_) => DType::U16,
            AnyRaster::U8(_) => DType::U8,
        }
    }
}

pub fn encode<T: Element>(raster: &Raster<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + raster.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE as u8);
    out.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    out.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    for &v in raster.iter() {
        v.put(&mut out);
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn decode_payload<T: Element>(h: usize, w: usize, payload: &[u8]) -> Raster<T> {
    let size = T::DTYPE.size();
    let data = payload.chunks_exact(size).map(T::take).collect();
    Raster::from_vec(h, w, data).expect("dimensions checked")
}

pub fn decode(bytes: &[u8]) -> Result<AnyRaster, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            expected: HEADER_LEN - bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes[..4].to_vec(),
        });
    }
    if bytes[4] != VERSION {
        return Err(FormatError::BadVersion(bytes[4]));
    }
    let dtype = DType::from_u8(bytes[5]).ok_or(FormatError::BadDType(bytes[5]))?;
    let h = u32_at(bytes, 6) as usize;
    let w = u32_at(bytes, 10) as usize;
    if h == 0 {
        return Err(FormatError::ZeroDim {
            offset: 6,
            what: "height",
        });
    }
    if w == 0 {
        return Err(FormatError::ZeroDim {
            offset: 10,
            what: "width",
        });
    }
    let need = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(dtype.size()))
        .unwrap_or(usize::MAX);
    let have = bytes.len() - HEADER_LEN;
    if have < need {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            expected: need - have,
        });
    }
    if have > need {
        return Err(FormatError::Trailing {
            offset: HEADER_LEN + need,
            extra: have - need,
        });
    }
    let payload = &bytes[HEADER_LEN..];
    Ok(match dtype {
        DType::F32 => AnyRaster::F32(decode_payload(h, w, payload)),
        DType::U16 => AnyRaster::U16(decode_payload(h, w, payload)),
        DType::U8 => AnyRaster::U8(decode_payload(h, w, payload)),
    })
}

pub fn write<T: Element>(path: &Path, raster: &Raster<T>) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| anyhow::Error::from(e).context(path.display().to_string()))?;
    f.write_all(&encode(raster))?;
    Ok(())
}

pub fn read(path: &Path) -> anyhow::Result<AnyRaster> {
    let bytes = std::fs::read(path).map_err(|e| anyhow::Error::from(e).context(path.display().to_string()))?;
    decode(&bytes).map_err(|e| anyhow::Error::from(e).context(path.display().to_string()))
}

/// Reads an f32 raster and rejects NaN or infinite entries.
pub fn read_f32(path: &Path) -> anyhow::Result<Raster<f32>> {
    let raster = match read(path)? {
        AnyRaster::F32(r) => r,
        other => {
            return Err(anyhow::Error::from(FormatError::WrongDType {
                expected: "f32",
                found: other.dtype().name(),
            })
            .context(path.display().to_string()))
        }
    };
    if let Some(i) = raster.iter().position(|v| !v.is_finite()) {
        return Err(anyhow::Error::from(FormatError::NonFinite {
            offset: HEADER_LEN + 4 * i,
            value: raster.as_slice()[i],
        })
        .context(path.display().to_string()));
    }
    Ok(raster)
}

/// Reads an integer raster (u8 or u16) widened to u32.
pub fn read_ids(path: &Path) -> anyhow::Result<Raster<u32>> {
    match read(path)? {
        AnyRaster::U16(r) => Ok(r.map(|&v| v as u32)),
        AnyRaster::U8(r) => Ok(r.map(|&v| v as u32)),
        AnyRaster::F32(_) => Err(anyhow::Error::from(FormatError::WrongDType {
            expected: "u16",
            found: "f32",
        })
        .context(path.display().to_string())),
    }
}
