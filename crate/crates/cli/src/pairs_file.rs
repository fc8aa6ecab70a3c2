//! Binary container for supervised pixel pairs.
//!
//! Layout, all little-endian: magic `BONP`, version byte (1), height u32,
//! width u32, offset count u32, record count u32; then `(dr: i32, dc: i32)`
//! per offset; then `(anchor: u32, offset: u16, subset: u8)` per record.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use nucseg_core::affinity::{AffinityPairs, PairRecord, Subset};

pub const MAGIC: &[u8; 4] = b"BONP";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 21;
const OFFSET_LEN: usize = 8;
const RECORD_LEN: usize = 7;

pub fn encode(pairs: &AffinityPairs) -> Vec<u8> {
    let (h, w) = pairs.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + OFFSET_LEN * pairs.offsets().len() + RECORD_LEN * pairs.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [h as u32, w as u32, pairs.offsets().len() as u32, pairs.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &(dr, dc) in pairs.offsets() {
        out.extend_from_slice(&dr.to_le_bytes());
        out.extend_from_slice(&dc.to_le_bytes());
    }
    for r in pairs.records() {
        out.extend_from_slice(&r.anchor.to_le_bytes());
        out.extend_from_slice(&r.offset.to_le_bytes());
        out.push(r.subset as u8);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> anyhow::Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            bail!(
                "byte {}: file ends early, expected {} more bytes",
                self.bytes.len(),
                end - self.bytes.len()
            );
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> anyhow::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> anyhow::Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> anyhow::Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> anyhow::Result<AffinityPairs> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        bail!("byte 0: bad magic, expected \"BONP\"");
    }
    let version = cur.take(1)?[0];
    if version != VERSION {
        bail!("byte 4: unsupported version {version}");
    }
    let h = cur.u32()? as usize;
    let w = cur.u32()? as usize;
    let n_off = cur.u32()? as usize;
    let n_rec = cur.u32()? as usize;
    let expected = HEADER_LEN as u64 + OFFSET_LEN as u64 * n_off as u64 + RECORD_LEN as u64 * n_rec as u64;
    if (bytes.len() as u64) < expected {
        bail!(
            "byte {}: file ends early, expected {} more bytes",
            bytes.len(),
            expected - bytes.len() as u64
        );
    }
    if bytes.len() as u64 > expected {
        bail!("byte {expected}: {} trailing bytes", bytes.len() as u64 - expected);
    }
    let mut offsets = Vec::with_capacity(n_off);
    for _ in 0..n_off {
        offsets.push((cur.i32()?, cur.i32()?));
    }
    let mut records = Vec::with_capacity(n_rec);
    for _ in 0..n_rec {
        let at = cur.pos;
        let anchor = cur.u32()?;
        let offset = cur.u16()?;
        let raw = cur.take(1)?[0];
        let subset = Subset::from_u8(raw).ok_or_else(|| anyhow!("byte {}: unknown subset {raw}", at + 6))?;
        records.push(PairRecord { anchor, offset, subset });
    }
    AffinityPairs::from_parts(h, w, offsets, records).map_err(|e| anyhow!("byte {HEADER_LEN}: {e}"))
}

pub fn write(path: &Path, pairs: &AffinityPairs) -> anyhow::Result<()> {
    std::fs::write(path, encode(pairs)).with_context(|| path.display().to_string())
}

pub fn read(path: &Path) -> anyhow::Result<AffinityPairs> {
    let bytes = std::fs::read(path).with_context(|| path.display().to_string())?;
    decode(&bytes).with_context(|| path.display().to_string())
}
