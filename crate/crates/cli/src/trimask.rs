//! Tri-state masks stored as u16 rasters: 0 is background, 65535 is
//! ignore, anything else is the foreground instance id.

use anyhow::bail;
use nucseg_core::{Raster, Tri, TriMask};

pub const BACKGROUND: u16 = 0;
pub const IGNORE: u16 = u16::MAX;

pub fn encode(mask: &TriMask) -> anyhow::Result<Raster<u16>> {
    if let Some(id) = mask.iter().find_map(|t| match *t {
        Tri::Foreground(id) if id == 0 || id >= IGNORE as u32 => Some(id),
        _ => None,
    }) {
        bail!("foreground id {id} cannot be stored in a u16 mask");
    }
    Ok(mask.map(|t| match *t {
        Tri::Background => BACKGROUND,
        Tri::Ignore => IGNORE,
        Tri::Foreground(id) => id as u16,
    }))
}

pub fn decode(raw: &Raster<u16>) -> TriMask {
    raw.map(|&v| match v {
        BACKGROUND => Tri::Background,
        IGNORE => Tri::Ignore,
        id => Tri::Foreground(id as u32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = Raster::from_vec(
            1,
            4,
            vec![Tri::Background, Tri::Ignore, Tri::Foreground(1), Tri::Foreground(65534)],
        )
        .unwrap();
        let raw = encode(&m).unwrap();
        assert_eq!(raw.as_slice(), &[0, 65535, 1, 65534]);
        assert_eq!(decode(&raw), m);
        let big = Raster::from_vec(1, 1, vec![Tri::Foreground(65535)]).unwrap();
        assert!(encode(&big).is_err());
    }
}
