//! Binary 8-bit PGM (P5) maps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::localization::Mask;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl GrayMap {
    /// Nonzero pixels become foreground.
    pub fn to_mask(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            cells: self.data.iter().map(|&v| v > 0).collect(),
        }
    }

    /// Foreground pixels become 255.
    pub fn from_mask(mask: &Mask) -> Self {
        GrayMap {
            height: mask.height,
            width: mask.width,
            data: mask.cells.iter().map(|&c| if c { 255 } else { 0 }).collect(),
        }
    }
}

pub fn encode_pgm(map: &GrayMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend_from_slice(&map.data);
    out
}

/// Parses a P5 file with `maxval <= 255`. Comments in the header are skipped.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayMap> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found `{}`", fields[0])));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM {what} `{s}`")))
    };
    let width = num(&fields[1], "width")?;
    let height = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let len = width * height;
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() < len {
        return Err(Error::Corruption(format!(
            "PGM raster has {} bytes, expected {len}",
            raster.len()
        )));
    }
    Ok(GrayMap {
        height,
        width,
        data: raster[..len].to_vec(),
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(map: &GrayMap, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &encode_pgm(map))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_size() {
        let m = GrayMap {
            height: 2,
            width: 3,
            data: vec![0, 1, 2, 3, 4, 255],
        };
        let bytes = encode_pgm(&m);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 6);
        assert_eq!(decode_pgm(&bytes).unwrap(), m);
    }

    #[test]
    fn comments_and_errors() {
        let bytes = b"P5 # made by hand\n2 1\n# another\n255\n\x07\x09";
        let m = decode_pgm(bytes).unwrap();
        assert_eq!(m.data, vec![7, 9]);
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\x00"), Err(Error::Corruption(_))));
    }
}
