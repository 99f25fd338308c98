//! Binary graymap (P5) reading and writing.
//!
//! Samples are kept as stored; files with `maxval < 256` use one byte per
//! sample, otherwise two bytes, big-endian. Files are always written with
//! `maxval` 65535.

use std::path::Path;

use crate::error::{Error, Result};

/// A 16-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray16 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Gray16 {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Input(format!("{} samples for a {width}x{height} image", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: u16) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Input(format!("PGM: {}", msg.into()))
}

/// Reads the next header token, skipping whitespace and `#` comments.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(bad("truncated header"));
    }
    Ok(&bytes[start..*pos])
}

fn number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let t = token(bytes, pos)?;
    std::str::from_utf8(t)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(format!("bad header field {:?}", String::from_utf8_lossy(t))))
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Gray16> {
    let mut pos = 0;
    if token(bytes, &mut pos)? != b"P5" {
        return Err(bad("not a binary graymap (P5)"));
    }
    let width = number(bytes, &mut pos)?;
    let height = number(bytes, &mut pos)?;
    let maxval = number(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(bad("empty image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad(format!("maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let wide = maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    let raster = bytes.get(pos..).filter(|r| r.len() >= need).ok_or_else(|| bad("truncated raster"))?;
    let data: Vec<u16> = if wide {
        raster[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster[..need].iter().map(|&b| b as u16).collect()
    };
    if data.iter().any(|&v| v as usize > maxval) {
        return Err(bad("sample exceeds maxval"));
    }
    Ok(Gray16 { width, height, data })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Gray16> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_pgm(&bytes).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn encode_pgm(img: &Gray16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 2);
    for v in &img.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Gray16) -> Result<()> {
    std::fs::write(path, encode_pgm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let img = Gray16::new(2, 1, vec![0x0102, 0xfffe]).unwrap();
        let b = encode_pgm(&img);
        assert_eq!(&b[..], b"P5\n2 1\n65535\n\x01\x02\xff\xfe");
    }

    #[test]
    fn eight_bit_and_comments() {
        let b = b"P5 # comment\n3 # width\n 1\n255\n\x00\x07\xff";
        let img = parse_pgm(b).unwrap();
        assert_eq!(img.data, vec![0, 7, 255]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n65535\n\x00\x01").is_err());
        assert!(parse_pgm(b"P5\n0 2\n255\n").is_err());
        assert!(parse_pgm(b"P5\n1 1\n2\n\x03").is_err());
        assert!(parse_pgm(b"P5\n1 1\n70000\n\x00\x00").is_err());
        assert!(read_pgm("/nonexistent/x.pgm").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let data: Vec<u16> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 17) as u16).collect();
            let img = Gray16::new(w, h, data).unwrap();
            prop_assert_eq!(parse_pgm(&encode_pgm(&img)).unwrap(), img);
        }
    }
}
