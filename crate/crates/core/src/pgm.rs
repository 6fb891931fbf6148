//! Netpbm graymap (PGM) codec, binary `P5` and ASCII `P2`.

use crate::{Error, Result};

/// A decoded graymap with samples rescaled to 8 bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

const MAX_DIM: usize = 1 << 15;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("pgm", format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format("pgm", format!("{what} out of range")))
    }
}

pub fn decode(data: &[u8]) -> Result<Graymap> {
    if data.len() < 2 || data[0] != b'P' || !(data[1] == b'5' || data[1] == b'2') {
        return Err(Error::format("pgm", "missing P5/P2 magic"));
    }
    let binary = data[1] == b'5';
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(Error::format("pgm", format!("bad dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("pgm", format!("bad maxval {maxval}")));
    }
    let n = width * height;
    let mut raw = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
            return Err(Error::format("pgm", "missing raster separator"));
        }
        cur.pos += 1;
        let bpp = if maxval < 256 { 1 } else { 2 };
        let body = &data[cur.pos..];
        if body.len() < n * bpp {
            return Err(Error::format("pgm", format!("raster truncated: {} of {} bytes", body.len(), n * bpp)));
        }
        for i in 0..n {
            let v = if bpp == 1 {
                body[i] as usize
            } else {
                ((body[2 * i] as usize) << 8) | body[2 * i + 1] as usize
            };
            raw.push(v);
        }
    } else {
        for _ in 0..n {
            raw.push(cur.number("sample")?);
        }
    }
    let mut pixels = Vec::with_capacity(n);
    for v in raw {
        if v > maxval {
            return Err(Error::format("pgm", format!("sample {v} exceeds maxval {maxval}")));
        }
        pixels.push(if maxval == 255 {
            v as u8
        } else {
            ((v * 255 + maxval / 2) / maxval) as u8
        });
    }
    Ok(Graymap { width, height, pixels })
}

/// Encodes as binary `P5` with maxval 255.
pub fn encode(map: &Graymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend_from_slice(&map.pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let g = Graymap { width: 3, height: 2, pixels: vec![0, 10, 255, 7, 8, 9] };
        assert_eq!(decode(&encode(&g)).unwrap(), g);
    }

    #[test]
    fn ascii_with_comments_and_maxval_rescale() {
        let src = b"P2\n# a comment\n2 2\n15\n0 15\n# mid\n5 10\n";
        let g = decode(src).unwrap();
        assert_eq!(g.pixels, vec![0, 255, 85, 170]);
    }

    #[test]
    fn sixteen_bit_samples() {
        let mut src = b"P5 1 1 65535\n".to_vec();
        src.extend_from_slice(&[0xff, 0xff]);
        assert_eq!(decode(&src).unwrap().pixels, vec![255]);
    }

    #[test]
    fn malformed_inputs_are_errors() {
        assert!(decode(b"").is_err());
        assert!(decode(b"P6 1 1 255\n\0\0\0").is_err());
        assert!(decode(b"P5 2 2 255\n\0\0").is_err());
        assert!(decode(b"P5 0 2 255\n").is_err());
        assert!(decode(b"P2 1 1 10 11").is_err());
        assert!(decode(b"P5 99999999999999999999999 1 255\n").is_err());
    }
}
