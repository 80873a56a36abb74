use std::path::Path;

use crate::error::{Error, Result};

/// Binary per-surface mask in image space; 0 = background, 255 = surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// Builds a mask from a predicate over `(column, row)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(if f(u, v) { 255 } else { 0 });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Raw gray values, thresholded at 128.
    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Result<Self> {
        if gray.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} bytes, got {}",
                width * height,
                gray.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: gray.iter().map(|&g| if g >= 128 { 255 } else { 0 }).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u] != 0
    }

    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.data[v * self.width + u] = if on { 255 } else { 0 };
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&d| d != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Reads a binary (P5) PGM with maxval 255, thresholding pixels at 128.
pub fn read_mask_pgm(path: &Path) -> Result<MaskImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, &path.display().to_string())
}

pub(crate) fn parse_pgm(bytes: &[u8], context: &str) -> Result<MaskImage> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::parse(context, "empty file"))?;
    match magic.as_slice() {
        b"P5" => {}
        b"P2" => return Err(Error::UnsupportedFormat("ASCII PGM (P2); only P5 is read".into())),
        other => {
            return Err(Error::parse(
                context,
                format!("bad magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos)
            .ok_or_else(|| Error::parse(context, format!("missing {name}")))?;
        *slot = std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(context, format!("invalid {name}")))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("PGM maxval {maxval}; only 255 is read")));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(context, "zero image dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse(context, "missing raster"));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(context, "image too large"))?;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::parse(context, format!("raster truncated: need {need} bytes")))?;
    MaskImage::from_gray(width, height, raster)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| bytes[start..*pos].to_vec())
}

pub(crate) fn encode_pgm(mask: &MaskImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.data);
    out
}

pub fn write_mask_pgm(mask: &MaskImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(w: usize, h: usize, data: &[u8]) -> Vec<u8> {
        let mut b = format!("P5\n# made by hand\n{w} {h}\n255\n").into_bytes();
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn threshold_examples() {
        assert!(parse_pgm(&pgm(4, 4, &[0; 16]), "t").unwrap().is_empty());
        assert_eq!(parse_pgm(&pgm(4, 4, &[255; 16]), "t").unwrap().count(), 16);
        let mut data = [0u8; 16];
        data[5] = 200;
        data[6] = 127;
        let m = parse_pgm(&pgm(4, 4, &data), "t").unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(1, 1));
    }

    #[test]
    fn corrupt_inputs_are_typed_errors() {
        assert!(matches!(parse_pgm(b"", "t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_pgm(b"P2\n2 2\n255\n0 0 0 0", "t"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(parse_pgm(b"P5\n2 2\n65535\n", "t"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(parse_pgm(b"P5\n2 2\n255\n\x00", "t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_pgm(b"P5\nx 2\n255\n", "t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_pgm(b"P6\n2 2\n255\n", "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn encode_then_parse() {
        let m = MaskImage::from_fn(7, 3, |u, v| (u + v) % 3 == 0);
        assert_eq!(parse_pgm(&encode_pgm(&m), "t").unwrap(), m);
    }
}
