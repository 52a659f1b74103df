//! Binary PPM (`P6`, 8-bit) images as `[3,H,W]` tensors in `[0,1]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encodes `[3,H,W]` with values in `[0,1]`.
pub fn encode(img: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = img.chw()?;
    if c != 3 {
        return Err(Error::Parameter(format!("PPM needs 3 channels, got {c}")));
    }
    if let Some(v) = img.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Parameter(format!(
            "PPM pixel value {v} outside [0, 1]; clamp before saving"
        )));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * h * w);
    let d = img.data();
    for i in 0..h * w {
        for ch in 0..3 {
            out.push((d[ch * h * w + i] * 255.0).round() as u8);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    if !bytes.starts_with(b"P6") {
        return Err(cur.err("missing P6 magic"));
    }
    cur.pos = 2;
    let w = cur.number("width")?;
    let h = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if w == 0 || h == 0 {
        return Err(cur.err(format!("empty image {w}x{h}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(cur.err(format!("unsupported maxval {maxval}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected whitespace before pixel data")),
    }
    let need = 3 * w * h;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::Parse {
            offset: bytes.len(),
            reason: format!("truncated pixel data: {} of {need} bytes", payload.len()),
        });
    }
    let scale = maxval as f64;
    let mut data = vec![0.0; need];
    for i in 0..h * w {
        for ch in 0..3 {
            data[ch * h * w + i] = payload[3 * i + ch] as f64 / scale;
        }
    }
    Tensor::new(&[3, h, w], data)
}

pub fn save(path: impl AsRef<Path>, img: &Tensor) -> Result<()> {
    let bytes = encode(img)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&fs::read(path)?)
}
