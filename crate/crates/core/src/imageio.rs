//! 8-bit binary PGM (P5) for grayscale images and masks, binary PPM (P6) for colour overlays.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(image: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match *image.shape() {
        [h, w] => (h, w),
        ref s => return Err(Error::shape("save_image", format!("expected H x W, got {s:?}"))),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

/// Interleaved RGB planes in `[0, 1]`, `H x W x 3`.
pub fn encode_ppm(rgb: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match *rgb.shape() {
        [h, w, 3] => (h, w),
        ref s => return Err(Error::shape("save_overlay", format!("expected H x W x 3, got {s:?}"))),
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(rgb.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    offset: usize,
}

/// Reads magic, width, height and maxval, skipping `#` comments, then exactly one whitespace byte.
fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!("missing {} magic", String::from_utf8_lossy(magic)));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| "expected a decimal header field".to_string())?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("header must end with a single whitespace byte".into());
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err("zero extent".into());
    }
    Ok(Header { width, height, maxval, offset: pos + 1 })
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |detail: String| Error::Format { kind: "PGM", path: path.to_path_buf(), detail };
    let hdr = parse_header(bytes, b"P5").map_err(bad)?;
    if hdr.maxval == 0 || hdr.maxval > 255 {
        return Err(bad(format!("maxval {} is not 8-bit", hdr.maxval)));
    }
    let n = hdr.width * hdr.height;
    let pixels = bytes.get(hdr.offset..hdr.offset + n).ok_or_else(|| bad(format!("expected {n} pixel bytes")))?;
    let scale = hdr.maxval as f64;
    Tensor::new(&[hdr.height, hdr.width], pixels.iter().map(|&b| (b as f64 / scale).min(1.0)).collect())
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

pub fn save_image(path: &Path, image: &Tensor) -> Result<()> {
    std::fs::write(path, encode_pgm(image)?).map_err(|e| Error::io(path, e))
}

pub fn save_rgb(path: &Path, rgb: &Tensor) -> Result<()> {
    std::fs::write(path, encode_ppm(rgb)?).map_err(|e| Error::io(path, e))
}

/// Grayscale image tinted red in proportion to `heat` (both `H x W` in `[0, 1]`).
pub fn overlay(image: &Tensor, heat: &Tensor) -> Result<Tensor> {
    if image.shape() != heat.shape() || image.rank() != 2 {
        return Err(Error::shape("overlay", format!("image {:?} vs heat {:?}", image.shape(), heat.shape())));
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let mut data = Vec::with_capacity(h * w * 3);
    for (&g, &a) in image.data().iter().zip(heat.data()) {
        let a = 0.6 * a.clamp(0.0, 1.0);
        data.extend([(1.0 - a) * g + a, (1.0 - a) * g, (1.0 - a) * g]);
    }
    Tensor::new(&[h, w, 3], data)
}
