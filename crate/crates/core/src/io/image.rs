//! 8-bit RGB images: binary PPM (P6) and PNG.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Skips whitespace and `#` comments, then reads one unsigned decimal token.
fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(parse_err(*pos, "truncated header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(parse_err(start, "expected a decimal number"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(start, "number out of range"))
}

/// Decodes a binary P6 PPM with maxval 255 into `[1, 3, H, W]` values in [0, 1].
pub fn decode_ppm<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(parse_err(0, "bad magic, expected P6"));
    }
    let mut pos = 2;
    let w = header_number(bytes, &mut pos)?;
    let h = header_number(bytes, &mut pos)?;
    let maxval_at = pos;
    let maxval = header_number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PPM maxval {} (byte {}); only 255 is supported",
            maxval, maxval_at
        )));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(parse_err(pos, "expected whitespace after maxval")),
    }
    if w == 0 || h == 0 {
        return Err(parse_err(pos, "empty image"));
    }
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(parse_err(
            bytes.len(),
            format!("truncated pixel data: need {} bytes from offset {}", need, pos),
        ));
    }
    Ok(interleaved_to_tensor(&bytes[pos..pos + need], w, h, 3))
}

fn interleaved_to_tensor<T: Scalar>(px: &[u8], w: usize, h: usize, stride: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); 3 * w * h];
    for i in 0..w * h {
        for c in 0..3 {
            data[c * w * h + i] = T::of(px[i * stride + c] as f64 / 255.0);
        }
    }
    Tensor::new(&[1, 3, h, w], data).expect("image shape")
}

fn tensor_to_rgb<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize, Vec<u8>)> {
    let (n, c, h, w) = t.dims4()?;
    if n != 1 || c != 3 {
        return Err(Error::Shape(format!(
            "images are saved from [1, 3, H, W] tensors, got {:?}",
            t.shape()
        )));
    }
    let d = t.data();
    let mut out = Vec::with_capacity(3 * w * h);
    for i in 0..w * h {
        for ch in 0..3 {
            let v = (d[ch * w * h + i].as_f64() * 255.0).round().clamp(0.0, 255.0);
            out.push(v as u8);
        }
    }
    Ok((w, h, out))
}

pub fn encode_ppm<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let (w, h, px) = tensor_to_rgb(t)?;
    let mut out = format!("P6\n{} {}\n255\n", w, h).into_bytes();
    out.extend(px);
    Ok(out)
}

pub fn decode_png<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| parse_err(0, format!("PNG: {}", e)))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| parse_err(0, format!("PNG: {}", e)))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "PNG bit depth {:?}; only 8-bit is supported",
            info.bit_depth
        )));
    }
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG color type {:?}; only RGB and RGBA are supported",
                other
            )))
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    Ok(interleaved_to_tensor(&buf[..w * h * stride], w, h, stride))
}

fn encode_png<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let (w, h, px) = tensor_to_rgb(t)?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::UnsupportedFormat(format!("PNG encode: {}", e)))?;
        writer
            .write_image_data(&px)
            .map_err(|e| Error::UnsupportedFormat(format!("PNG encode: {}", e)))?;
    }
    Ok(out)
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads a PPM or PNG file (chosen by content) as `[1, 3, H, W]` in [0, 1].
pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        decode_ppm(&bytes)
    };
    decoded.map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {}", path.display(), message),
        },
        other => other,
    })
}

/// Saves as PNG for a `.png` extension, PPM otherwise. Values are clamped to [0, 1].
pub fn save_image<T: Scalar>(t: &Tensor<T>, path: &Path) -> Result<()> {
    let bytes = if is_png(path) { encode_png(t)? } else { encode_ppm(t)? };
    super::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_red_pixel() {
        let t: Tensor<f64> = decode_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!(t.shape(), &[1, 3, 1, 1]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let t: Tensor<f64> = decode_ppm(b"P6 # made by hand\n1 1\n255\n\x00\xff\x00").unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let err = decode_ppm::<f64>(b"P5\n1 1\n255\n\x00").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncated_and_unsupported() {
        let err = decode_ppm::<f64>(b"P6\n2 2\n255\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = decode_ppm::<f64>(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
        let err = decode_ppm::<f64>(b"P6\n1").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
