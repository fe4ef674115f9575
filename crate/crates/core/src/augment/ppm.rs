use std::io::Write;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Writes a binary PPM (P6). Single-channel images are replicated to RGB.
pub fn write_ppm<T: Scalar, W: Write>(image: &Image<T>, out: &mut W) -> Result<()> {
    let (c, h, w) = (image.channels(), image.height(), image.width());
    if c != 1 && c != 3 {
        return Err(Error::RejectedInput(format!(
            "PPM needs 1 or 3 channels, got {c}"
        )));
    }
    let mut buf = format!("P6\n{w} {h}\n255\n").into_bytes();
    let byte = |v: T| (v.f64().clamp(0.0, 1.0) * 255.0).round() as u8;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                buf.push(byte(image.at(if c == 1 { 0 } else { ch }, y, x)));
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}
