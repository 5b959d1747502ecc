//! Little-endian binary helpers and 8-bit PGM output.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format {
        format: "u32 field",
        reason: format!("{v} does not fit in 32 bits"),
    })?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn write_f64s<W: Write, T: Real>(w: &mut W, values: &[T]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f64s<R: Read, T: Real>(r: &mut R, count: usize) -> Result<Vec<T>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

pub(crate) fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4], format: &'static str) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format {
        format,
        reason: "truncated header".into(),
    })?;
    if &b != magic {
        return Err(Error::Format {
            format,
            reason: format!("bad magic {:?}", String::from_utf8_lossy(&b)),
        });
    }
    Ok(())
}

/// Maps `[−1, 1]` linearly onto `[0, 255]`, clamping outside values.
pub fn to_gray<T: Real>(v: T) -> u8 {
    let x = ((v.to_f64_lossy() + 1.0) * 0.5 * 255.0).round();
    x.clamp(0.0, 255.0) as u8
}

/// Binary (P5) 8-bit PGM of a row-major image.
pub fn write_pgm<W: Write, T: Real>(mut w: W, width: usize, height: usize, pixels: &[T]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::DimensionMismatch {
            what: "PGM pixels",
            expected: width * height,
            got: pixels.len(),
        });
    }
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = pixels.iter().map(|&v| to_gray(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Places equally sized images side by side (row-major each).
pub fn hstack<T: Real>(width: usize, height: usize, images: &[&[T]]) -> Vec<T> {
    let mut out = Vec::with_capacity(width * height * images.len());
    for r in 0..height {
        for img in images {
            out.extend_from_slice(&img[r * width..(r + 1) * width]);
        }
    }
    out
}
