//! Little-endian binary primitives shared by the dataset and checkpoint
//! formats. Vectors of f64 are written as a u32 length prefix followed by
//! packed little-endian 64-bit floats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub fn write_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

/// u32 length prefix, then packed little-endian f64 values.
pub fn write_f64_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    let n = u32::try_from(v.len())
        .map_err(|_| Error::Format(format!("vector too long to serialize: {}", v.len())))?;
    write_u32(w, n)?;
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Packed little-endian f64 values with no length prefix (count known from
/// surrounding header fields).
pub fn write_f64_raw<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_bytes<W: Write>(w: &mut W, v: &[u8]) -> Result<()> {
    let n = u32::try_from(v.len())
        .map_err(|_| Error::Format(format!("byte string too long: {}", v.len())))?;
    write_u32(w, n)?;
    w.write_all(v)?;
    Ok(())
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_bytes(w, s.as_bytes())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated file".into()))
}

pub fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_f64_vec<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = read_u32(r)? as usize;
    read_f64_raw(r, n)
}

pub fn read_f64_raw<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

pub fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

pub fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let bytes = read_bytes(r)?;
    String::from_utf8(bytes).map_err(|_| Error::Format("invalid utf-8 string".into()))
}
