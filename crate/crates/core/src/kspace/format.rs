//! Binary grid and mask files.
//!
//! CIM1: `"CIMGv1\0\0"`, u32 LE height, u32 LE width, u8 domain tag
//! (0 = image, 1 = k-space), 3 pad bytes, then H·W `(re, im)` f32 LE pairs.
//!
//! MSK1: `"MASKv1\0\0"`, u32 LE height, u32 LE width, then H·W bytes in {0, 1}.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::image::{ComplexImage, KSpace};
use super::mask::Mask;
use crate::error::{Error, Result};

pub const CIM_MAGIC: &[u8; 8] = b"CIMGv1\0\0";
pub const MASK_MAGIC: &[u8; 8] = b"MASKv1\0\0";

/// Upper bound on grid side length accepted from a file header.
const MAX_SIDE: u32 = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Image,
    KSpace,
}

/// Contents of a CIM1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum Cim {
    Image(ComplexImage),
    KSpace(KSpace),
}

impl Cim {
    pub fn domain(&self) -> Domain {
        match self {
            Cim::Image(_) => Domain::Image,
            Cim::KSpace(_) => Domain::KSpace,
        }
    }

    pub fn grid(&self) -> &ComplexImage {
        match self {
            Cim::Image(g) => g,
            Cim::KSpace(k) => k.grid(),
        }
    }
}

pub fn write_cim<W: Write>(mut out: W, grid: &ComplexImage, domain: Domain) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + grid.len() * 8);
    buf.extend_from_slice(CIM_MAGIC);
    buf.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    buf.push(match domain {
        Domain::Image => 0,
        Domain::KSpace => 1,
    });
    buf.extend_from_slice(&[0; 3]);
    encode_complex_f32(grid.data(), &mut buf);
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_cim<R: Read>(mut input: R) -> Result<Cim> {
    let mut header = [0u8; 20];
    input.read_exact(&mut header).map_err(truncated)?;
    if &header[..8] != CIM_MAGIC {
        return Err(Error::Format("not a CIM1 file (bad magic)".into()));
    }
    let (h, w) = dims(&header[8..16])?;
    let domain = match header[16] {
        0 => Domain::Image,
        1 => Domain::KSpace,
        tag => return Err(Error::Format(format!("unknown CIM1 domain tag {tag}"))),
    };
    let mut payload = vec![0u8; h * w * 8];
    input.read_exact(&mut payload).map_err(truncated)?;
    let data = decode_complex_f32(&payload);
    let grid = ComplexImage::new(h, w, data).map_err(|e| match e {
        Error::NonFinite(msg) => Error::Format(format!("CIM1 payload is not finite: {msg}")),
        other => other,
    })?;
    Ok(match domain {
        Domain::Image => Cim::Image(grid),
        Domain::KSpace => Cim::KSpace(KSpace::from_grid(grid)),
    })
}

pub fn write_mask<W: Write>(mut out: W, mask: &Mask) -> Result<()> {
    let (h, w) = mask.shape();
    let mut buf = Vec::with_capacity(16 + h * w);
    buf.extend_from_slice(MASK_MAGIC);
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(mask.entries());
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_mask<R: Read>(mut input: R) -> Result<Mask> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(truncated)?;
    if &header[..8] != MASK_MAGIC {
        return Err(Error::Format("not a MSK1 file (bad magic)".into()));
    }
    let (h, w) = dims(&header[8..16])?;
    let mut entries = vec![0u8; h * w];
    input.read_exact(&mut entries).map_err(truncated)?;
    Mask::from_entries(h, w, entries).map_err(|e| Error::Format(e.to_string()))
}

/// Little-endian `(re, im)` f32 pairs to complex samples.
pub fn decode_complex_f32(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect()
}

pub fn encode_complex_f32(data: &[Complex64], out: &mut Vec<u8>) {
    for z in data {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
}

fn dims(bytes: &[u8]) -> Result<(usize, usize)> {
    let h = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if h == 0 || w == 0 || h > MAX_SIDE || w > MAX_SIDE {
        return Err(Error::Format(format!("implausible grid size {h}x{w}")));
    }
    Ok((h as usize, w as usize))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}
