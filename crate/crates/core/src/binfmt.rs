//! Little-endian raster containers.
//!
//! `QGRD` is the interchange format for day stacks of grids: a 16-byte header
//! (magic, `u32` days, `u32` rows, `u32` cols) followed by `days*rows*cols`
//! `f32` values, row-major and day-major. `QG64` has the identical header
//! layout with `f64` payload and is used where values must survive a round
//! trip bit-for-bit (model parameters).

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC_F32: [u8; 4] = *b"QGRD";
pub const MAGIC_F64: [u8; 4] = *b"QG64";

/// Dimensions stored in a block header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockDims {
    pub days: u32,
    pub rows: u32,
    pub cols: u32,
}

impl BlockDims {
    pub fn len(&self) -> usize {
        self.days as usize * self.rows as usize * self.cols as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn write_header<W: Write>(w: &mut W, magic: [u8; 4], dims: BlockDims) -> Result<()> {
    w.write_all(&magic)?;
    w.write_all(&dims.days.to_le_bytes())?;
    w.write_all(&dims.rows.to_le_bytes())?;
    w.write_all(&dims.cols.to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: [u8; 4]) -> Result<BlockDims> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[0..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&header[0..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    Ok(BlockDims {
        days: word(4),
        rows: word(8),
        cols: word(12),
    })
}

fn check_len(dims: BlockDims, len: usize) -> Result<()> {
    if dims.len() != len {
        return Err(Error::ShapeMismatch(format!(
            "header {}x{}x{} does not match {} values",
            dims.days, dims.rows, dims.cols, len
        )));
    }
    Ok(())
}

pub fn write_f32_block<W: Write>(w: &mut W, dims: BlockDims, data: &[f32]) -> Result<()> {
    check_len(dims, data.len())?;
    write_header(w, MAGIC_F32, dims)?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_f32_block<R: Read>(r: &mut R) -> Result<(BlockDims, Vec<f32>)> {
    let dims = read_header(r, MAGIC_F32)?;
    let mut buf = vec![0u8; dims.len() * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

pub fn write_f64_block<W: Write>(w: &mut W, dims: BlockDims, data: &[f64]) -> Result<()> {
    check_len(dims, data.len())?;
    write_header(w, MAGIC_F64, dims)?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_f64_block<R: Read>(r: &mut R) -> Result<(BlockDims, Vec<f64>)> {
    let dims = read_header(r, MAGIC_F64)?;
    let mut buf = vec![0u8; dims.len() * 8];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}
