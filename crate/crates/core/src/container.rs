//! Binary container shared by checkpoints and trace archives.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes
//! version      u32            (currently 1)
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON
//! block_count  u32
//! block_count times:
//!   name_len   u16
//!   name       name_len bytes of UTF-8
//!   rows       u32
//!   cols       u32
//!   data       rows * cols IEEE-754 f64, little-endian, row-major
//! ```
//!
//! Floats are stored by bit pattern, so a write/read cycle is exact.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const VERSION: u32 = 1;

/// A parsed container: JSON header plus named matrices in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: serde_json::Value,
    pub blocks: Vec<(String, Matrix)>,
}

impl Container {
    pub fn block(&self, name: &str) -> Result<&Matrix> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::format("container", format!("missing block {name:?}")))
    }
}

pub fn write_container<W: Write>(
    mut w: W,
    magic: &[u8; 8],
    header: &serde_json::Value,
    blocks: &[(String, &Matrix)],
) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(header)?;
    w.write_all(&len_u32(header.len(), "header")?.to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&len_u32(blocks.len(), "block count")?.to_le_bytes())?;
    for (name, m) in blocks {
        let name_len: u16 = name
            .len()
            .try_into()
            .map_err(|_| Error::format("container", "block name too long"))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&len_u32(m.rows(), "rows")?.to_le_bytes())?;
        w.write_all(&len_u32(m.cols(), "cols")?.to_le_bytes())?;
        let mut buf = Vec::with_capacity(m.len() * 8);
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_container<R: Read>(mut r: R, magic: &[u8; 8]) -> Result<Container> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::format(
            "container",
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&m), String::from_utf8_lossy(magic)),
        ));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format("container", format!("unsupported version {version}")));
    }
    let header_len = read_u32(&mut r)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header: serde_json::Value = serde_json::from_slice(&header)?;
    let count = read_u32(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut nl = [0u8; 2];
        r.read_exact(&mut nl)?;
        let mut name = vec![0u8; u16::from_le_bytes(nl) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::format("container", "block name is not UTF-8"))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut raw = vec![0u8; rows * cols * 8];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        blocks.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format("container", "trailing bytes after last block"));
    }
    Ok(Container { header, blocks })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    n.try_into()
        .map_err(|_| Error::format("container", format!("{what} {n} exceeds u32")))
}
