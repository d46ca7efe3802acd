//! Binary voxel file: magic "NUIV", version, dims as three little-endian
//! u32, then bit-packed occupancy in x-major, y, z order (LSB-first bytes).

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::OccupancyGrid;
use crate::error::Result;
use crate::wire;

pub const MAGIC: &[u8; 4] = b"NUIV";
pub const VERSION: u16 = 1;

pub fn write_nuiv<W: Write>(grid: &OccupancyGrid, w: &mut W) -> Result<()> {
    let (nx, ny, nz) = grid.dims();
    w.write_all(MAGIC)?;
    wire::write_u16(w, VERSION)?;
    wire::write_u32(w, nx as u32)?;
    wire::write_u32(w, ny as u32)?;
    wire::write_u32(w, nz as u32)?;
    w.write_all(&grid.packed_bytes())?;
    Ok(())
}

pub fn save_nuiv(grid: &OccupancyGrid, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_nuiv(grid, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_nuiv<R: Read>(r: &mut R) -> Result<OccupancyGrid> {
    wire::expect_magic(r, MAGIC, "voxel file")?;
    wire::expect_version(r, VERSION)?;
    let nx = wire::read_u32(r)? as usize;
    let ny = wire::read_u32(r)? as usize;
    let nz = wire::read_u32(r)? as usize;
    let nbytes = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .map(|n| n.div_ceil(8))
        .ok_or_else(|| crate::error::Error::format("voxel dims overflow"))?;
    let mut bytes = vec![0u8; nbytes];
    r.read_exact(&mut bytes)?;
    OccupancyGrid::from_packed_bytes(nx, ny, nz, &bytes)
}

pub fn load_nuiv(path: &Path) -> Result<OccupancyGrid> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_nuiv(&mut r)
}

/// Header-only peek used by `info`.
pub fn read_nuiv_dims(path: &Path) -> Result<(usize, usize, usize)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    wire::expect_magic(&mut r, MAGIC, "voxel file")?;
    wire::expect_version(&mut r, VERSION)?;
    Ok((
        wire::read_u32(&mut r)? as usize,
        wire::read_u32(&mut r)? as usize,
        wire::read_u32(&mut r)? as usize,
    ))
}
