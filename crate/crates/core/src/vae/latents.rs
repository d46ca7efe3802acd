//! Latent file: header (count, V, c) followed by little-endian f32 payload.
//! Stores a flat sequence of latent sets; quad grouping is positional
//! (four consecutive sets per quad, slot order z0..z3).

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::LatentSet;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::wire;

pub const MAGIC: &[u8; 4] = b"NUIL";
pub const VERSION: u16 = 1;

pub fn write_latents<W: Write>(latents: &[LatentSet], w: &mut W) -> Result<()> {
    if latents.is_empty() {
        return Err(Error::invalid("refusing to write an empty latent file"));
    }
    let v = latents[0].latent_count();
    let c = latents[0].channels();
    for l in latents {
        if l.latent_count() != v || l.channels() != c {
            return Err(Error::shape("latent sets disagree on V x c"));
        }
    }
    w.write_all(MAGIC)?;
    wire::write_u16(w, VERSION)?;
    wire::write_u32(w, latents.len() as u32)?;
    wire::write_u32(w, v as u32)?;
    wire::write_u32(w, c as u32)?;
    for l in latents {
        for &x in l.z.data() {
            wire::write_f32(w, x)?;
        }
    }
    Ok(())
}

pub fn save_latents(latents: &[LatentSet], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_latents(latents, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_latents<R: Read>(r: &mut R) -> Result<Vec<LatentSet>> {
    wire::expect_magic(r, MAGIC, "latent file")?;
    wire::expect_version(r, VERSION)?;
    let count = wire::read_u32(r)? as usize;
    let v = wire::read_u32(r)? as usize;
    let c = wire::read_u32(r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(v * c);
        for _ in 0..v * c {
            data.push(wire::read_f32(r)?);
        }
        out.push(LatentSet::new(Tensor::new(vec![v, c], data)?)?);
    }
    Ok(out)
}

pub fn load_latents(path: &Path) -> Result<Vec<LatentSet>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_latents(&mut r)
}

/// Header-only peek used by `info`.
pub fn read_latents_header(path: &Path) -> Result<(usize, usize, usize)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    wire::expect_magic(&mut r, MAGIC, "latent file")?;
    wire::expect_version(&mut r, VERSION)?;
    Ok((
        wire::read_u32(&mut r)? as usize,
        wire::read_u32(&mut r)? as usize,
        wire::read_u32(&mut r)? as usize,
    ))
}
