//! Quad-chunk dataset on disk: a directory holding `records.bin` (per-quad
//! header + bit-packed occupancy of the full quad window) and `index.bin`
//! (record byte offsets for random access).

use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{ChunkSample, QuadChunk};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::voxel::OccupancyGrid;
use crate::wire;

const RECORDS_MAGIC: &[u8; 4] = b"NUID";
const INDEX_MAGIC: &[u8; 4] = b"NUIX";
const VERSION: u16 = 1;

const SPLIT_SALT: u64 = 0x51D5_7A17_0C0F_FEE5;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Deterministic 95/5 split keyed on the quad origin.
pub fn split_of(origin: (usize, usize)) -> Split {
    let h = Rng::derive(SPLIT_SALT, &[origin.0 as u64, origin.1 as u64]);
    if h % 20 == 0 {
        Split::Val
    } else {
        Split::Train
    }
}

pub struct DatasetWriter {
    records: BufWriter<std::fs::File>,
    offsets: Vec<u64>,
    scene_ids: Vec<u32>,
    position: u64,
    chunk_size: usize,
    dir: PathBuf,
}

impl DatasetWriter {
    pub fn create(dir: &Path, chunk_size: usize) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut records = BufWriter::new(std::fs::File::create(dir.join("records.bin"))?);
        records.write_all(RECORDS_MAGIC)?;
        wire::write_u16(&mut records, VERSION)?;
        wire::write_u32(&mut records, chunk_size as u32)?;
        Ok(DatasetWriter {
            records,
            offsets: Vec::new(),
            scene_ids: Vec::new(),
            position: (4 + 2 + 4) as u64,
            chunk_size,
            dir: dir.to_path_buf(),
        })
    }

    pub fn append(&mut self, quad: &QuadChunk, scene_id: u32) -> Result<()> {
        if quad.chunk_size != self.chunk_size {
            return Err(Error::invalid(format!(
                "quad chunk size {} does not match dataset {}",
                quad.chunk_size, self.chunk_size
            )));
        }
        self.offsets.push(self.position);
        self.scene_ids.push(scene_id);
        let mut buf = Vec::new();
        wire::write_u32(&mut buf, quad.origin.0 as u32)?;
        wire::write_u32(&mut buf, quad.origin.1 as u32)?;
        for chunk in &quad.chunks {
            wire::write_u32(&mut buf, chunk.h_vox as u32)?;
        }
        wire::write_u32(&mut buf, quad.h_vox as u32)?;
        // full quad window at the shared height, rebuilt from the slots
        let c = self.chunk_size;
        let h = quad.h_vox.max(1);
        let mut window = OccupancyGrid::new(2 * c, h, 2 * c)?;
        for (slot, chunk) in quad.chunks.iter().enumerate() {
            let (x0, z0) = ((slot / 2) * c, (slot % 2) * c);
            for x in 0..c {
                for y in 0..chunk.h_vox {
                    for z in 0..c {
                        if chunk.occ.get(x, y, z) {
                            window.set(x0 + x, y, z0 + z, true);
                        }
                    }
                }
            }
        }
        buf.extend_from_slice(&window.packed_bytes());
        self.records.write_all(&buf)?;
        self.position += buf.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.records.flush()?;
        let mut index = BufWriter::new(std::fs::File::create(self.dir.join("index.bin"))?);
        index.write_all(INDEX_MAGIC)?;
        wire::write_u16(&mut index, VERSION)?;
        wire::write_u32(&mut index, self.offsets.len() as u32)?;
        for (&off, &scene) in self.offsets.iter().zip(&self.scene_ids) {
            wire::write_u64(&mut index, off)?;
            wire::write_u32(&mut index, scene)?;
        }
        index.flush()?;
        Ok(self.offsets.len())
    }
}

pub struct DatasetReader {
    records: BufReader<std::fs::File>,
    offsets: Vec<u64>,
    scene_ids: Vec<u32>,
    chunk_size: usize,
}

impl DatasetReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut index = BufReader::new(std::fs::File::open(dir.join("index.bin"))?);
        wire::expect_magic(&mut index, INDEX_MAGIC, "dataset index")?;
        wire::expect_version(&mut index, VERSION)?;
        let count = wire::read_u32(&mut index)? as usize;
        let mut offsets = Vec::with_capacity(count);
        let mut scene_ids = Vec::with_capacity(count);
        for _ in 0..count {
            offsets.push(wire::read_u64(&mut index)?);
            scene_ids.push(wire::read_u32(&mut index)?);
        }
        let mut records = BufReader::new(std::fs::File::open(dir.join("records.bin"))?);
        wire::expect_magic(&mut records, RECORDS_MAGIC, "dataset records")?;
        wire::expect_version(&mut records, VERSION)?;
        let chunk_size = wire::read_u32(&mut records)? as usize;
        Ok(DatasetReader { records, offsets, scene_ids, chunk_size })
    }

    pub fn scene_ids(&self) -> &[u32] {
        &self.scene_ids
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn get(&mut self, record: usize) -> Result<QuadChunk> {
        let off = *self
            .offsets
            .get(record)
            .ok_or_else(|| Error::bounds(format!("record {record} of {}", self.offsets.len())))?;
        self.records.seek(SeekFrom::Start(off))?;
        let r = &mut self.records;
        let origin = (wire::read_u32(r)? as usize, wire::read_u32(r)? as usize);
        let mut chunk_h = [0usize; 4];
        for h in chunk_h.iter_mut() {
            *h = wire::read_u32(r)? as usize;
        }
        let quad_h = wire::read_u32(r)? as usize;
        let c = self.chunk_size;
        let h = quad_h.max(1);
        let nbytes = (2 * c * h * 2 * c).div_ceil(8);
        let mut bytes = vec![0u8; nbytes];
        r.read_exact(&mut bytes)?;
        let window = OccupancyGrid::from_packed_bytes(2 * c, h, 2 * c, &bytes)?;
        let mut chunks = Vec::with_capacity(4);
        for slot in 0..4 {
            let (x0, z0) = ((slot / 2) * c, (slot % 2) * c);
            let ch = chunk_h[slot];
            let mut occ = OccupancyGrid::new(c, ch.max(1), c)?;
            for x in 0..c {
                for y in 0..ch {
                    for z in 0..c {
                        if window.get(x0 + x, y, z0 + z) {
                            occ.set(x, y, z, true);
                        }
                    }
                }
            }
            let half = c / 2;
            let center = (
                origin.0 - c + (slot / 2) * c + half,
                origin.1 - c + (slot % 2) * c + half,
            );
            chunks.push(ChunkSample { origin: center, chunk_size: c, h_vox: ch, occ });
        }
        Ok(QuadChunk {
            origin,
            chunk_size: c,
            h_vox: quad_h,
            chunks: chunks.try_into().unwrap(),
        })
    }

    /// Record indices of each split, in record order.
    pub fn split_indices(&mut self) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for i in 0..self.len() {
            let quad = self.get(i)?;
            match split_of(quad.origin) {
                Split::Train => train.push(i),
                Split::Val => val.push(i),
            }
        }
        Ok((train, val))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunks::extract_quad_chunk;
    use crate::voxel::fix_ground;

    fn sample_quads() -> Vec<QuadChunk> {
        let mut rng = Rng::new(1234);
        let mut grid = OccupancyGrid::new(48, 24, 48).unwrap();
        grid = fix_ground(&grid, 5).unwrap();
        for _ in 0..60 {
            let x = rng.below(48);
            let z = rng.below(48);
            let h = 5 + rng.below(18);
            for y in 5..h {
                grid.set(x, y, z, true);
            }
        }
        let mut quads = Vec::new();
        for (i, k) in [(8, 8), (16, 24), (24, 16), (40, 40)] {
            quads.push(extract_quad_chunk(&grid, i, k, 8).unwrap());
        }
        quads
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join("vecscene_dataset_test_rt");
        let _ = std::fs::remove_dir_all(&dir);
        let quads = sample_quads();
        let mut writer = DatasetWriter::create(&dir, 8).unwrap();
        for (i, q) in quads.iter().enumerate() {
            writer.append(q, i as u32 / 2).unwrap();
        }
        assert_eq!(writer.finish().unwrap(), quads.len());

        let mut reader = DatasetReader::open(&dir).unwrap();
        assert_eq!(reader.len(), quads.len());
        assert_eq!(reader.scene_ids(), &[0, 0, 1, 1]);
        for (i, want) in quads.iter().enumerate() {
            let got = reader.get(i).unwrap();
            assert_eq!(&got, want, "record {i}");
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn split_is_deterministic_partition() {
        let mut train = 0;
        let mut val = 0;
        for i in 0..2000 {
            let origin = (i * 7 % 301, i * 13 % 211);
            let s1 = split_of(origin);
            let s2 = split_of(origin);
            assert_eq!(s1, s2);
            match s1 {
                Split::Train => train += 1,
                Split::Val => val += 1,
            }
        }
        // roughly 5% validation
        assert!(val > 40 && val < 180, "val fraction off: {val} of 2000");
        assert_eq!(train + val, 2000);
    }
}
