//! Checkpoint file: versioned header, named-parameter manifest
//! (name, kind, shape, byte offset into the payload), then the payload as
//! little-endian f32.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::wire;

use super::optim::ParamStore;
use super::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 4] = b"NUIP";
const VERSION: u16 = 1;

pub fn save<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    wire::write_u16(&mut w, VERSION)?;
    let entries: Vec<(&str, &Tensor<T>, bool)> = store.iter_named().collect();
    wire::write_u32(&mut w, entries.len() as u32)?;
    let mut offset = 0u64;
    for (name, tensor, trainable) in &entries {
        let bytes = name.as_bytes();
        wire::write_u16(&mut w, bytes.len() as u16)?;
        w.write_all(bytes)?;
        w.write_all(&[u8::from(!trainable)])?; // 0 = parameter, 1 = buffer
        w.write_all(&[tensor.shape().len() as u8])?;
        for &d in tensor.shape() {
            wire::write_u32(&mut w, d as u32)?;
        }
        wire::write_u64(&mut w, offset)?;
        offset += (tensor.len() * 4) as u64;
    }
    for (_, tensor, _) in &entries {
        for &v in tensor.data() {
            wire::write_f32(&mut w, v.to_f64() as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint into a fresh store. Shapes come from the manifest;
/// callers that rebuilt a model from config should `verify_matches` against
/// their own store before swapping tensors in.
pub fn load<T: Scalar>(path: &Path) -> Result<ParamStore<T>> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    wire::expect_magic(&mut r, MAGIC, "checkpoint")?;
    wire::expect_version(&mut r, VERSION)?;
    let count = wire::read_u32(&mut r)? as usize;
    struct Entry {
        name: String,
        buffer: bool,
        shape: Vec<usize>,
        offset: u64,
    }
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = wire::read_u16(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::format("checkpoint name not utf8"))?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            shape.push(wire::read_u32(&mut r)? as usize);
        }
        let offset = wire::read_u64(&mut r)?;
        manifest.push(Entry { name, buffer: kind[0] == 1, shape, offset });
    }
    // Payload entries were written in manifest order; offsets must agree.
    let mut store = ParamStore::new();
    let mut expected = 0u64;
    for e in &manifest {
        if e.offset != expected {
            return Err(Error::format(format!(
                "checkpoint offset mismatch for {}: {} vs {}",
                e.name, e.offset, expected
            )));
        }
        let n: usize = e.shape.iter().product();
        expected += (n * 4) as u64;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(T::from_f64(wire::read_f32(&mut r)? as f64));
        }
        let t = Tensor::new(e.shape.clone(), data)?;
        if e.buffer {
            store.add_buffer(e.name.clone(), t);
        } else {
            store.add(e.name.clone(), t);
        }
    }
    Ok(store)
}

/// Copies tensors from `loaded` into `target` by name, requiring identical
/// manifests (same names and shapes).
pub fn restore_into<T: Scalar>(target: &mut ParamStore<T>, loaded: &ParamStore<T>) -> Result<()> {
    if target.len() != loaded.len() {
        return Err(Error::format(format!(
            "checkpoint has {} entries, model expects {}",
            loaded.len(),
            target.len()
        )));
    }
    let names: Vec<String> = target.iter_named().map(|(n, _, _)| n.to_string()).collect();
    for name in names {
        let src = loaded
            .id(&name)
            .ok_or_else(|| Error::format(format!("checkpoint is missing parameter {name}")))?;
        let dst = target.id(&name).unwrap();
        if loaded.tensor(src).shape() != target.tensor(dst).shape() {
            return Err(Error::format(format!(
                "checkpoint shape mismatch for {name}: {:?} vs {:?}",
                loaded.tensor(src).shape(),
                target.tensor(dst).shape()
            )));
        }
        *target.tensor_mut(dst) = loaded.tensor(src).clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn roundtrip_preserves_names_shapes_values() {
        let mut rng = Rng::new(77);
        let mut store = ParamStore::<f32>::new();
        store.add("a.w", Tensor::randn(vec![3, 4], 1.0, &mut rng));
        store.add("a.b", Tensor::randn(vec![4], 1.0, &mut rng));
        store.add_buffer("stats.mean", Tensor::randn(vec![1], 1.0, &mut rng));
        let dir = std::env::temp_dir().join("vecscene_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.nuip");
        save(&store, &path).unwrap();
        let loaded = load::<f32>(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        for (name, tensor, trainable) in store.iter_named() {
            let id = loaded.id(name).expect("name preserved");
            assert_eq!(loaded.tensor(id).shape(), tensor.shape());
            assert_eq!(loaded.tensor(id).data(), tensor.data());
            let is_buffer = loaded.iter_named().find(|(n, _, _)| *n == name).unwrap().2;
            assert_eq!(is_buffer, trainable);
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = std::env::temp_dir().join("vecscene_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("badver.nuip");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"NUIP");
        bytes.extend_from_slice(&9u16.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load::<f32>(&path) {
            Err(Error::FormatVersion { expected: 1, found: 9 }) => {}
            Err(other) => panic!("expected version error, got {other:?}"),
            Ok(_) => panic!("expected version error, got success"),
        }
        std::fs::remove_file(&path).unwrap();
    }
}
