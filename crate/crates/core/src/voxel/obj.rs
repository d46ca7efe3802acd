//! ASCII OBJ export/import (positions and faces only; faces 1-indexed,
//! polygons fan-triangulated on read).

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

pub fn write_obj<W: Write>(mesh: &Mesh, w: &mut W) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_obj(mesh, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_obj<R: Read>(r: R) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coord = [0f32; 3];
                for c in coord.iter_mut() {
                    *c = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::format(format!("obj line {}: bad vertex", lineno + 1)))?;
                }
                mesh.vertices.push(coord);
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|tok| parse_face_index(tok, mesh.vertices.len(), lineno + 1))
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::format(format!("obj line {}: face needs 3+ vertices", lineno + 1)));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {} // normals, texcoords, groups: ignored
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

pub fn load_obj(path: &Path) -> Result<Mesh> {
    read_obj(std::fs::File::open(path)?)
}

fn parse_face_index(token: &str, vertex_count: usize, lineno: usize) -> Result<u32> {
    let first = token.split('/').next().unwrap_or(token);
    let raw: i64 = first
        .parse()
        .map_err(|_| Error::format(format!("obj line {lineno}: bad face index {token:?}")))?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        vertex_count as i64 + raw
    } else {
        return Err(Error::format(format!("obj line {lineno}: zero face index")));
    };
    if resolved < 0 || resolved >= vertex_count as i64 {
        return Err(Error::format(format!("obj line {lineno}: face index {raw} out of range")));
    }
    Ok(resolved as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::box_mesh;

    #[test]
    fn roundtrip_box() {
        let mesh = box_mesh([0.0; 3], [1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        write_obj(&mesh, &mut buf).unwrap();
        let back = read_obj(buf.as_slice()).unwrap();
        assert_eq!(mesh, back);
    }

    #[test]
    fn reads_quads_and_slash_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        let mesh = read_obj(src.as_bytes()).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn rejects_out_of_range_face() {
        let src = "v 0 0 0\nf 1 2 3\n";
        assert!(read_obj(src.as_bytes()).is_err());
    }
}
