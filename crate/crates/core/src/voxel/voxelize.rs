//! Mesh voxelization by ray parity over voxel centers.
//!
//! Parities are computed independently along all three axes; a watertight
//! mesh yields identical occupancy from each direction, and any disagreement
//! is reported as a non-watertight input. Rays that graze triangle edges or
//! run inside a triangle's plane are re-cast with a small deterministic
//! offset until every intersection is clean.

use super::{Mesh, OccupancyGrid};
use crate::error::{Error, Result};

/// Voxelizes a watertight mesh. `resolution` is the voxel count along the
/// longest bounding-box axis; remaining dims scale proportionally. A voxel
/// is occupied iff its center lies inside the mesh. An empty mesh maps to a
/// single empty voxel.
pub fn voxelize_mesh(mesh: &Mesh, resolution: usize) -> Result<OccupancyGrid> {
    if resolution == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    mesh.validate()?;
    let Some((lo, hi)) = mesh.bbox() else {
        return OccupancyGrid::new(1, 1, 1);
    };
    let frame = VoxelFrame::fit(lo, hi, resolution);
    voxelize_in_frame(mesh, &frame)
}

/// Placement of a voxel lattice in mesh coordinates.
#[derive(Clone, Copy, Debug)]
pub struct VoxelFrame {
    pub origin: [f64; 3],
    pub voxel: f64,
    pub dims: [usize; 3],
}

impl VoxelFrame {
    pub fn fit(lo: [f32; 3], hi: [f32; 3], resolution: usize) -> VoxelFrame {
        let extent = [
            (hi[0] - lo[0]) as f64,
            (hi[1] - lo[1]) as f64,
            (hi[2] - lo[2]) as f64,
        ];
        let longest = extent[0].max(extent[1]).max(extent[2]).max(f64::MIN_POSITIVE);
        let voxel = longest / resolution as f64;
        let dims = extent.map(|e| ((e / voxel - 1e-9).ceil() as usize).max(1));
        VoxelFrame {
            origin: [lo[0] as f64, lo[1] as f64, lo[2] as f64],
            voxel,
            dims,
        }
    }

    pub fn center(&self, axis: usize, index: usize) -> f64 {
        self.origin[axis] + (index as f64 + 0.5) * self.voxel
    }
}

/// Voxelizes into an explicit frame (used when the lattice must align with
/// an existing grid).
pub fn voxelize_in_frame(mesh: &Mesh, frame: &VoxelFrame) -> Result<OccupancyGrid> {
    let [nx, ny, nz] = frame.dims;
    let mut grids = Vec::with_capacity(3);
    for axis in 0..3 {
        grids.push(parity_along_axis(mesh, frame, axis)?);
    }
    let mut disagreements = 0usize;
    let mut first = None;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let a = grids[0].get(x, y, z);
                let b = grids[1].get(x, y, z);
                let c = grids[2].get(x, y, z);
                if a != b || b != c {
                    disagreements += 1;
                    if first.is_none() {
                        first = Some((x, y, z));
                    }
                }
            }
        }
    }
    if disagreements > 0 {
        return Err(Error::NonWatertight(format!(
            "{disagreements} voxels have inconsistent ray parity (first at {:?})",
            first.unwrap()
        )));
    }
    Ok(grids.swap_remove(0))
}

/// Axes (u, v) spanning the plane perpendicular to `axis`.
fn plane_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => unreachable!(),
    }
}

fn parity_along_axis(mesh: &Mesh, frame: &VoxelFrame, axis: usize) -> Result<OccupancyGrid> {
    let [nx, ny, nz] = frame.dims;
    let (ua, va) = plane_axes(axis);
    let (nu, nv) = (frame.dims[ua], frame.dims[va]);

    // Bin triangles by their (u, v) bounding box so each ray only tests
    // nearby triangles.
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); nu * nv];
    let tri_verts: Vec<[[f64; 3]; 3]> = mesh
        .triangles
        .iter()
        .map(|&[a, b, c]| {
            [a, b, c].map(|i| {
                let v = mesh.vertices[i as usize];
                [v[0] as f64, v[1] as f64, v[2] as f64]
            })
        })
        .collect();
    for (t, tri) in tri_verts.iter().enumerate() {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in tri {
            for (k, &a) in [ua, va].iter().enumerate() {
                lo[k] = lo[k].min(p[a]);
                hi[k] = hi[k].max(p[a]);
            }
        }
        let to_bin = |x: f64, a: usize, n: usize| -> usize {
            let rel = (x - frame.origin[a]) / frame.voxel - 0.5;
            rel.floor().clamp(0.0, (n - 1) as f64) as usize
        };
        // Expand by one bin: ray centers sit half a voxel off bin edges.
        let u0 = to_bin(lo[0], ua, nu).saturating_sub(1);
        let u1 = (to_bin(hi[0], ua, nu) + 1).min(nu - 1);
        let v0 = to_bin(lo[1], va, nv).saturating_sub(1);
        let v1 = (to_bin(hi[1], va, nv) + 1).min(nv - 1);
        for u in u0..=u1 {
            for v in v0..=v1 {
                bins[u * nv + v].push(t as u32);
            }
        }
    }

    let n_axis = frame.dims[axis];
    let mut grid = OccupancyGrid::new(nx, ny, nz)?;
    for u in 0..nu {
        for v in 0..nv {
            let candidates = &bins[u * nv + v];
            if candidates.is_empty() {
                continue;
            }
            let crossings = cast_ray(frame, axis, u, v, candidates, &tri_verts)?;
            if crossings.len() % 2 == 1 {
                // A ray leaving the volume while "inside" means the surface
                // is open along this direction.
                return Err(Error::NonWatertight(format!(
                    "ray ({u}, {v}) along axis {axis} crosses the surface {} times",
                    crossings.len()
                )));
            }
            if crossings.is_empty() {
                continue;
            }
            // Walk voxel centers along the ray, counting crossings below.
            let mut k = 0usize;
            for i in 0..n_axis {
                let center = frame.center(axis, i);
                while k < crossings.len() && crossings[k] < center {
                    k += 1;
                }
                if k % 2 == 1 {
                    let mut coord = [0usize; 3];
                    coord[axis] = i;
                    coord[ua] = u;
                    coord[va] = v;
                    grid.set(coord[0], coord[1], coord[2], true);
                }
            }
        }
    }
    Ok(grid)
}

/// Sorted crossing parameters of the axis-aligned ray through voxel column
/// (u, v). Retries with deterministic offsets while any intersection is
/// numerically ambiguous (grazing an edge or a coplanar triangle).
fn cast_ray(
    frame: &VoxelFrame,
    axis: usize,
    u: usize,
    v: usize,
    candidates: &[u32],
    tris: &[[[f64; 3]; 3]],
) -> Result<Vec<f64>> {
    let (ua, va) = plane_axes(axis);
    let base_u = frame.center(ua, u);
    let base_v = frame.center(va, v);
    const MAX_ATTEMPTS: usize = 16;
    'attempt: for attempt in 0..MAX_ATTEMPTS {
        let ru = base_u + frame.voxel * 7.3e-4 * attempt as f64;
        let rv = base_v + frame.voxel * 4.1e-4 * attempt as f64;
        let mut crossings = Vec::new();
        for &t in candidates {
            match intersect(&tris[t as usize], axis, ua, va, ru, rv) {
                Hit::Miss => {}
                Hit::Cross(x) => crossings.push(x),
                Hit::Singular => continue 'attempt,
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return Ok(crossings);
    }
    Err(Error::Geometry(format!(
        "ray ({u}, {v}) along axis {axis} could not be disambiguated after {MAX_ATTEMPTS} attempts"
    )))
}

enum Hit {
    Miss,
    Cross(f64),
    Singular,
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 <= f64::MIN_POSITIVE {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let closest = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - closest[0]).powi(2) + (p[1] - closest[1]).powi(2)).sqrt()
}

fn intersect(tri: &[[f64; 3]; 3], axis: usize, ua: usize, va: usize, ru: f64, rv: f64) -> Hit {
    let p0 = tri[0];
    let e1 = [tri[1][0] - p0[0], tri[1][1] - p0[1], tri[1][2] - p0[2]];
    let e2 = [tri[2][0] - p0[0], tri[2][1] - p0[1], tri[2][2] - p0[2]];
    let det = e1[ua] * e2[va] - e1[va] * e2[ua];
    let scale = (e1[ua] * e1[ua] + e1[va] * e1[va] + e2[ua] * e2[ua] + e2[va] * e2[va]).max(1e-300);
    if det.abs() < 1e-12 * scale {
        // Projection is (nearly) a segment: ambiguous only when the ray
        // point lies on it, otherwise a clean miss.
        let pts = [[tri[0][ua], tri[0][va]], [tri[1][ua], tri[1][va]], [tri[2][ua], tri[2][va]]];
        let mut ends = (pts[0], pts[1]);
        let mut best = -1.0;
        for i in 0..3 {
            for j in 0..i {
                let d2 = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
                if d2 > best {
                    best = d2;
                    ends = (pts[j], pts[i]);
                }
            }
        }
        let eps = 1e-9 * (1.0 + scale.sqrt());
        if point_segment_distance([ru, rv], ends.0, ends.1) <= eps {
            return Hit::Singular;
        }
        return Hit::Miss;
    }
    let du = ru - p0[ua];
    let dv = rv - p0[va];
    let a = (du * e2[va] - dv * e2[ua]) / det;
    let b = (dv * e1[ua] - du * e1[va]) / det;
    const EPS_BARY: f64 = 1e-9;
    let inside = a > EPS_BARY && b > EPS_BARY && a + b < 1.0 - EPS_BARY;
    let outside = a < -EPS_BARY || b < -EPS_BARY || a + b > 1.0 + EPS_BARY;
    if inside {
        Hit::Cross(p0[axis] + a * e1[axis] + b * e2[axis])
    } else if outside {
        Hit::Miss
    } else {
        Hit::Singular
    }
}
