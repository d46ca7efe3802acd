//! Watertight test primitives.

use super::Mesh;

/// Axis-aligned box with outward-facing triangles.
pub fn box_mesh(min: [f32; 3], max: [f32; 3]) -> Mesh {
    let v = |x: usize, y: usize, z: usize| {
        [
            if x == 0 { min[0] } else { max[0] },
            if y == 0 { min[1] } else { max[1] },
            if z == 0 { min[2] } else { max[2] },
        ]
    };
    let mut vertices = Vec::with_capacity(8);
    for x in 0..2 {
        for y in 0..2 {
            for z in 0..2 {
                vertices.push(v(x, y, z));
            }
        }
    }
    // index = x*4 + y*2 + z
    let quads: [[u32; 4]; 6] = [
        [0, 1, 3, 2], // x = min, normal -x
        [4, 6, 7, 5], // x = max, normal +x
        [0, 4, 5, 1], // y = min, normal -y
        [2, 3, 7, 6], // y = max, normal +y
        [0, 2, 6, 4], // z = min, normal -z
        [1, 5, 7, 3], // z = max, normal +z
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    Mesh { vertices, triangles }
}

/// Longitude/latitude sphere with welded pole fans; outward orientation.
pub fn uv_sphere(center: [f32; 3], radius: f32, segments: usize, rings: usize) -> Mesh {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = Vec::new();
    vertices.push([center[0], center[1] + radius, center[2]]); // top pole
    for ring in 1..rings {
        let phi = std::f32::consts::PI * ring as f32 / rings as f32;
        let (sp, cp) = phi.sin_cos();
        for seg in 0..segments {
            let theta = 2.0 * std::f32::consts::PI * seg as f32 / segments as f32;
            let (st, ct) = theta.sin_cos();
            vertices.push([
                center[0] + radius * sp * ct,
                center[1] + radius * cp,
                center[2] + radius * sp * st,
            ]);
        }
    }
    vertices.push([center[0], center[1] - radius, center[2]]); // bottom pole
    let bottom = (vertices.len() - 1) as u32;
    let ring_start = |ring: usize| 1 + (ring - 1) * segments;

    let mut triangles = Vec::new();
    // top fan
    for seg in 0..segments {
        let a = (ring_start(1) + seg) as u32;
        let b = (ring_start(1) + (seg + 1) % segments) as u32;
        triangles.push([0, b, a]);
    }
    // ring quads
    for ring in 1..rings - 1 {
        for seg in 0..segments {
            let a = (ring_start(ring) + seg) as u32;
            let b = (ring_start(ring) + (seg + 1) % segments) as u32;
            let c = (ring_start(ring + 1) + seg) as u32;
            let d = (ring_start(ring + 1) + (seg + 1) % segments) as u32;
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    // bottom fan
    for seg in 0..segments {
        let a = (ring_start(rings - 1) + seg) as u32;
        let b = (ring_start(rings - 1) + (seg + 1) % segments) as u32;
        triangles.push([b, bottom, a]);
    }
    Mesh { vertices, triangles }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_is_watertight_and_oriented() {
        let m = box_mesh([0.0, 0.0, 0.0], [2.0, 3.0, 4.0]);
        m.validate().unwrap();
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 24.0).abs() < 1e-4);
        assert!((m.area() - 2.0 * (6.0 + 8.0 + 12.0)) < 1e-4);
    }

    #[test]
    fn sphere_is_watertight_with_near_analytic_volume() {
        let m = uv_sphere([1.0, 2.0, 3.0], 2.0, 48, 24);
        m.validate().unwrap();
        assert!(m.is_watertight());
        let want = 4.0 / 3.0 * std::f64::consts::PI * 8.0;
        assert!((m.signed_volume() - want).abs() / want < 0.02);
    }
}
