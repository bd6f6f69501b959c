//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lsv_core::mesh::TemplateMesh;
use lsv_core::{Camera, Vec3};

/// Nearest ray hit: (t, face, barycentric weights of the three corners).
pub fn ray_cast(
    origin: Vec3,
    dir: Vec3,
    verts: &[Vec3],
    faces: &[[u32; 3]],
    t_min: f64,
    t_max: f64,
) -> Option<(f64, usize, [f64; 3])> {
    let mut best: Option<(f64, usize, [f64; 3])> = None;
    for (f, tri) in faces.iter().enumerate() {
        let [a, b, c] = tri.map(|i| verts[i as usize]);
        // Möller–Trumbore.
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        let t = e2.dot(&q) * inv;
        if t <= t_min || t >= t_max {
            continue;
        }
        if best.map_or(true, |(bt, _, _)| t < bt) {
            best = Some((t, f, [1.0 - u - v, u, v]));
        }
    }
    best
}

/// Ray through the center of pixel (i, j), with unit camera-space z so the
/// ray parameter is the camera depth.
pub fn pixel_ray(cam: &Camera, i: usize, j: usize) -> (Vec3, Vec3) {
    let rt = cam.rotation.transpose();
    let origin = -(rt * cam.translation);
    let d = Vec3::new(
        (i as f64 + 0.5 - cam.cx) / cam.fx,
        (j as f64 + 0.5 - cam.cy) / cam.fy,
        1.0,
    );
    (origin, rt * d)
}

/// Distance from a point to a triangle (closest-point by region tests).
pub fn point_triangle_distance(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (p - a).norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (p - b).norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (p - c).norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

/// Unit icosphere by midpoint subdivision.
pub fn icosphere(levels: usize) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, g, 0.0), (1.0, g, 0.0), (-1.0, -g, 0.0), (1.0, -g, 0.0),
        (0.0, -1.0, g), (0.0, 1.0, g), (0.0, -1.0, -g), (0.0, 1.0, -g),
        (g, 0.0, -1.0), (g, 0.0, 1.0), (-g, 0.0, -1.0), (-g, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                verts.len() as u32 - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Single-joint mesh with planar-projected UVs.
pub fn rigid_mesh(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> TemplateMesh {
    let nv = vertices.len();
    let uvs = faces
        .iter()
        .map(|f| f.map(|i| {
            let p = vertices[i as usize];
            [0.5 + 0.25 * p.x.clamp(-1.0, 1.0), 0.5 + 0.25 * p.y.clamp(-1.0, 1.0)]
        }))
        .collect();
    TemplateMesh {
        vertices,
        faces,
        uvs,
        skin_weights: vec![1.0; nv],
        parents: vec![-1],
        joint_regressor: vec![1.0 / nv as f64; nv],
        shape_basis: Vec::new(),
    }
}

/// Pass/fail line in the acceptance report format.
pub fn report(id: usize, name: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {id}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
