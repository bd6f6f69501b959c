//! Articulated template meshes and the layered shells built around them.
//!
//! A [`TemplateMesh`] carries everything needed to pose a body: rest
//! vertices, faces with per-wedge UVs, dense skinning weights, a
//! topologically sorted skeleton, a joint regressor and an optional linear
//! shape basis. Shells ([`LayerStack`]) reuse the topology, UVs and
//! skinning of the base and only move vertices along their normals.

mod layers;
mod skinning;

pub use layers::{build_layers, deform_layers, layer_thickness, LayerStack};
pub use skinning::{axis_angle_to_matrix, joint_transforms, lbs, JointTransform};

use crate::error::{LsvError, Result};
use crate::Vec3;

/// Minimum triangle area (m²) for a face to count as non-degenerate.
pub const MIN_FACE_AREA: f64 = 1e-12;
/// Tolerance on skinning-weight and regressor row sums.
pub const ROW_SUM_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Per-wedge UVs, one triple per face.
    pub uvs: Vec<[[f64; 2]; 3]>,
    /// Dense V×J skinning weights, row-major.
    pub skin_weights: Vec<f64>,
    /// Parent index per joint, -1 for the root.
    pub parents: Vec<i32>,
    /// Dense J×V joint regressor, row-major.
    pub joint_regressor: Vec<f64>,
    /// B displacement fields of V vertices each.
    pub shape_basis: Vec<Vec<Vec3>>,
}

impl TemplateMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_shapes(&self) -> usize {
        self.shape_basis.len()
    }

    pub fn skin_row(&self, v: usize) -> &[f64] {
        let j = self.num_joints();
        &self.skin_weights[v * j..(v + 1) * j]
    }

    pub fn regressor_row(&self, j: usize) -> &[f64] {
        let v = self.num_vertices();
        &self.joint_regressor[j * v..(j + 1) * v]
    }

    /// Checks every structural invariant. Errors name the offending field
    /// and row.
    pub fn validate(&self) -> Result<()> {
        let nv = self.num_vertices();
        let nj = self.num_joints();
        if nv == 0 {
            return Err(LsvError::validation("vertices", "mesh has no vertices"));
        }
        if nj == 0 {
            return Err(LsvError::validation("parents", "mesh has no joints"));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(LsvError::validation(
                    format!("vertices[{i}]"),
                    "non-finite coordinate",
                ));
            }
        }
        if self.uvs.len() != self.faces.len() {
            return Err(LsvError::validation(
                "uvCoords",
                format!("{} wedge triples for {} faces", self.uvs.len(), self.faces.len()),
            ));
        }
        for (f, face) in self.faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&i| i as usize >= nv) {
                return Err(LsvError::validation(
                    format!("faces[{f}]"),
                    format!("vertex index {bad} out of range (V = {nv})"),
                ));
            }
            let area = triangle_area(
                &self.vertices[face[0] as usize],
                &self.vertices[face[1] as usize],
                &self.vertices[face[2] as usize],
            );
            if !(area > MIN_FACE_AREA) {
                return Err(LsvError::validation(
                    format!("faces[{f}]"),
                    format!("degenerate triangle, area {area:e} m²"),
                ));
            }
        }
        for (j, &p) in self.parents.iter().enumerate() {
            let ok = if j == 0 { p == -1 } else { p >= 0 && (p as usize) < j };
            if !ok {
                return Err(LsvError::validation(
                    format!("parents[{j}]"),
                    format!("parent {p} is not a valid earlier joint"),
                ));
            }
        }
        if self.skin_weights.len() != nv * nj {
            return Err(LsvError::validation(
                "skinWeights",
                format!("expected {} entries, found {}", nv * nj, self.skin_weights.len()),
            ));
        }
        for v in 0..nv {
            let row = self.skin_row(v);
            if row.iter().any(|&w| !(w >= 0.0)) {
                return Err(LsvError::validation(
                    format!("skinWeights row {v}"),
                    "negative or non-finite weight",
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(LsvError::validation(
                    format!("skinWeights row {v}"),
                    format!("weights sum to {sum}, expected 1"),
                ));
            }
        }
        if self.joint_regressor.len() != nj * nv {
            return Err(LsvError::validation(
                "jointRegressor",
                format!("expected {} entries, found {}", nj * nv, self.joint_regressor.len()),
            ));
        }
        for j in 0..nj {
            let sum: f64 = self.regressor_row(j).iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                return Err(LsvError::validation(
                    format!("jointRegressor row {j}"),
                    format!("row sums to {sum}, expected 1"),
                ));
            }
        }
        for (b, basis) in self.shape_basis.iter().enumerate() {
            if basis.len() != nv {
                return Err(LsvError::validation(
                    format!("shapeBasis[{b}]"),
                    format!("expected {nv} displacements, found {}", basis.len()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Local axis-angle rotation per joint, radians.
    pub joint_rotations: Vec<Vec3>,
    pub root_translation: Vec3,
}

impl Pose {
    pub fn zero(num_joints: usize) -> Self {
        Pose {
            joint_rotations: vec![Vec3::zeros(); num_joints],
            root_translation: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.joint_rotations
            .iter()
            .chain(std::iter::once(&self.root_translation))
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Shape {
    pub coeffs: Vec<f64>,
}

impl Shape {
    pub fn zero(num_shapes: usize) -> Self {
        Shape {
            coeffs: vec![0.0; num_shapes],
        }
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Rest vertices displaced by the shape basis.
pub fn apply_shape(mesh: &TemplateMesh, shape: &Shape) -> Result<Vec<Vec3>> {
    if shape.coeffs.len() != mesh.num_shapes() {
        return Err(LsvError::invalid(format!(
            "shape has {} coefficients, mesh has {} basis vectors",
            shape.coeffs.len(),
            mesh.num_shapes()
        )));
    }
    let mut out = mesh.vertices.clone();
    for (coeff, basis) in shape.coeffs.iter().zip(&mesh.shape_basis) {
        if *coeff == 0.0 {
            continue;
        }
        for (v, d) in out.iter_mut().zip(basis) {
            *v += *coeff * d;
        }
    }
    Ok(out)
}

pub fn regress_joints(mesh: &TemplateMesh, rest: &[Vec3]) -> Result<Vec<Vec3>> {
    if rest.len() != mesh.num_vertices() {
        return Err(LsvError::invalid(format!(
            "regressor expects {} vertices, got {}",
            mesh.num_vertices(),
            rest.len()
        )));
    }
    let joints = (0..mesh.num_joints())
        .map(|j| {
            mesh.regressor_row(j)
                .iter()
                .zip(rest)
                .filter(|(w, _)| **w != 0.0)
                .fold(Vec3::zeros(), |acc, (w, v)| acc + *w * v)
        })
        .collect();
    Ok(joints)
}

/// Area-weighted vertex normals; orientation follows counter-clockwise
/// winding.
pub fn vertex_normals(verts: &[Vec3], faces: &[[u32; 3]]) -> Result<Vec<Vec3>> {
    let mut acc = vec![Vec3::zeros(); verts.len()];
    for face in faces {
        let [a, b, c] = face.map(|i| i as usize);
        if a.max(b).max(c) >= verts.len() {
            return Err(LsvError::invalid(format!(
                "face {face:?} references a vertex outside 0..{}",
                verts.len()
            )));
        }
        // |cross| is twice the triangle area, so this is the area weighting.
        let n = (verts[b] - verts[a]).cross(&(verts[c] - verts[a]));
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    acc.into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                Ok(n / len)
            } else {
                Err(LsvError::Degenerate(format!(
                    "vertex {i} has a zero accumulated normal"
                )))
            }
        })
        .collect()
}
