use std::sync::Arc;

use super::skinning::{blend_transforms, joint_transforms};
use super::{apply_shape, regress_joints, vertex_normals, Pose, Shape, TemplateMesh};
use crate::error::{LsvError, Result};
use crate::Vec3;

/// Signed normal offset of layer `n` out of `count`. A single layer sits on
/// the base surface.
pub fn layer_thickness(n: usize, count: usize, t_min: f64, t_max: f64) -> f64 {
    if count <= 1 {
        return 0.0;
    }
    let s = n as f64 / (count - 1) as f64;
    // Lerp form keeps both endpoints exact.
    t_min * (1.0 - s) + t_max * s
}

/// N concentric shells sharing the base topology, UVs and skinning.
/// Layers are ordered from the innermost (t_min) to the outermost (t_max).
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub base: Arc<TemplateMesh>,
    pub t_min: f64,
    pub t_max: f64,
    pub thickness: Vec<f64>,
    pub rest_normals: Vec<Vec3>,
    pub rest_layer_vertices: Vec<Vec<Vec3>>,
}

impl LayerStack {
    pub fn num_layers(&self) -> usize {
        self.thickness.len()
    }
}

pub fn build_layers(
    mesh: Arc<TemplateMesh>,
    count: usize,
    t_min: f64,
    t_max: f64,
) -> Result<LayerStack> {
    if count == 0 {
        return Err(LsvError::invalid("layer count must be at least 1"));
    }
    if !(t_min <= t_max) || !t_min.is_finite() || !t_max.is_finite() {
        return Err(LsvError::invalid(format!(
            "thickness range [{t_min}, {t_max}] is not an ordered finite interval"
        )));
    }
    let normals = vertex_normals(&mesh.vertices, &mesh.faces)?;
    let thickness: Vec<f64> = (0..count)
        .map(|n| layer_thickness(n, count, t_min, t_max))
        .collect();
    let rest_layer_vertices = thickness
        .iter()
        .map(|&t| offset_vertices(&mesh.vertices, &normals, t))
        .collect();
    Ok(LayerStack {
        base: mesh,
        t_min,
        t_max,
        thickness,
        rest_normals: normals,
        rest_layer_vertices,
    })
}

fn offset_vertices(verts: &[Vec3], normals: &[Vec3], t: f64) -> Vec<Vec3> {
    verts.iter().zip(normals).map(|(v, n)| v + t * n).collect()
}

/// Posed vertices of every layer. Joints are regressed once from the shaped
/// base; offsets use the shaped base normals so layers stay concentric
/// under shape change.
pub fn deform_layers(stack: &LayerStack, pose: &Pose, shape: &Shape) -> Result<Vec<Vec<Vec3>>> {
    let mesh = &*stack.base;
    let shaped = apply_shape(mesh, shape)?;
    let zero_shape = shape.coeffs.iter().all(|&c| c == 0.0);
    let normals = if zero_shape {
        stack.rest_normals.clone()
    } else {
        vertex_normals(&shaped, &mesh.faces)?
    };
    let joints = regress_joints(mesh, &shaped)?;
    let transforms = joint_transforms(&joints, &mesh.parents, pose)?;
    let blended = blend_transforms(
        &mesh.skin_weights,
        mesh.num_joints(),
        &transforms,
        &pose.root_translation,
    );
    let layers = stack
        .thickness
        .iter()
        .map(|&t| {
            shaped
                .iter()
                .zip(&normals)
                .zip(&blended)
                .map(|((v, n), b)| b.apply(&(v + t * n)))
                .collect()
        })
        .collect();
    Ok(layers)
}
