use nalgebra::Matrix3;

use super::Pose;
use crate::error::{LsvError, Result};
use crate::Vec3;

/// Rotation matrix of an axis-angle vector (Rodrigues). Exact identity for
/// the zero vector.
pub fn axis_angle_to_matrix(r: &Vec3) -> Matrix3<f64> {
    let theta = r.norm();
    let k = Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0);
    if theta < 1e-12 {
        return Matrix3::identity() + k;
    }
    let k = k / theta;
    Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * (k * k)
}

/// Rigid transform `x ↦ rotation·x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl JointTransform {
    pub fn identity() -> Self {
        JointTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    fn then_local(&self, local: &JointTransform) -> JointTransform {
        JointTransform {
            rotation: self.rotation * local.rotation,
            translation: self.rotation * local.translation + self.translation,
        }
    }
}

/// Skinning transforms A_j mapping rest space to posed space (root
/// translation excluded).
///
/// A_j = A_parent ∘ (rotation R_j about the rest joint J_j), which equals
/// G_j·G_j(0)⁻¹ for the usual chain G_j = G_parent·T(J_j − J_parent)·R_j.
/// Written this way the zero pose yields exact identities.
pub fn joint_transforms(
    rest_joints: &[Vec3],
    parents: &[i32],
    pose: &Pose,
) -> Result<Vec<JointTransform>> {
    let nj = parents.len();
    if rest_joints.len() != nj || pose.joint_rotations.len() != nj {
        return Err(LsvError::invalid(format!(
            "skeleton has {nj} joints, got {} joint positions and {} rotations",
            rest_joints.len(),
            pose.joint_rotations.len()
        )));
    }
    if !pose.is_finite() {
        return Err(LsvError::invalid("pose contains non-finite values"));
    }
    let mut out: Vec<JointTransform> = Vec::with_capacity(nj);
    for j in 0..nj {
        let rot = axis_angle_to_matrix(&pose.joint_rotations[j]);
        let local = JointTransform {
            rotation: rot,
            translation: rest_joints[j] - rot * rest_joints[j],
        };
        let global = match parents[j] {
            p if p < 0 => local,
            p if (p as usize) < j => out[p as usize].then_local(&local),
            p => {
                return Err(LsvError::invalid(format!(
                    "joint {j} has parent {p}; parents must precede children"
                )))
            }
        };
        out.push(global);
    }
    Ok(out)
}

/// Per-vertex blended transform in displacement form: posed = x + D·x + b,
/// with D = Σ w_j (R_j − I) and b = Σ w_j t_j + root translation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlendedTransform {
    pub delta: Matrix3<f64>,
    pub offset: Vec3,
}

impl BlendedTransform {
    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        x + self.delta * x + self.offset
    }
}

pub(crate) fn blend_transforms(
    weights: &[f64],
    num_joints: usize,
    transforms: &[JointTransform],
    root_translation: &Vec3,
) -> Vec<BlendedTransform> {
    weights
        .chunks_exact(num_joints)
        .map(|row| {
            let mut delta = Matrix3::zeros();
            let mut offset = *root_translation;
            for (w, a) in row.iter().zip(transforms) {
                if *w == 0.0 {
                    continue;
                }
                delta += *w * (a.rotation - Matrix3::identity());
                offset += *w * a.translation;
            }
            BlendedTransform { delta, offset }
        })
        .collect()
}

/// Linear blend skinning of rest vertices under `pose`.
pub fn lbs(
    rest: &[Vec3],
    rest_joints: &[Vec3],
    weights: &[f64],
    parents: &[i32],
    pose: &Pose,
) -> Result<Vec<Vec3>> {
    let nj = parents.len();
    if weights.len() != rest.len() * nj {
        return Err(LsvError::invalid(format!(
            "weights have {} entries, expected {}×{}",
            weights.len(),
            rest.len(),
            nj
        )));
    }
    let transforms = joint_transforms(rest_joints, parents, pose)?;
    let blended = blend_transforms(weights, nj, &transforms, &pose.root_translation);
    Ok(rest.iter().zip(&blended).map(|(v, b)| b.apply(v)).collect())
}
