//! Procedural capsule-limb humanoid (16 joints, ~2k vertices) and an
//! off-surface shell standing in for hair and clothing.
//!
//! Every body part is a closed capsule with its own cell in a 4×4 UV atlas.
//! Each joint sits at the center of a vertex ring, so the joint regressor is
//! a uniform average over that ring.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::mesh::{vertex_normals, TemplateMesh};
use crate::Vec3;

pub const NUM_JOINTS: usize = 16;
pub const ATLAS_CELLS: usize = 4;
const AROUND: usize = 16;
const CAP_STEPS: usize = 3;
/// Atlas cell inset, in UV units.
const CELL_MARGIN: f64 = 1.5 / 128.0;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis", "spine", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
    "r_elbow", "r_wrist", "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle",
];

pub const PARENTS: [i32; NUM_JOINTS] = [-1, 0, 1, 2, 2, 4, 5, 2, 7, 8, 0, 10, 11, 0, 13, 14];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Material {
    Skin,
    Shirt,
    Pants,
    Shoes,
    Hair,
    Vest,
}

struct PartSpec {
    start: Vec3,
    end: Vec3,
    radii: (f64, f64),
    cap: f64,
    /// Cylinder ring positions as fractions of the axis length.
    rings: &'static [f64],
    /// Direction of the first cross-section radius.
    side: Vec3,
    /// (joint, ring fraction) pairs: the joint is the center of that ring.
    joint_rings: &'static [(usize, f64)],
    weights: fn(f64) -> Vec<(usize, f64)>,
    material: Material,
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// Rest-pose joint locations.
pub fn rest_joints() -> [Vec3; NUM_JOINTS] {
    [
        v(0.0, 0.95, 0.0),
        v(0.0, 1.15, 0.0),
        v(0.0, 1.45, 0.0),
        v(0.0, 1.62, 0.0),
        v(0.18, 1.40, 0.0),
        v(0.45, 1.40, 0.0),
        v(0.70, 1.40, 0.0),
        v(-0.18, 1.40, 0.0),
        v(-0.45, 1.40, 0.0),
        v(-0.70, 1.40, 0.0),
        v(0.09, 0.90, 0.0),
        v(0.09, 0.50, 0.0),
        v(0.09, 0.09, 0.0),
        v(-0.09, 0.90, 0.0),
        v(-0.09, 0.50, 0.0),
        v(-0.09, 0.09, 0.0),
    ]
}

fn torso_weights(t: f64) -> Vec<(usize, f64)> {
    let a = smoothstep(0.05, 0.5, t);
    let b = 0.5 * smoothstep(0.9, 1.3, t);
    vec![(0, 1.0 - a), (1, a * (1.0 - b)), (2, a * b)]
}

fn limb_weights(parent: usize, own: usize, child: usize) -> impl Fn(f64) -> Vec<(usize, f64)> {
    move |t| {
        let up = 0.4 * (1.0 - smoothstep(-0.3, 0.15, t));
        let down = 0.4 * smoothstep(0.85, 1.3, t);
        vec![(parent, up), (own, 1.0 - up - down), (child, down)]
    }
}

fn parts() -> Vec<PartSpec> {
    let j = rest_joints();
    let x = v(1.0, 0.0, 0.0);
    let z = v(0.0, 0.0, 1.0);
    let rigid = |joint: usize| -> fn(f64) -> Vec<(usize, f64)> {
        match joint {
            3 => |_| vec![(3, 1.0)],
            6 => |_| vec![(6, 1.0)],
            9 => |_| vec![(9, 1.0)],
            12 => |_| vec![(12, 1.0)],
            15 => |_| vec![(15, 1.0)],
            _ => unreachable!(),
        }
    };
    const FULL: &[f64] = &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
    macro_rules! limb {
        ($parent:expr, $own:expr, $child:expr) => {
            |t| limb_weights($parent, $own, $child)(t)
        };
    }
    vec![
        PartSpec {
            start: j[0],
            end: j[2],
            radii: (0.16, 0.10),
            cap: 0.06,
            rings: &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            side: x,
            joint_rings: &[(0, 0.0), (1, 0.4), (2, 1.0)],
            weights: torso_weights,
            material: Material::Shirt,
        },
        PartSpec {
            start: v(0.0, 1.54, 0.0),
            end: v(0.0, 1.70, 0.0),
            radii: (0.095, 0.105),
            cap: 0.08,
            rings: &[0.0, 0.25, 0.5, 0.75, 1.0],
            side: x,
            joint_rings: &[(3, 0.5)],
            weights: rigid(3),
            material: Material::Skin,
        },
        PartSpec {
            start: j[4],
            end: j[5],
            radii: (0.05, 0.05),
            cap: 0.05,
            rings: FULL,
            side: z,
            joint_rings: &[(4, 0.0)],
            weights: limb!(2, 4, 5),
            material: Material::Shirt,
        },
        PartSpec {
            start: j[5],
            end: j[6],
            radii: (0.04, 0.04),
            cap: 0.04,
            rings: FULL,
            side: z,
            joint_rings: &[(5, 0.0)],
            weights: limb!(4, 5, 6),
            material: Material::Skin,
        },
        PartSpec {
            start: j[6],
            end: j[6] + v(0.14, 0.0, 0.0),
            radii: (0.045, 0.02),
            cap: 0.03,
            rings: FULL,
            side: z,
            joint_rings: &[(6, 0.0)],
            weights: rigid(6),
            material: Material::Skin,
        },
        PartSpec {
            start: j[7],
            end: j[8],
            radii: (0.05, 0.05),
            cap: 0.05,
            rings: FULL,
            side: z,
            joint_rings: &[(7, 0.0)],
            weights: limb!(2, 7, 8),
            material: Material::Shirt,
        },
        PartSpec {
            start: j[8],
            end: j[9],
            radii: (0.04, 0.04),
            cap: 0.04,
            rings: FULL,
            side: z,
            joint_rings: &[(8, 0.0)],
            weights: limb!(7, 8, 9),
            material: Material::Skin,
        },
        PartSpec {
            start: j[9],
            end: j[9] - v(0.14, 0.0, 0.0),
            radii: (0.045, 0.02),
            cap: 0.03,
            rings: FULL,
            side: z,
            joint_rings: &[(9, 0.0)],
            weights: rigid(9),
            material: Material::Skin,
        },
        PartSpec {
            start: j[10],
            end: j[11],
            radii: (0.07, 0.07),
            cap: 0.06,
            rings: FULL,
            side: z,
            joint_rings: &[(10, 0.0)],
            weights: limb!(0, 10, 11),
            material: Material::Pants,
        },
        PartSpec {
            start: j[11],
            end: j[12],
            radii: (0.05, 0.05),
            cap: 0.05,
            rings: FULL,
            side: z,
            joint_rings: &[(11, 0.0)],
            weights: limb!(10, 11, 12),
            material: Material::Pants,
        },
        PartSpec {
            start: j[12],
            end: j[12] + v(0.0, -0.04, 0.17),
            radii: (0.045, 0.035),
            cap: 0.04,
            rings: FULL,
            side: x,
            joint_rings: &[(12, 0.0)],
            weights: rigid(12),
            material: Material::Shoes,
        },
        PartSpec {
            start: j[13],
            end: j[14],
            radii: (0.07, 0.07),
            cap: 0.06,
            rings: FULL,
            side: z,
            joint_rings: &[(13, 0.0)],
            weights: limb!(0, 13, 14),
            material: Material::Pants,
        },
        PartSpec {
            start: j[14],
            end: j[15],
            radii: (0.05, 0.05),
            cap: 0.05,
            rings: FULL,
            side: z,
            joint_rings: &[(14, 0.0)],
            weights: limb!(13, 14, 15),
            material: Material::Pants,
        },
        PartSpec {
            start: j[15],
            end: j[15] + v(0.0, -0.04, 0.17),
            radii: (0.045, 0.035),
            cap: 0.04,
            rings: FULL,
            side: x,
            joint_rings: &[(15, 0.0)],
            weights: rigid(15),
            material: Material::Shoes,
        },
    ]
}

/// Atlas rectangle (u0, v0, size) of a part's cell, margin included.
pub fn cell_rect(part: usize) -> (f64, f64, f64) {
    let size = 1.0 / ATLAS_CELLS as f64;
    let (col, row) = (part % ATLAS_CELLS, part / ATLAS_CELLS);
    (
        col as f64 * size + CELL_MARGIN,
        row as f64 * size + CELL_MARGIN,
        size - 2.0 * CELL_MARGIN,
    )
}

/// Maps an atlas UV back to (part, local u, local v) if it falls in a cell.
pub fn atlas_local(uv: [f64; 2]) -> (usize, f64, f64) {
    let size = 1.0 / ATLAS_CELLS as f64;
    let col = ((uv[0] / size) as usize).min(ATLAS_CELLS - 1);
    let row = ((uv[1] / size) as usize).min(ATLAS_CELLS - 1);
    let part = row * ATLAS_CELLS + col;
    let (u0, v0, s) = cell_rect(part);
    (part, (uv[0] - u0) / s, (uv[1] - v0) / s)
}

/// Base humanoid plus per-face bookkeeping.
#[derive(Debug, Clone)]
pub struct Humanoid {
    pub mesh: TemplateMesh,
    pub face_part: Vec<usize>,
    pub part_material: Vec<Material>,
    /// Point on each vertex's part axis closest to it (for the girth basis).
    axis_points: Vec<Vec3>,
}

struct Ring {
    axial: f64,
    scale: f64,
    /// Index into the cylinder ring list, if this is a cylinder ring.
    cyl: Option<usize>,
}

pub fn build_humanoid() -> Humanoid {
    let specs = parts();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    let mut face_part = Vec::new();
    let mut weight_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut joint_ring_vertices: Vec<Vec<u32>> = vec![Vec::new(); NUM_JOINTS];
    let mut axis_points = Vec::new();

    for (p, spec) in specs.iter().enumerate() {
        let axis = spec.end - spec.start;
        let len = axis.norm();
        let dir = axis / len;
        let e1 = (spec.side - dir * spec.side.dot(&dir)).normalize();
        let e2 = dir.cross(&e1);

        let mut rings = Vec::new();
        for k in 1..CAP_STEPS {
            let phi = FRAC_PI_2 * k as f64 / CAP_STEPS as f64;
            rings.push(Ring { axial: -spec.cap * phi.cos(), scale: phi.sin(), cyl: None });
        }
        for (i, &s) in spec.rings.iter().enumerate() {
            rings.push(Ring { axial: s * len, scale: 1.0, cyl: Some(i) });
        }
        for k in (1..CAP_STEPS).rev() {
            let phi = FRAC_PI_2 * k as f64 / CAP_STEPS as f64;
            rings.push(Ring { axial: len + spec.cap * phi.cos(), scale: phi.sin(), cyl: None });
        }
        let segments = rings.len() + 1;
        let (u0, v0, size) = cell_rect(p);
        let to_uv = |a: f64, b: f64| [u0 + a * size, v0 + b * size];

        let base = vertices.len() as u32;
        let mut push_vertex = |pos: Vec3, axial: f64| {
            vertices.push(pos);
            weight_rows.push((spec.weights)(axial / len));
            axis_points.push(spec.start + dir * axial.clamp(0.0, len));
        };
        push_vertex(spec.start - dir * spec.cap, -spec.cap);
        for ring in &rings {
            for a in 0..AROUND {
                let theta = TAU * a as f64 / AROUND as f64;
                let offset = e1 * (spec.radii.0 * theta.cos()) + e2 * (spec.radii.1 * theta.sin());
                push_vertex(spec.start + dir * ring.axial + offset * ring.scale, ring.axial);
            }
        }
        push_vertex(spec.end + dir * spec.cap, len + spec.cap);
        let top = base + 1 + (rings.len() * AROUND) as u32;
        for (r, ring) in rings.iter().enumerate() {
            if let Some(i) = ring.cyl {
                for &(joint, s) in spec.joint_rings {
                    if (spec.rings[i] - s).abs() < 1e-12 {
                        joint_ring_vertices[joint] =
                            (0..AROUND).map(|a| base + 1 + (r * AROUND + a) as u32).collect();
                    }
                }
            }
        }

        let ring_vertex = |r: usize, a: usize| base + 1 + (r * AROUND + a % AROUND) as u32;
        let mut emit = |tri: [u32; 3], uv: [[f64; 2]; 3]| {
            faces.push(tri);
            uvs.push(uv);
            face_part.push(p);
        };
        for a in 0..AROUND {
            let (ua, ub) = (a as f64 / AROUND as f64, (a + 1) as f64 / AROUND as f64);
            let um = 0.5 * (ua + ub);
            let vr = |r: usize| (r + 1) as f64 / segments as f64;
            emit(
                [base, ring_vertex(0, a), ring_vertex(0, a + 1)],
                [to_uv(um, 0.0), to_uv(ua, vr(0)), to_uv(ub, vr(0))],
            );
            for r in 0..rings.len() - 1 {
                let (a0, a1) = (ring_vertex(r, a), ring_vertex(r, a + 1));
                let (b0, b1) = (ring_vertex(r + 1, a), ring_vertex(r + 1, a + 1));
                emit([a0, b0, b1], [to_uv(ua, vr(r)), to_uv(ua, vr(r + 1)), to_uv(ub, vr(r + 1))]);
                emit([a0, b1, a1], [to_uv(ua, vr(r)), to_uv(ub, vr(r + 1)), to_uv(ub, vr(r))]);
            }
            let last = rings.len() - 1;
            emit(
                [ring_vertex(last, a), top, ring_vertex(last, a + 1)],
                [to_uv(ua, vr(last)), to_uv(um, 1.0), to_uv(ub, vr(last))],
            );
        }
    }

    // Outward winding: capsules are convex, so compare against the axis.
    for (f, face) in faces.iter_mut().enumerate() {
        let [a, b, c] = face.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        let centroid = (a + b + c) / 3.0;
        let axis_pt = face.iter().map(|&i| axis_points[i as usize]).sum::<Vec3>() / 3.0;
        if n.dot(&(centroid - axis_pt)) < 0.0 {
            face.swap(1, 2);
            uvs[f].swap(1, 2);
        }
    }

    let nv = vertices.len();
    let mut skin_weights = vec![0.0; nv * NUM_JOINTS];
    for (vi, row) in weight_rows.iter().enumerate() {
        for &(j, w) in row {
            skin_weights[vi * NUM_JOINTS + j] += w;
        }
    }
    let mut joint_regressor = vec![0.0; NUM_JOINTS * nv];
    for (j, ring) in joint_ring_vertices.iter().enumerate() {
        assert_eq!(ring.len(), AROUND, "joint {} has no ring", JOINT_NAMES[j]);
        for &vi in ring {
            joint_regressor[j * nv + vi as usize] = 1.0 / AROUND as f64;
        }
    }
    // Height scaling about the pelvis and girth about each part axis.
    let pelvis_y = rest_joints()[0].y;
    let shape_basis = vec![
        vertices.iter().map(|p| v(0.0, 0.1 * (p.y - pelvis_y), 0.0)).collect(),
        vertices
            .iter()
            .zip(&axis_points)
            .map(|(p, a)| 0.2 * (p - a))
            .collect(),
    ];
    let mesh = TemplateMesh {
        vertices,
        faces,
        uvs,
        skin_weights,
        parents: PARENTS.to_vec(),
        joint_regressor,
        shape_basis,
    };
    Humanoid {
        mesh,
        face_part,
        part_material: specs.iter().map(|s| s.material).collect(),
        axis_points,
    }
}

impl Humanoid {
    pub fn num_parts(&self) -> usize {
        self.part_material.len()
    }

    #[allow(dead_code)]
    pub(crate) fn axis_point(&self, v: usize) -> Vec3 {
        self.axis_points[v]
    }
}

/// Off-surface geometry over the scalp (hair) and torso (vest).
#[derive(Debug, Clone)]
pub struct Shell {
    /// Base vertex each shell vertex was lifted from.
    pub source_vertex: Vec<u32>,
    pub offsets: Vec<f64>,
    pub vertices: Vec<Vec3>,
    /// Indices into `vertices`.
    pub faces: Vec<[u32; 3]>,
    pub uvs: Vec<[[f64; 2]; 3]>,
    pub face_material: Vec<Material>,
}

pub const SHELL_MIN_OFFSET: f64 = 0.005;
pub const SHELL_MAX_OFFSET: f64 = 0.008;

fn shell_offset(p: &Vec3) -> f64 {
    let mid = 0.5 * (SHELL_MIN_OFFSET + SHELL_MAX_OFFSET);
    let amp = 0.5 * (SHELL_MAX_OFFSET - SHELL_MIN_OFFSET);
    mid + amp * (13.0 * p.x + 7.0 * p.y + 11.0 * p.z).sin()
}

pub fn build_shell(h: &Humanoid) -> Shell {
    let mesh = &h.mesh;
    let normals = vertex_normals(&mesh.vertices, &mesh.faces).expect("closed capsules");
    let mut remap = vec![u32::MAX; mesh.num_vertices()];
    let mut shell = Shell {
        source_vertex: Vec::new(),
        offsets: Vec::new(),
        vertices: Vec::new(),
        faces: Vec::new(),
        uvs: Vec::new(),
        face_material: Vec::new(),
    };
    for (f, face) in mesh.faces.iter().enumerate() {
        // Whole-face membership keeps the shell boundary on vertex rings.
        let all = |pred: &dyn Fn(&Vec3) -> bool| face.iter().all(|&i| pred(&mesh.vertices[i as usize]));
        let material = match h.face_part[f] {
            1 if all(&|p| p.y >= 1.60 || (p.y >= 1.54 && p.z <= 1e-9)) => Material::Hair,
            0 if all(&|p| (1.02..=1.32).contains(&p.y)) => Material::Vest,
            _ => continue,
        };
        let tri = face.map(|i| {
            if remap[i as usize] == u32::MAX {
                let p = mesh.vertices[i as usize];
                let d = shell_offset(&p);
                remap[i as usize] = shell.vertices.len() as u32;
                shell.source_vertex.push(i);
                shell.offsets.push(d);
                shell.vertices.push(p + d * normals[i as usize]);
            }
            remap[i as usize]
        });
        shell.faces.push(tri);
        shell.uvs.push(mesh.uvs[f]);
        shell.face_material.push(material);
    }
    shell
}

/// Base and shell merged into one skinned mesh; shell vertices inherit the
/// skinning of their source vertex and carry no regressor weight.
pub fn truth_mesh(h: &Humanoid, shell: &Shell) -> (TemplateMesh, Vec<Material>) {
    let base = &h.mesh;
    let nv = base.num_vertices();
    let ns = shell.vertices.len();
    let total = nv + ns;
    let mut vertices = base.vertices.clone();
    vertices.extend(&shell.vertices);
    let mut faces = base.faces.clone();
    faces.extend(shell.faces.iter().map(|f| f.map(|i| i + nv as u32)));
    let mut uvs = base.uvs.clone();
    uvs.extend(&shell.uvs);
    let mut skin_weights = base.skin_weights.clone();
    for &src in &shell.source_vertex {
        skin_weights.extend_from_slice(base.skin_row(src as usize));
    }
    let mut joint_regressor = vec![0.0; NUM_JOINTS * total];
    for j in 0..NUM_JOINTS {
        joint_regressor[j * total..j * total + nv].copy_from_slice(base.regressor_row(j));
    }
    let mut materials: Vec<Material> = h.face_part.iter().map(|&p| h.part_material[p]).collect();
    materials.extend(&shell.face_material);
    let mesh = TemplateMesh {
        vertices,
        faces,
        uvs,
        skin_weights,
        parents: base.parents.clone(),
        joint_regressor,
        shape_basis: Vec::new(),
    };
    (mesh, materials)
}
