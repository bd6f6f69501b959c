//! Pinhole cameras and per-layer triangle rasterization.
//!
//! Camera space follows the usual computer-vision convention: +x right,
//! +y down, +z forward. Pixels are sampled at their centers
//! (i + 0.5, j + 0.5). Each pixel keeps the nearest covering triangle;
//! equal depths resolve to the lower face id. Triangles crossing the near
//! plane are clipped in camera space before projection.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{LsvError, Result};
use crate::Vec3;

pub const NO_HIT: u32 = u32::MAX;
/// Rows per parallel work unit.
const BAND_ROWS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation, meters.
    pub translation: Vec3,
    pub near: f64,
    pub far: f64,
}

/// Result of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub screen: [f64; 2],
    pub z: f64,
    /// Point lies on or behind the near plane.
    pub behind: bool,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(LsvError::validation("camera.fx/fy", "focal lengths must be positive"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(LsvError::validation(
                "camera.near/far",
                format!("need 0 < near < far, got near={} far={}", self.near, self.far),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(LsvError::validation("camera.width/height", "image size must be positive"));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if !(err <= 1e-6) || !(self.rotation.determinant() > 0.0) {
            return Err(LsvError::validation(
                "camera.rotation",
                format!("not a proper rotation (orthonormality error {err:e})"),
            ));
        }
        if !self.translation.iter().all(|x| x.is_finite()) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(LsvError::validation("camera", "non-finite parameters"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear upward in the image.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Camera> {
        let forward = (target - eye).try_normalize(1e-12).ok_or_else(|| {
            LsvError::invalid("look_at: eye and target coincide")
        })?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| LsvError::invalid("look_at: up is parallel to the view direction"))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        let cam = Camera {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            rotation,
            translation: -(rotation * eye),
            near: 0.01,
            far: 100.0,
        };
        cam.validate()?;
        Ok(cam)
    }

    #[inline]
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    fn project_camera(&self, pc: &Vec3) -> [f64; 2] {
        [self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy]
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        let pc = self.to_camera(p);
        Projection {
            screen: self.project_camera(&pc),
            z: pc.z,
            behind: pc.z <= self.near,
        }
    }

    /// World-space origin of the camera.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// World-space direction through a pixel-space position, with unit
    /// camera-space z (so ray parameter equals camera depth).
    pub fn pixel_direction(&self, x: f64, y: f64) -> Vec3 {
        let d = Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0);
        self.rotation.transpose() * d
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Per-pixel nearest-hit record for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGBuffer {
    pub width: usize,
    pub height: usize,
    /// Face id per pixel, [`NO_HIT`] when nothing covers it.
    pub face: Vec<u32>,
    /// Camera-space depth; +inf where missed.
    pub depth: Vec<f64>,
    pub uv: Vec<[f64; 2]>,
}

impl LayerGBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        LayerGBuffer {
            width,
            height,
            face: vec![NO_HIT; n],
            depth: vec![f64::INFINITY; n],
            uv: vec![[0.0; 2]; n],
        }
    }

    #[inline]
    pub fn hit(&self, pixel: usize) -> bool {
        self.face[pixel] != NO_HIT
    }

    pub fn hit_count(&self) -> usize {
        self.face.iter().filter(|&&f| f != NO_HIT).count()
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    pos: Vec3,
    uv: [f64; 2],
}

/// Projected triangle ready for scan conversion. Attributes are stored
/// divided by depth for perspective-correct interpolation.
#[derive(Clone, Copy)]
struct ScreenTri {
    face: u32,
    p: [[f64; 2]; 3],
    inv_z: [f64; 3],
    u_z: [f64; 3],
    v_z: [f64; 3],
    area: f64,
    x_range: (usize, usize),
    y_range: (usize, usize),
}

/// Sutherland–Hodgman against z ≥ near. Returns 0, 3 or 4 vertices.
fn clip_near(tri: [ClipVertex; 3], near: f64, out: &mut Vec<ClipVertex>) {
    out.clear();
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let a_in = a.pos.z >= near;
        let b_in = b.pos.z >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let s = (near - a.pos.z) / (b.pos.z - a.pos.z);
            let mut pos = a.pos + s * (b.pos - a.pos);
            pos.z = near;
            out.push(ClipVertex {
                pos,
                uv: [
                    a.uv[0] + s * (b.uv[0] - a.uv[0]),
                    a.uv[1] + s * (b.uv[1] - a.uv[1]),
                ],
            });
        }
    }
}

/// Edge function with a canonical vertex order, so a shared edge evaluates
/// to exactly opposite values in its two triangles.
#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    #[inline]
    fn raw(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    }
    if (a[0], a[1]) <= (b[0], b[1]) {
        raw(a, b, p)
    } else {
        -raw(b, a, p)
    }
}

/// Fill rule for pixel centers exactly on an edge: of the two directions a
/// shared edge is walked in, exactly one owns it.
#[inline]
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn pixel_span(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    // Centers c = i + 0.5 with lo ≤ c ≤ hi.
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(size as f64 - 1.0);
    if !(first <= last) {
        return None;
    }
    Some((first as usize, last as usize))
}

fn setup_triangle(cam: &Camera, face: u32, v: [ClipVertex; 3]) -> Option<ScreenTri> {
    let mut p = [
        cam.project_camera(&v[0].pos),
        cam.project_camera(&v[1].pos),
        cam.project_camera(&v[2].pos),
    ];
    let mut inv_z = [1.0 / v[0].pos.z, 1.0 / v[1].pos.z, 1.0 / v[2].pos.z];
    let mut uv = [v[0].uv, v[1].uv, v[2].uv];
    let mut area = edge(p[0], p[1], p[2]);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    if area < 0.0 {
        p.swap(1, 2);
        inv_z.swap(1, 2);
        uv.swap(1, 2);
        area = -area;
    }
    let min_x = p[0][0].min(p[1][0]).min(p[2][0]);
    let max_x = p[0][0].max(p[1][0]).max(p[2][0]);
    let min_y = p[0][1].min(p[1][1]).min(p[2][1]);
    let max_y = p[0][1].max(p[1][1]).max(p[2][1]);
    let x_range = pixel_span(min_x, max_x, cam.width)?;
    let y_range = pixel_span(min_y, max_y, cam.height)?;
    Some(ScreenTri {
        face,
        p,
        inv_z,
        u_z: [uv[0][0] * inv_z[0], uv[1][0] * inv_z[1], uv[2][0] * inv_z[2]],
        v_z: [uv[0][1] * inv_z[0], uv[1][1] * inv_z[1], uv[2][1] * inv_z[2]],
        area,
        x_range,
        y_range,
    })
}

fn setup_triangles(
    cam: &Camera,
    verts: &[Vec3],
    faces: &[[u32; 3]],
    uvs: &[[[f64; 2]; 3]],
) -> Vec<ScreenTri> {
    let cam_verts: Vec<Vec3> = verts.iter().map(|v| cam.to_camera(v)).collect();
    let mut tris = Vec::with_capacity(faces.len());
    let mut poly = Vec::with_capacity(4);
    for (f, (face, wedge)) in faces.iter().zip(uvs).enumerate() {
        let corners: [ClipVertex; 3] = std::array::from_fn(|k| ClipVertex {
            pos: cam_verts[face[k] as usize],
            uv: wedge[k],
        });
        let zs = corners.map(|c| c.pos.z);
        if zs.iter().all(|&z| z >= cam.far) || zs.iter().any(|z| !z.is_finite()) {
            continue;
        }
        if zs.iter().all(|&z| z >= cam.near) {
            tris.extend(setup_triangle(cam, f as u32, corners));
            continue;
        }
        clip_near(corners, cam.near, &mut poly);
        for k in 1..poly.len().saturating_sub(1) {
            tris.extend(setup_triangle(cam, f as u32, [poly[0], poly[k], poly[k + 1]]));
        }
    }
    tris
}

#[inline]
fn shade_band(
    tris: &[ScreenTri],
    indices: &[u32],
    cam: &Camera,
    row0: usize,
    face: &mut [u32],
    depth: &mut [f64],
    uv: &mut [[f64; 2]],
) {
    let width = cam.width;
    let rows = face.len() / width;
    for &ti in indices {
        let t = &tris[ti as usize];
        let y0 = t.y_range.0.max(row0);
        let y1 = t.y_range.1.min(row0 + rows - 1);
        let own = [
            owns_edge(t.p[1], t.p[2]),
            owns_edge(t.p[2], t.p[0]),
            owns_edge(t.p[0], t.p[1]),
        ];
        for y in y0..=y1 {
            let py = y as f64 + 0.5;
            for x in t.x_range.0..=t.x_range.1 {
                let pc = [x as f64 + 0.5, py];
                let e = [
                    edge(t.p[1], t.p[2], pc),
                    edge(t.p[2], t.p[0], pc),
                    edge(t.p[0], t.p[1], pc),
                ];
                if (0..3).any(|k| e[k] < 0.0 || (e[k] == 0.0 && !own[k])) {
                    continue;
                }
                let b = [e[0] / t.area, e[1] / t.area, e[2] / t.area];
                let inv_z = b[0] * t.inv_z[0] + b[1] * t.inv_z[1] + b[2] * t.inv_z[2];
                let z = 1.0 / inv_z;
                let idx = (y - row0) * width + x;
                // Strict test: equal depth keeps the earlier (lower) face id.
                if !(z < depth[idx]) || !(z > cam.near && z < cam.far) {
                    continue;
                }
                depth[idx] = z;
                face[idx] = t.face;
                uv[idx] = [
                    (b[0] * t.u_z[0] + b[1] * t.u_z[1] + b[2] * t.u_z[2]) * z,
                    (b[0] * t.v_z[0] + b[1] * t.v_z[1] + b[2] * t.v_z[2]) * z,
                ];
            }
        }
    }
}

/// Nearest-hit G-buffer of one posed layer.
pub fn rasterize_layer(
    cam: &Camera,
    verts: &[Vec3],
    faces: &[[u32; 3]],
    uvs: &[[[f64; 2]; 3]],
) -> Result<LayerGBuffer> {
    cam.validate()?;
    if uvs.len() != faces.len() {
        return Err(LsvError::invalid(format!(
            "{} uv wedges for {} faces",
            uvs.len(),
            faces.len()
        )));
    }
    if let Some(bad) = faces.iter().flatten().find(|&&i| i as usize >= verts.len()) {
        return Err(LsvError::invalid(format!(
            "face references vertex {bad}, only {} given",
            verts.len()
        )));
    }
    let tris = setup_triangles(cam, verts, faces, uvs);

    let num_bands = cam.height.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); num_bands];
    for (i, t) in tris.iter().enumerate() {
        for band in bins
            .iter_mut()
            .take(t.y_range.1 / BAND_ROWS + 1)
            .skip(t.y_range.0 / BAND_ROWS)
        {
            band.push(i as u32);
        }
    }

    let mut out = LayerGBuffer::empty(cam.width, cam.height);
    let chunk = BAND_ROWS * cam.width;
    out.face
        .par_chunks_mut(chunk)
        .zip(out.depth.par_chunks_mut(chunk))
        .zip(out.uv.par_chunks_mut(chunk))
        .zip(bins.par_iter())
        .enumerate()
        .for_each(|(band, (((face, depth), uv), indices))| {
            shade_band(&tris, indices, cam, band * BAND_ROWS, face, depth, uv);
        });
    Ok(out)
}
