//! `LSVMESH1` template mesh container.
//!
//! ```text
//! "LSVMESH1"              8-byte magic
//! u32                     header length in bytes
//! header                  UTF-8 JSON: version, counts, section table
//! payload                 sections at header-declared offsets (relative
//!                         to the payload start), little-endian
//! ```
//!
//! Sections: `vertices` f32 V×3, `faces` u32 F×3, `uvCoords` f32 F×3×2,
//! `skinWeights` f32 V×J, `parents` i32 J, `jointRegressor` f32 J×V,
//! `shapeBasis` f32 B×V×3.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{push_f32s, read_file, write_file, ByteReader};
use crate::error::{LsvError, Result};
use crate::mesh::TemplateMesh;
use crate::Vec3;

pub const MESH_MAGIC: &[u8; 8] = b"LSVMESH1";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Counts {
    vertices: usize,
    faces: usize,
    joints: usize,
    shapes: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Section {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    counts: Counts,
    sections: Vec<Section>,
}

struct SectionSpec {
    name: &'static str,
    dtype: &'static str,
    shape: Vec<usize>,
}

fn layout(c: &Counts) -> Vec<SectionSpec> {
    let s = |name, dtype, shape| SectionSpec { name, dtype, shape };
    vec![
        s("vertices", "f32", vec![c.vertices, 3]),
        s("faces", "u32", vec![c.faces, 3]),
        s("uvCoords", "f32", vec![c.faces, 3, 2]),
        s("skinWeights", "f32", vec![c.vertices, c.joints]),
        s("parents", "i32", vec![c.joints]),
        s("jointRegressor", "f32", vec![c.joints, c.vertices]),
        s("shapeBasis", "f32", vec![c.shapes, c.vertices, 3]),
    ]
}

pub fn encode_mesh(mesh: &TemplateMesh) -> Vec<u8> {
    let counts = Counts {
        vertices: mesh.num_vertices(),
        faces: mesh.num_faces(),
        joints: mesh.num_joints(),
        shapes: mesh.num_shapes(),
    };
    let mut payload = Vec::new();
    let mut sections = Vec::new();
    for spec in layout(&counts) {
        let offset = payload.len();
        match spec.name {
            "vertices" => push_f32s(&mut payload, mesh.vertices.iter().flat_map(|v| [v.x, v.y, v.z])),
            "faces" => {
                for i in mesh.faces.iter().flatten() {
                    payload.extend_from_slice(&i.to_le_bytes());
                }
            }
            "uvCoords" => push_f32s(&mut payload, mesh.uvs.iter().flatten().flatten().copied()),
            "skinWeights" => push_f32s(&mut payload, mesh.skin_weights.iter().copied()),
            "parents" => {
                for p in &mesh.parents {
                    payload.extend_from_slice(&p.to_le_bytes());
                }
            }
            "jointRegressor" => push_f32s(&mut payload, mesh.joint_regressor.iter().copied()),
            "shapeBasis" => push_f32s(
                &mut payload,
                mesh.shape_basis.iter().flatten().flat_map(|v| [v.x, v.y, v.z]),
            ),
            _ => unreachable!(),
        }
        sections.push(Section {
            name: spec.name.to_string(),
            dtype: spec.dtype.to_string(),
            shape: spec.shape,
            offset,
            length: payload.len() - offset,
        });
    }
    let header = serde_json::to_vec(&Header {
        version: VERSION,
        counts,
        sections,
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MESH_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out
}

pub fn decode_mesh(bytes: &[u8], context: &str) -> Result<TemplateMesh> {
    let mut r = ByteReader::new(bytes, context);
    r.magic(MESH_MAGIC)?;
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| LsvError::format(context, format!("bad header: {e}")))?;
    if header.version != VERSION {
        return Err(LsvError::format(
            context,
            format!("unsupported version {}", header.version),
        ));
    }
    let payload = r.rest();
    let c = &header.counts;
    let expected = layout(c);
    if header.sections.len() != expected.len() {
        return Err(LsvError::format(
            context,
            format!("expected {} sections, found {}", expected.len(), header.sections.len()),
        ));
    }
    let mut raw: Vec<&[u8]> = Vec::with_capacity(expected.len());
    for spec in &expected {
        let sec = header
            .sections
            .iter()
            .find(|s| s.name == spec.name)
            .ok_or_else(|| LsvError::format(context, format!("missing section '{}'", spec.name)))?;
        let elems: usize = spec.shape.iter().product();
        if sec.dtype != spec.dtype || sec.shape != spec.shape || sec.length != elems * 4 {
            return Err(LsvError::format(
                context,
                format!(
                    "section '{}' declares {} {:?} ({} bytes), counts require {} {:?}",
                    spec.name, sec.dtype, sec.shape, sec.length, spec.dtype, spec.shape
                ),
            ));
        }
        let end = sec.offset.checked_add(sec.length).filter(|&e| e <= payload.len());
        let end = end.ok_or_else(|| {
            LsvError::format(
                context,
                format!("section '{}' runs past the end of the payload (truncated)", spec.name),
            )
        })?;
        raw.push(&payload[sec.offset..end]);
    }
    let f32s = |b: &[u8]| -> Vec<f64> {
        b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    };
    let vec3s = |v: Vec<f64>| -> Vec<Vec3> {
        v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
    };
    let vertices = vec3s(f32s(raw[0]));
    let faces = raw[1]
        .chunks_exact(12)
        .map(|c| std::array::from_fn(|k| u32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap())))
        .collect();
    let uvs = f32s(raw[2])
        .chunks_exact(6)
        .map(|c| [[c[0], c[1]], [c[2], c[3]], [c[4], c[5]]])
        .collect();
    let skin_weights = f32s(raw[3]);
    let parents = raw[4]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let joint_regressor = f32s(raw[5]);
    let basis_flat = vec3s(f32s(raw[6]));
    let shape_basis = if c.vertices == 0 {
        Vec::new()
    } else {
        basis_flat.chunks(c.vertices).map(|b| b.to_vec()).collect()
    };
    let mesh = TemplateMesh {
        vertices,
        faces,
        uvs,
        skin_weights,
        parents,
        joint_regressor,
        shape_basis,
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn load_mesh(path: &Path) -> Result<TemplateMesh> {
    decode_mesh(&read_file(path)?, &path.display().to_string())
}

pub fn save_mesh(path: &Path, mesh: &TemplateMesh) -> Result<()> {
    write_file(path, &encode_mesh(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_meshes::{icosphere, rigid_mesh};

    fn sample_mesh() -> TemplateMesh {
        let (v, f) = icosphere(1);
        let mut m = rigid_mesh(v.clone(), f);
        m.shape_basis = vec![v.iter().map(|p| p * 0.1).collect()];
        // Make it f32-representable so encode/decode is lossless.
        decode_mesh(&encode_mesh(&m), "seed").unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample_mesh();
        let bytes = encode_mesh(&m);
        let back = decode_mesh(&bytes, "t").unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_mesh(&back), bytes);
    }

    #[test]
    fn corrupted_magic_is_format_error() {
        let mut bytes = encode_mesh(&sample_mesh());
        bytes[3] = b'Z';
        assert!(matches!(decode_mesh(&bytes, "t"), Err(LsvError::Format { .. })));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let bytes = encode_mesh(&sample_mesh());
        let err = decode_mesh(&bytes[..bytes.len() - 8], "t").unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn bad_skin_row_is_reported_by_row() {
        let mut m = sample_mesh();
        m.skin_weights[4] = 0.8;
        let err = decode_mesh(&encode_mesh(&m), "t").unwrap_err();
        assert!(err.to_string().contains("skinWeights row 4"), "{err}");
    }
}
