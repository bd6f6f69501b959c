//! Load/save for every artifact type.
//!
//! Binary containers are little-endian with an 8-byte magic. JSON documents
//! are validated with path context; unknown fields are tolerated with a
//! warning.

mod image;
mod json;
mod mesh_format;
mod texture_format;

pub use self::image::{load_image, save_image_png, save_lsvimg, FloatImage, IMAGE_MAGIC};
pub use self::json::{
    load_camera, load_layer_config, load_manifest, load_pose, load_shape, save_camera,
    save_layer_config, save_manifest, save_pose, save_shape, DatasetManifest, LayerConfig,
    ManifestEntry, Split,
};
pub use self::mesh_format::{decode_mesh, encode_mesh, load_mesh, save_mesh, MESH_MAGIC};
pub use self::texture_format::{
    decode_texture, encode_texture, export_texture_png, load_texture, save_texture, TEXTURE_MAGIC,
};

use std::path::Path;

use crate::error::{LsvError, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| LsvError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LsvError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LsvError::io(path, e))
}

/// Sequential little-endian reader over a byte slice.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], context: &'a str) -> Self {
        ByteReader {
            bytes,
            pos: 0,
            context,
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(LsvError::format(
                self.context,
                format!(
                    "truncated: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            )),
        }
    }

    pub fn magic(&mut self, expected: &[u8]) -> Result<()> {
        let got = self.take(expected.len())?;
        if got != expected {
            return Err(LsvError::format(
                self.context,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| {
            LsvError::format(self.context, "section size overflows")
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}
