//! `LSVTEX1` texture container: 8-byte magic, u32 N, H, W, then N×H×W×4
//! little-endian f32 logits.

use std::path::{Path, PathBuf};

use super::image::{save_image_png, FloatImage};
use super::{push_f32s, read_file, write_file, ByteReader};
use crate::error::{LsvError, Result};
use crate::texture::{sigmoid, TextureStack, CHANNELS};

pub const TEXTURE_MAGIC: &[u8; 8] = b"LSVTEX1\0";

pub fn encode_texture(tex: &TextureStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + tex.params.len() * 4);
    out.extend_from_slice(TEXTURE_MAGIC);
    for d in [tex.num_layers(), tex.height(), tex.width()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    push_f32s(&mut out, tex.params.iter().copied());
    out
}

pub fn decode_texture(bytes: &[u8], context: &str) -> Result<TextureStack> {
    let mut r = ByteReader::new(bytes, context);
    r.magic(TEXTURE_MAGIC)?;
    let (n, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let params = r.f32_vec(n * h * w * CHANNELS)?;
    if r.remaining() != 0 {
        return Err(LsvError::format(context, format!("{} trailing bytes", r.remaining())));
    }
    TextureStack::new(n, h, w, params.into_iter().map(f64::from).collect())
        .map_err(|e| LsvError::format(context, e.to_string()))
}

pub fn load_texture(path: &Path) -> Result<TextureStack> {
    decode_texture(&read_file(path)?, &path.display().to_string())
}

pub fn save_texture(path: &Path, tex: &TextureStack) -> Result<()> {
    write_file(path, &encode_texture(tex))
}

/// Writes `<stem>_layerNN.png` per layer (activated, 8-bit) and returns the
/// paths.
pub fn export_texture_png(dir: &Path, stem: &str, tex: &TextureStack) -> Result<Vec<PathBuf>> {
    let per_layer = tex.texels_per_layer() * CHANNELS;
    tex.params
        .chunks(per_layer)
        .enumerate()
        .map(|(n, chunk)| {
            // Premultiply so the PNG writer's straight-alpha conversion
            // recovers the activated color.
            let data = chunk
                .chunks_exact(CHANNELS)
                .flat_map(|p| {
                    let a = sigmoid(p[3]);
                    [
                        (sigmoid(p[0]) * a) as f32,
                        (sigmoid(p[1]) * a) as f32,
                        (sigmoid(p[2]) * a) as f32,
                        a as f32,
                    ]
                })
                .collect();
            let img = FloatImage::new(tex.width(), tex.height(), data)?;
            let path = dir.join(format!("{stem}_layer{n:02}.png"));
            save_image_png(&path, &img)?;
            Ok(path)
        })
        .collect()
}
