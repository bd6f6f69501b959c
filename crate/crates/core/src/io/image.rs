use std::path::Path;

use super::{push_f32s, read_file, write_file, ByteReader};
use crate::error::{LsvError, Result};

pub const IMAGE_MAGIC: &[u8; 8] = b"LSVIMG1\0";

/// RGBA float raster with premultiplied color: a pixel shown over
/// background `bg` is `rgb + (1 − a)·bg`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGBA.
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 4 {
            return Err(LsvError::invalid(format!(
                "{width}×{height} RGBA image needs {} values, got {}",
                width * height * 4,
                data.len()
            )));
        }
        Ok(FloatImage {
            width,
            height,
            data,
        })
    }

    /// Builds from a color already composited over `bg` plus coverage.
    pub fn from_composited(
        width: usize,
        height: usize,
        rgb: &[[f64; 3]],
        alpha: &[f64],
        bg: [f64; 3],
    ) -> Self {
        let data = rgb
            .iter()
            .zip(alpha)
            .flat_map(|(c, &a)| {
                let k = 1.0 - a;
                [
                    (c[0] - k * bg[0]) as f32,
                    (c[1] - k * bg[1]) as f32,
                    (c[2] - k * bg[2]) as f32,
                    a as f32,
                ]
            })
            .collect();
        FloatImage {
            width,
            height,
            data,
        }
    }

    /// Color over `bg`, per pixel.
    pub fn over(&self, bg: [f64; 3]) -> Vec<[f64; 3]> {
        self.data
            .chunks_exact(4)
            .map(|p| {
                let k = 1.0 - p[3] as f64;
                [
                    p[0] as f64 + k * bg[0],
                    p[1] as f64 + k * bg[1],
                    p[2] as f64 + k * bg[2],
                ]
            })
            .collect()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.data.chunks_exact(4).map(|p| p[3] as f64).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4);
        out.extend_from_slice(IMAGE_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&4u32.to_le_bytes());
        push_f32s(&mut out, self.data.iter().map(|&v| v as f64));
        out
    }

    pub fn decode(bytes: &[u8], context: &str) -> Result<FloatImage> {
        let mut r = ByteReader::new(bytes, context);
        r.magic(IMAGE_MAGIC)?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let channels = r.u32()? as usize;
        if channels != 4 {
            return Err(LsvError::format(context, format!("expected 4 channels, found {channels}")));
        }
        let data = r.f32_vec(width * height * 4)?;
        if r.remaining() != 0 {
            return Err(LsvError::format(context, format!("{} trailing bytes", r.remaining())));
        }
        FloatImage::new(width, height, data)
    }
}

pub fn save_lsvimg(path: &Path, img: &FloatImage) -> Result<()> {
    write_file(path, &img.encode())
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit straight-alpha RGBA preview.
pub fn save_image_png(path: &Path, img: &FloatImage) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .chunks_exact(4)
        .flat_map(|p| {
            let a = p[3] as f64;
            let un = |c: f32| if a > 0.0 { c as f64 / a } else { 0.0 };
            [to_u8(un(p[0])), to_u8(un(p[1])), to_u8(un(p[2])), to_u8(a)]
        })
        .collect();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LsvError::io(parent, e))?;
    }
    ::image::save_buffer(
        path,
        &bytes,
        img.width as u32,
        img.height as u32,
        ::image::ExtendedColorType::Rgba8,
    )
    .map_err(|e| LsvError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads a float raster (`.lsvimg`) or any 8-bit image the `image` crate
/// reads (treated as straight alpha).
pub fn load_image(path: &Path) -> Result<FloatImage> {
    let is_raw = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("lsvimg"));
    if is_raw {
        return FloatImage::decode(&read_file(path)?, &path.display().to_string());
    }
    let img = ::image::open(path)
        .map_err(|e| LsvError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgba8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .flat_map(|p| {
            let a = p[3] as f32 / 255.0;
            [
                p[0] as f32 / 255.0 * a,
                p[1] as f32 / 255.0 * a,
                p[2] as f32 / 255.0 * a,
                a,
            ]
        })
        .collect();
    FloatImage::new(w as usize, h as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_round_trip_and_corruption() {
        let img = FloatImage::new(3, 2, (0..24).map(|i| i as f32 / 24.0).collect()).unwrap();
        let bytes = img.encode();
        assert_eq!(FloatImage::decode(&bytes, "t").unwrap(), img);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(FloatImage::decode(&bad, "t"), Err(LsvError::Format { .. })));
        assert!(FloatImage::decode(&bytes[..bytes.len() - 1], "t").is_err());
    }

    #[test]
    fn premultiplied_over_background() {
        let bg = [0.2, 0.4, 0.6];
        let img = FloatImage::from_composited(1, 1, &[[0.5, 0.5, 0.5]], &[0.25], bg);
        let back = img.over(bg);
        for c in 0..3 {
            assert!((back[0][c] - 0.5).abs() < 1e-7);
        }
    }

    #[test]
    fn png_round_trip_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = FloatImage::new(2, 1, vec![0.2, 0.1, 0.0, 0.5, 1.0, 0.0, 0.5, 1.0]).unwrap();
        save_image_png(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in back.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }
}
