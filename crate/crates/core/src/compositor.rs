//! Depth-weighted soft alpha compositing across layer G-buffers.
//!
//! For the layers S hit at a pixel, with depths normalized to
//! z̄ = (z − min z) / (max z − min z) (all zero when the range collapses):
//!
//! ```text
//! w_n = o_n exp(−o_n z̄_n / γ) / Σ_m o_m exp(−o_m z̄_m / γ)
//! A   = Σ w_n o_n
//! rgb = Σ w_n o_n c_n + (1 − A) · background
//! ```
//!
//! Pixels where every hit layer has zero opacity get w = 0 (background).
//! The backward pass differentiates all three appearances of o_n, including
//! the coupling through the normalization, and splats into texture
//! gradients. Depths do not depend on textures, so z̄ is a constant there.

use rayon::prelude::*;

use crate::error::{LsvError, Result};
use crate::raster::LayerGBuffer;
use crate::texture::{ActivatedTexture, TextureGradients, TextureStack};

pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Compositing temperature, > 0.
    pub gamma: f64,
    pub background: [f64; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            gamma: DEFAULT_GAMMA,
            background: [1.0, 1.0, 1.0],
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(LsvError::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !self.background.iter().all(|c| c.is_finite()) {
            return Err(LsvError::invalid("background must be finite"));
        }
        Ok(())
    }
}

/// Forward intermediates of one hit layer at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SavedHit {
    pub layer: u32,
    pub weight: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    pub zbar: f64,
    pub uv: [f64; 2],
    /// exp(−o z̄/γ) / Σ_m o_m exp(−o_m z̄_m/γ); 0 when the pixel has no
    /// positive opacity.
    pub exp_over_denom: f64,
}

/// Per-pixel hit lists in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedState {
    pub offsets: Vec<usize>,
    pub hits: Vec<SavedHit>,
}

impl SavedState {
    pub fn pixel(&self, p: usize) -> &[SavedHit] {
        &self.hits[self.offsets[p]..self.offsets[p + 1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeBuffer {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
    pub saved: Option<SavedState>,
}

impl CompositeBuffer {
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Interleaved RGBA floats, row-major.
    pub fn to_rgba(&self) -> Vec<f32> {
        self.rgb
            .iter()
            .zip(&self.alpha)
            .flat_map(|(c, a)| [c[0] as f32, c[1] as f32, c[2] as f32, *a as f32])
            .collect()
    }
}

/// One layer sample entering the per-pixel blend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSample {
    pub layer: u32,
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    pub uv: [f64; 2],
}

/// Blends one pixel. Appends saved intermediates to `saved` when given.
pub fn blend_pixel(
    samples: &[LayerSample],
    cfg: &RenderConfig,
    mut saved: Option<&mut Vec<SavedHit>>,
) -> ([f64; 3], f64) {
    let bg = cfg.background;
    if samples.is_empty() {
        return (bg, 0.0);
    }
    let (zmin, zmax) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.depth), hi.max(s.depth))
        });
    let range = zmax - zmin;
    let zbar = |z: f64| if range > 0.0 { (z - zmin) / range } else { 0.0 };

    // Log-domain weights: l_n = ln o_n − o_n z̄_n/γ.
    let mut log_max = f64::NEG_INFINITY;
    for s in samples {
        if s.opacity > 0.0 {
            log_max = log_max.max(s.opacity.ln() - s.opacity * zbar(s.depth) / cfg.gamma);
        }
    }
    let any_opaque = log_max > f64::NEG_INFINITY;
    let sum_scaled: f64 = if any_opaque {
        samples
            .iter()
            .filter(|s| s.opacity > 0.0)
            .map(|s| (s.opacity.ln() - s.opacity * zbar(s.depth) / cfg.gamma - log_max).exp())
            .sum()
    } else {
        0.0
    };
    let log_denom = log_max + sum_scaled.ln();

    let mut rgb = [0.0; 3];
    let mut alpha = 0.0;
    for s in samples {
        let zb = zbar(s.depth);
        let (weight, exp_over_denom) = if any_opaque {
            let e_over_d = (-s.opacity * zb / cfg.gamma - log_denom).exp();
            let w = if s.opacity > 0.0 {
                (s.opacity.ln() - s.opacity * zb / cfg.gamma - log_denom).exp()
            } else {
                0.0
            };
            (w, e_over_d)
        } else {
            (0.0, 0.0)
        };
        let wo = weight * s.opacity;
        for c in 0..3 {
            rgb[c] += wo * s.color[c];
        }
        alpha += wo;
        if let Some(out) = saved.as_deref_mut() {
            out.push(SavedHit {
                layer: s.layer,
                weight,
                opacity: s.opacity,
                color: s.color,
                zbar: zb,
                uv: s.uv,
                exp_over_denom,
            });
        }
    }
    for c in 0..3 {
        rgb[c] += (1.0 - alpha) * bg[c];
    }
    (rgb, alpha)
}

/// ∂L/∂(c_n, o_n) for every hit of one pixel, given ∂L/∂rgb.
pub fn blend_pixel_backward(
    hits: &[SavedHit],
    d_rgb: [f64; 3],
    cfg: &RenderConfig,
    out: &mut [[f64; 4]],
) {
    let bg = cfg.background;
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    // q_n = ∂L/∂w_n = g·(o_n (c_n − bg)).
    let mut q_mean = 0.0;
    for h in hits {
        let diff = [h.color[0] - bg[0], h.color[1] - bg[1], h.color[2] - bg[2]];
        q_mean += h.weight * h.opacity * dot(d_rgb, diff);
    }
    for (h, o) in hits.iter().zip(out.iter_mut()) {
        let diff = [h.color[0] - bg[0], h.color[1] - bg[1], h.color[2] - bg[2]];
        let g_diff = dot(d_rgb, diff);
        let wo = h.weight * h.opacity;
        let direct = h.weight * g_diff;
        let q = h.opacity * g_diff;
        // ∂a_n/∂o_n = e_n (1 − o_n z̄_n/γ), ∂L/∂a_n = (q_n − Σ w q)/D.
        let through_weights =
            (q - q_mean) * h.exp_over_denom * (1.0 - h.opacity * h.zbar / cfg.gamma);
        *o = [
            d_rgb[0] * wo,
            d_rgb[1] * wo,
            d_rgb[2] * wo,
            direct + through_weights,
        ];
    }
}

fn check_buffers(gbuffers: &[LayerGBuffer], tex_layers: usize) -> Result<(usize, usize)> {
    let first = gbuffers
        .first()
        .ok_or_else(|| LsvError::invalid("no layer buffers to composite"))?;
    let (w, h) = (first.width, first.height);
    if let Some((i, g)) = gbuffers
        .iter()
        .enumerate()
        .find(|(_, g)| g.width != w || g.height != h)
    {
        return Err(LsvError::invalid(format!(
            "layer {i} buffer is {}×{}, expected {w}×{h}",
            g.width, g.height
        )));
    }
    if gbuffers.len() != tex_layers {
        return Err(LsvError::invalid(format!(
            "{} layer buffers but texture has {tex_layers} layers",
            gbuffers.len()
        )));
    }
    Ok((w, h))
}

struct RowOut {
    rgb: Vec<[f64; 3]>,
    alpha: Vec<f64>,
    counts: Vec<usize>,
    hits: Vec<SavedHit>,
}

fn composite_impl(
    gbuffers: &[LayerGBuffer],
    tex: &ActivatedTexture,
    cfg: &RenderConfig,
    keep: bool,
) -> Result<CompositeBuffer> {
    cfg.validate()?;
    let (width, height) = check_buffers(gbuffers, tex.num_layers())?;
    let rows: Vec<RowOut> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut row = RowOut {
                rgb: Vec::with_capacity(width),
                alpha: Vec::with_capacity(width),
                counts: Vec::with_capacity(if keep { width } else { 0 }),
                hits: Vec::new(),
            };
            let mut samples = Vec::with_capacity(gbuffers.len());
            for x in 0..width {
                let p = y * width + x;
                samples.clear();
                for (n, g) in gbuffers.iter().enumerate() {
                    if g.hit(p) {
                        let s = tex.sample_taps(n, &tex.taps(g.uv[p]));
                        samples.push(LayerSample {
                            layer: n as u32,
                            depth: g.depth[p],
                            opacity: s.opacity,
                            color: s.color,
                            uv: g.uv[p],
                        });
                    }
                }
                let before = row.hits.len();
                let (rgb, a) = blend_pixel(&samples, cfg, keep.then_some(&mut row.hits));
                row.rgb.push(rgb);
                row.alpha.push(a);
                if keep {
                    row.counts.push(row.hits.len() - before);
                }
            }
            row
        })
        .collect();

    let mut out = CompositeBuffer {
        width,
        height,
        rgb: Vec::with_capacity(width * height),
        alpha: Vec::with_capacity(width * height),
        saved: None,
    };
    let mut saved = keep.then(|| SavedState {
        offsets: Vec::with_capacity(width * height + 1),
        hits: Vec::with_capacity(rows.iter().map(|r| r.hits.len()).sum()),
    });
    if let Some(s) = saved.as_mut() {
        s.offsets.push(0);
    }
    for row in rows {
        out.rgb.extend(row.rgb);
        out.alpha.extend(row.alpha);
        if let Some(s) = saved.as_mut() {
            for c in row.counts {
                let last = *s.offsets.last().unwrap();
                s.offsets.push(last + c);
            }
            s.hits.extend(row.hits);
        }
    }
    out.saved = saved;
    Ok(out)
}

/// Forward pass keeping intermediates for [`composite_backward`].
pub fn composite(
    gbuffers: &[LayerGBuffer],
    tex: &TextureStack,
    cfg: &RenderConfig,
) -> Result<CompositeBuffer> {
    composite_impl(gbuffers, &tex.activated(), cfg, true)
}

/// Forward pass without intermediates (inference).
pub fn composite_image(
    gbuffers: &[LayerGBuffer],
    tex: &TextureStack,
    cfg: &RenderConfig,
) -> Result<CompositeBuffer> {
    composite_impl(gbuffers, &tex.activated(), cfg, false)
}

/// Per-hit (∂L/∂color, ∂L/∂opacity), aligned with `saved.hits`.
pub fn hit_adjoints(
    saved: &SavedState,
    d_rgb: &[[f64; 3]],
    cfg: &RenderConfig,
) -> Vec<[f64; 4]> {
    let mut adj = vec![[0.0; 4]; saved.hits.len()];
    let num_pixels = saved.offsets.len() - 1;
    // Split the output along pixel boundaries in fixed-size groups.
    const GROUP: usize = 256;
    let mut slices = Vec::with_capacity(num_pixels.div_ceil(GROUP));
    let mut rest: &mut [[f64; 4]] = &mut adj;
    let mut start = 0;
    while start < num_pixels {
        let end = (start + GROUP).min(num_pixels);
        let len = saved.offsets[end] - saved.offsets[start];
        let (head, tail) = rest.split_at_mut(len);
        slices.push((start, end, head));
        rest = tail;
        start = end;
    }
    slices.into_par_iter().for_each(|(start, end, out)| {
        let base = saved.offsets[start];
        for p in start..end {
            let range = saved.offsets[p] - base..saved.offsets[p + 1] - base;
            blend_pixel_backward(saved.pixel(p), d_rgb[p], cfg, &mut out[range]);
        }
    });
    adj
}

/// Accumulates ∂L/∂params into `sink` given ∂L/∂rgb per pixel.
///
/// Per-hit adjoints are computed in parallel; splatting into the shared
/// gradient buffer runs serially in pixel order, so the result does not
/// depend on the worker count.
pub fn composite_backward(
    buf: &CompositeBuffer,
    d_rgb: &[[f64; 3]],
    tex: &TextureStack,
    sink: &mut TextureGradients,
    cfg: &RenderConfig,
) -> Result<()> {
    let saved = buf
        .saved
        .as_ref()
        .ok_or_else(|| LsvError::InvalidState("composite buffer has no saved intermediates".into()))?;
    if d_rgb.len() != buf.num_pixels() {
        return Err(LsvError::invalid(format!(
            "gradient image has {} pixels, render has {}",
            d_rgb.len(),
            buf.num_pixels()
        )));
    }
    if sink.grads.len() != tex.params.len() {
        return Err(LsvError::invalid("gradient buffer does not match texture"));
    }
    let adj = hit_adjoints(saved, d_rgb, cfg);
    for (h, a) in saved.hits.iter().zip(&adj) {
        if a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let taps = tex.taps(h.uv);
        tex.splat_taps(sink, h.layer as usize, &taps, *a);
    }
    Ok(())
}
