//! Layered RGBA textures in logit space.
//!
//! Parameters are unconstrained; color and opacity are their logistic
//! sigmoids. Lookups are bilinear over activated texel values with texel
//! centers at ((i+0.5)/W, (j+0.5)/H) and clamp-to-edge addressing.
//! [`TextureStack::splat_gradient`] is the transpose of the lookup followed by
//! the sigmoid chain rule.

use crate::error::{LsvError, Result};

pub const CHANNELS: usize = 4;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Four texels and their bilinear weights. Indices are texel offsets within
/// a layer (row-major).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub texels: [usize; 4],
    pub weights: [f64; 4],
}

impl BilinearTaps {
    pub fn new(uv: [f64; 2], height: usize, width: usize) -> Self {
        let (i0, i1, fx) = axis_taps(uv[0], width);
        let (j0, j1, fy) = axis_taps(uv[1], height);
        BilinearTaps {
            texels: [j0 * width + i0, j0 * width + i1, j1 * width + i0, j1 * width + i1],
            weights: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        }
    }

    #[inline]
    fn blend(&self, fetch: impl Fn(usize) -> [f64; CHANNELS]) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        for (&t, &w) in self.texels.iter().zip(&self.weights) {
            let v = fetch(t);
            for c in 0..CHANNELS {
                out[c] += w * v[c];
            }
        }
        out
    }
}

#[inline]
fn axis_taps(coord: f64, size: usize) -> (usize, usize, f64) {
    let x = (coord * size as f64 - 0.5).clamp(0.0, (size - 1) as f64);
    let i0 = (x.floor() as usize).min(size - 1);
    let i1 = (i0 + 1).min(size - 1);
    (i0, i1, x - i0 as f64)
}

/// Color and opacity sampled from one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexSample {
    pub color: [f64; 3],
    pub opacity: f64,
}

impl TexSample {
    fn from_rgba(v: [f64; CHANNELS]) -> Self {
        TexSample {
            color: [v[0], v[1], v[2]],
            opacity: v[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureStack {
    layers: usize,
    height: usize,
    width: usize,
    /// N×H×W×4 logits.
    pub params: Vec<f64>,
}

impl TextureStack {
    pub fn new(layers: usize, height: usize, width: usize, params: Vec<f64>) -> Result<Self> {
        if layers == 0 || height == 0 || width == 0 {
            return Err(LsvError::invalid(format!(
                "texture dimensions must be positive, got {layers}×{height}×{width}"
            )));
        }
        if params.len() != layers * height * width * CHANNELS {
            return Err(LsvError::invalid(format!(
                "texture expects {} params, got {}",
                layers * height * width * CHANNELS,
                params.len()
            )));
        }
        Ok(TextureStack {
            layers,
            height,
            width,
            params,
        })
    }

    /// Every texel set to the same logits.
    pub fn constant(layers: usize, height: usize, width: usize, logits: [f64; CHANNELS]) -> Self {
        let params = logits
            .iter()
            .copied()
            .cycle()
            .take(layers * height * width * CHANNELS)
            .collect();
        TextureStack::new(layers, height, width, params).expect("positive dimensions")
    }

    /// Mid-gray, mostly transparent start (color 0.5, opacity 0.1).
    pub fn initial(layers: usize, height: usize, width: usize) -> Self {
        Self::constant(layers, height, width, [0.0, 0.0, 0.0, logit(0.1)])
    }

    pub fn num_layers(&self) -> usize {
        self.layers
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn texels_per_layer(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn param_index(&self, layer: usize, texel: usize, channel: usize) -> usize {
        (layer * self.texels_per_layer() + texel) * CHANNELS + channel
    }

    #[inline]
    fn activated_texel(&self, layer: usize, texel: usize) -> [f64; CHANNELS] {
        let base = self.param_index(layer, texel, 0);
        let p = &self.params[base..base + CHANNELS];
        [sigmoid(p[0]), sigmoid(p[1]), sigmoid(p[2]), sigmoid(p[3])]
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.layers {
            return Err(LsvError::invalid(format!(
                "layer {layer} out of range (N = {})",
                self.layers
            )));
        }
        Ok(())
    }

    pub fn taps(&self, uv: [f64; 2]) -> BilinearTaps {
        BilinearTaps::new(uv, self.height, self.width)
    }

    pub fn sample(&self, layer: usize, uv: [f64; 2]) -> Result<TexSample> {
        self.check_layer(layer)?;
        if !uv.iter().all(|x| x.is_finite()) {
            return Err(LsvError::invalid(format!("non-finite uv {uv:?}")));
        }
        let taps = self.taps(uv);
        Ok(TexSample::from_rgba(
            taps.blend(|t| self.activated_texel(layer, t)),
        ))
    }

    pub fn sample_all_layers(&self, uv: [f64; 2]) -> Result<Vec<TexSample>> {
        (0..self.layers).map(|n| self.sample(n, uv)).collect()
    }

    /// Snapshot of all activated values, for bulk lookups.
    pub fn activated(&self) -> ActivatedTexture {
        ActivatedTexture {
            layers: self.layers,
            height: self.height,
            width: self.width,
            values: self.params.iter().map(|&p| sigmoid(p)).collect(),
        }
    }

    /// Accumulates ∂L/∂params for one lookup given ∂L/∂color and ∂L/∂opacity.
    pub fn splat_gradient(
        &self,
        sink: &mut TextureGradients,
        layer: usize,
        uv: [f64; 2],
        d_color: [f64; 3],
        d_opacity: f64,
    ) {
        let taps = self.taps(uv);
        self.splat_taps(sink, layer, &taps, [d_color[0], d_color[1], d_color[2], d_opacity]);
    }

    pub(crate) fn splat_taps(
        &self,
        sink: &mut TextureGradients,
        layer: usize,
        taps: &BilinearTaps,
        d_rgba: [f64; CHANNELS],
    ) {
        for (&t, &w) in taps.texels.iter().zip(&taps.weights) {
            if w == 0.0 {
                continue;
            }
            let base = self.param_index(layer, t, 0);
            for c in 0..CHANNELS {
                let s = sigmoid(self.params[base + c]);
                sink.grads[base + c] += w * d_rgba[c] * s * (1.0 - s);
            }
        }
    }

    /// Transpose of the lookup in activated-value space (no sigmoid term).
    pub fn splat_activated(
        &self,
        sink: &mut TextureGradients,
        layer: usize,
        uv: [f64; 2],
        d_rgba: [f64; CHANNELS],
    ) {
        let taps = self.taps(uv);
        for (&t, &w) in taps.texels.iter().zip(&taps.weights) {
            let base = self.param_index(layer, t, 0);
            for c in 0..CHANNELS {
                sink.grads[base + c] += w * d_rgba[c];
            }
        }
    }

    /// Resamples the logits to a new resolution with the lookup's own
    /// addressing (bilinear, clamp-to-edge).
    pub fn upsample(&self, height: usize, width: usize) -> Result<TextureStack> {
        if height == 0 || width == 0 {
            return Err(LsvError::invalid("upsampled size must be positive"));
        }
        let mut params = Vec::with_capacity(self.layers * height * width * CHANNELS);
        for n in 0..self.layers {
            for j in 0..height {
                for i in 0..width {
                    let uv = [(i as f64 + 0.5) / width as f64, (j as f64 + 0.5) / height as f64];
                    let taps = self.taps(uv);
                    let v = taps.blend(|t| {
                        let b = self.param_index(n, t, 0);
                        [
                            self.params[b],
                            self.params[b + 1],
                            self.params[b + 2],
                            self.params[b + 3],
                        ]
                    });
                    params.extend_from_slice(&v);
                }
            }
        }
        TextureStack::new(self.layers, height, width, params)
    }

    pub fn zero_gradients(&self) -> TextureGradients {
        TextureGradients {
            grads: vec![0.0; self.params.len()],
        }
    }
}

/// Activated values of a [`TextureStack`], laid out like the params.
#[derive(Debug, Clone)]
pub struct ActivatedTexture {
    layers: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ActivatedTexture {
    pub fn num_layers(&self) -> usize {
        self.layers
    }

    /// Same result, bit for bit, as [`TextureStack::sample`].
    #[inline]
    pub fn sample_taps(&self, layer: usize, taps: &BilinearTaps) -> TexSample {
        let layer_base = layer * self.height * self.width;
        TexSample::from_rgba(taps.blend(|t| {
            let b = (layer_base + t) * CHANNELS;
            [
                self.values[b],
                self.values[b + 1],
                self.values[b + 2],
                self.values[b + 3],
            ]
        }))
    }

    pub fn taps(&self, uv: [f64; 2]) -> BilinearTaps {
        BilinearTaps::new(uv, self.height, self.width)
    }

    pub fn texel(&self, layer: usize, texel: usize) -> [f64; CHANNELS] {
        let b = (layer * self.height * self.width + texel) * CHANNELS;
        [
            self.values[b],
            self.values[b + 1],
            self.values[b + 2],
            self.values[b + 3],
        ]
    }
}

/// ∂L/∂params, same layout as [`TextureStack::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct TextureGradients {
    pub grads: Vec<f64>,
}

impl TextureGradients {
    /// Adds `other` element-wise. Merging worker buffers in a fixed order
    /// keeps results reproducible.
    pub fn merge(&mut self, other: &TextureGradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += *b;
        }
    }

    pub fn clear(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }
}
