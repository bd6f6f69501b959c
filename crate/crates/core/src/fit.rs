//! Single-scene texture fitting: MSE against posed reference views, an
//! optional opacity regularizer, Adam, and a coarse-to-fine schedule.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compositor::{composite_backward, RenderConfig};
use crate::error::{LsvError, Result};
use crate::io::{load_image, DatasetManifest, LayerConfig, Split};
use crate::mesh::{build_layers, LayerStack, Pose, Shape, TemplateMesh};
use crate::raster::Camera;
use crate::render::render;
use crate::texture::{sigmoid, TextureStack, CHANNELS};

/// Mean squared error over pixels and channels, plus its gradient.
pub fn mse_loss(rendered: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
    if rendered.len() != reference.len() {
        return Err(LsvError::invalid(format!(
            "image sizes differ: {} vs {} pixels",
            rendered.len(),
            reference.len()
        )));
    }
    let count = (rendered.len() * 3) as f64;
    let mut sum = 0.0;
    let grad = rendered
        .iter()
        .zip(reference)
        .map(|(r, t)| {
            let mut g = [0.0; 3];
            for c in 0..3 {
                let d = r[c] - t[c];
                sum += d * d;
                g[c] = 2.0 * d / count;
            }
            g
        })
        .collect();
    Ok((sum / count, grad))
}

/// 10·log10(1/mse); +∞ for identical images.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr(rendered: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<f64> {
    Ok(psnr_from_mse(mse_loss(rendered, reference)?.0))
}

/// Boolean mask in UV space, row-major (row = v).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UvMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl UvMask {
    pub fn full(height: usize, width: usize) -> Self {
        UvMask { height, width, data: vec![true; height * width] }
    }

    /// Reads a grayscale or color PNG; texels brighter than half are masked.
    pub fn load(path: &Path) -> Result<UvMask> {
        let img = image::open(path)
            .map_err(|e| LsvError::Image { path: path.to_path_buf(), message: e.to_string() })?
            .into_luma8();
        let (width, height) = (img.width() as usize, img.height() as usize);
        let data = img.pixels().map(|p| p.0[0] > 127).collect();
        Ok(UvMask { height, width, data })
    }

    /// Nearest-neighbour resample.
    pub fn resized(&self, height: usize, width: usize) -> UvMask {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut data = Vec::with_capacity(height * width);
        for j in 0..height {
            let sj = ((j as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for i in 0..width {
                let si = ((i as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                data.push(self.data[sj.min(self.height - 1) * self.width + si.min(self.width - 1)]);
            }
        }
        UvMask { height, width, data }
    }
}

/// λ · mean over masked texels of all layers of (1 − o)², with its
/// gradient with respect to the params.
pub fn opacity_regularizer(tex: &TextureStack, mask: &UvMask, lambda: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; tex.params.len()];
    if (mask.height, mask.width) != (tex.height(), tex.width()) {
        return Err(LsvError::invalid(format!(
            "mask is {}×{}, texture is {}×{}",
            mask.height,
            mask.width,
            tex.height(),
            tex.width()
        )));
    }
    let masked = mask.data.iter().filter(|&&m| m).count();
    if masked == 0 || lambda == 0.0 {
        return Ok((0.0, grad));
    }
    let count = (masked * tex.num_layers()) as f64;
    let mut sum = 0.0;
    for n in 0..tex.num_layers() {
        for (t, _) in mask.data.iter().enumerate().filter(|(_, &m)| m) {
            let i = tex.param_index(n, t, CHANNELS - 1);
            let o = sigmoid(tex.params[i]);
            sum += (1.0 - o) * (1.0 - o);
            grad[i] = lambda * -2.0 * (1.0 - o) * o * (1.0 - o) / count;
        }
    }
    Ok((lambda * sum / count, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step: 0 }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(LsvError::invalid(format!(
            "adam shapes differ: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= cfg.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    pub render: RenderConfig,
    pub texture_size: usize,
    pub opacity_reg_weight: f64,
    pub opacity_reg_mask: Option<UvMask>,
    /// (iteration, texture resolution) milestones, ascending.
    pub coarse_to_fine: Vec<(usize, usize)>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 500,
            adam: AdamConfig::default(),
            render: RenderConfig::default(),
            texture_size: 128,
            opacity_reg_weight: 0.0,
            opacity_reg_mask: None,
            coarse_to_fine: Vec::new(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.beta1 > 0.0 && a.beta1 < 1.0 && a.beta2 > 0.0 && a.beta2 < 1.0) {
            return Err(LsvError::invalid("adam betas must lie in (0, 1)"));
        }
        if !(a.learning_rate > 0.0) || !(a.eps > 0.0) {
            return Err(LsvError::invalid("learning rate and eps must be positive"));
        }
        if !(self.opacity_reg_weight >= 0.0) {
            return Err(LsvError::invalid("opacity regularizer weight must be ≥ 0"));
        }
        if self.texture_size == 0 {
            return Err(LsvError::invalid("texture size must be positive"));
        }
        let mut res = self.texture_size;
        let mut it = 0;
        for &(i, r) in &self.coarse_to_fine {
            if r <= res || i < it {
                return Err(LsvError::invalid(
                    "coarse-to-fine milestones must ascend in iteration and resolution",
                ));
            }
            res = r;
            it = i;
        }
        self.render.validate()
    }
}

/// A posed reference view with its image already over the background.
#[derive(Debug, Clone)]
pub struct FitView {
    pub camera: Camera,
    pub pose: Pose,
    pub shape: Shape,
    pub reference: Vec<[f64; 3]>,
}

/// Loads one split of a manifest, compositing images over `bg`.
pub fn load_views(
    manifest: &DatasetManifest,
    split: Split,
    num_shapes: usize,
    bg: [f64; 3],
) -> Result<Vec<FitView>> {
    manifest
        .split(split)
        .map(|e| {
            let img = load_image(&e.image_path)?;
            if (img.width, img.height) != (e.camera.width, e.camera.height) {
                return Err(LsvError::Format {
                    context: e.image_path.display().to_string(),
                    message: format!(
                        "image is {}×{} but its camera is {}×{}",
                        img.width, img.height, e.camera.width, e.camera.height
                    ),
                });
            }
            Ok(FitView {
                camera: e.camera.clone(),
                pose: e.pose.clone(),
                shape: e.shape.clone().unwrap_or_else(|| Shape::zero(num_shapes)),
                reference: img.over(bg),
            })
        })
        .collect()
}

pub fn layer_stack(mesh: Arc<TemplateMesh>, layers: &LayerConfig) -> Result<LayerStack> {
    build_layers(mesh, layers.n, layers.t_min, layers.t_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    pub reg_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub texture: TextureStack,
    pub history: Vec<LossRecord>,
}

/// Fits the layer textures to the given training views.
pub fn fit_scene(
    views: &[FitView],
    stack: &LayerStack,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(LsvError::invalid("training split is empty"));
    }
    let n = stack.num_layers();
    let mut tex = TextureStack::initial(n, cfg.texture_size, cfg.texture_size);
    let mut adam = AdamState::new(tex.params.len());
    let mut grads = tex.zero_gradients();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut milestones = cfg.coarse_to_fine.iter().peekable();
    let mut history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        while let Some(&&(at, res)) = milestones.peek() {
            if at > it {
                break;
            }
            log::debug!("iteration {it}: texture {res}×{res}");
            tex = tex.upsample(res, res)?;
            adam = AdamState::new(tex.params.len());
            grads = tex.zero_gradients();
            milestones.next();
        }
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let view = &views[order.pop().expect("refilled above")];

        let out = render(stack, &tex, &view.camera, &view.pose, &view.shape, &cfg.render, true)?;
        let (loss, d_rgb) = mse_loss(&out.image.rgb, &view.reference)?;
        grads.clear();
        composite_backward(&out.image, &d_rgb, &tex, &mut grads, &cfg.render)?;

        let mut reg_loss = 0.0;
        if cfg.opacity_reg_weight > 0.0 {
            let mask = match &cfg.opacity_reg_mask {
                Some(m) => m.resized(tex.height(), tex.width()),
                None => UvMask::full(tex.height(), tex.width()),
            };
            let (r, g) = opacity_regularizer(&tex, &mask, cfg.opacity_reg_weight)?;
            reg_loss = r;
            for (a, b) in grads.grads.iter_mut().zip(&g) {
                *a += *b;
            }
        }
        adam_step(&mut tex.params, &grads.grads, &mut adam, &cfg.adam)?;
        history.push(LossRecord { iteration: it, loss, reg_loss });
    }
    Ok(FitResult { texture: tex, history })
}

/// Writes `iteration,loss,regLoss` rows.
pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let wrap = |e: csv::Error| LsvError::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LsvError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(["iteration", "loss", "regLoss"]).map_err(wrap)?;
    for r in history {
        w.write_record([r.iteration.to_string(), r.loss.to_string(), r.reg_loss.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| LsvError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_psnr: f64,
    pub per_view: Vec<f64>,
}

/// Renders every view and reports PSNR against its reference.
pub fn evaluate(
    views: &[FitView],
    stack: &LayerStack,
    tex: &TextureStack,
    cfg: &RenderConfig,
) -> Result<Evaluation> {
    if views.is_empty() {
        return Err(LsvError::invalid("test split is empty"));
    }
    let per_view = views
        .iter()
        .map(|v| {
            let out = render(stack, tex, &v.camera, &v.pose, &v.shape, cfg, false)?;
            psnr(&out.image.rgb, &v.reference)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_psnr = per_view.iter().sum::<f64>() / per_view.len() as f64;
    Ok(Evaluation { mean_psnr, per_view })
}

/// Mean activated opacity over every texel of every layer.
pub fn mean_opacity(tex: &TextureStack) -> f64 {
    let count = tex.params.len() / CHANNELS;
    tex.params.chunks_exact(CHANNELS).map(|p| sigmoid(p[CHANNELS - 1])).sum::<f64>() / count as f64
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mse_examples() {
        let a = vec![[0.2, 0.4, 0.6]; 4];
        assert_eq!(mse_loss(&a, &a).unwrap(), (0.0, vec![[0.0; 3]; 4]));
        let b: Vec<_> = a.iter().map(|p| p.map(|x| x + 0.1)).collect();
        assert_relative_eq!(mse_loss(&b, &a).unwrap().0, 0.01, epsilon = 1e-15);
        let mut c = vec![[0.0; 3]; 4];
        c[2][1] = 1.0;
        let (loss, g) = mse_loss(&c, &vec![[0.0; 3]; 4]).unwrap();
        assert_relative_eq!(loss, 1.0 / 12.0, epsilon = 1e-15);
        assert_relative_eq!(g[2][1], 2.0 / 12.0, epsilon = 1e-15);
        assert!(mse_loss(&c, &a[..3]).is_err());
    }

    #[test]
    fn psnr_examples() {
        assert_relative_eq!(psnr_from_mse(0.01), 20.0, epsilon = 1e-12);
        assert_eq!(psnr_from_mse(1.0), 0.0);
        let a = vec![[0.5; 3]; 3];
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn regularizer_examples() {
        let mask = UvMask::full(4, 4);
        let opaque = TextureStack::constant(2, 4, 4, [0.0, 0.0, 0.0, 60.0]);
        assert!(opacity_regularizer(&opaque, &mask, 1.0).unwrap().0 < 1e-20);
        let clear = TextureStack::constant(2, 4, 4, [0.0, 0.0, 0.0, -60.0]);
        assert_relative_eq!(opacity_regularizer(&clear, &mask, 1.0).unwrap().0, 1.0, epsilon = 1e-12);
        let mid = TextureStack::initial(2, 4, 4);
        let (l, g) = opacity_regularizer(&mid, &mask, 0.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        let empty = UvMask { height: 4, width: 4, data: vec![false; 16] };
        assert_eq!(opacity_regularizer(&mid, &empty, 1.0).unwrap().0, 0.0);
    }

    #[test]
    fn regularizer_gradient_matches_differences() {
        let mut tex = TextureStack::initial(2, 3, 3);
        for (i, p) in tex.params.iter_mut().enumerate() {
            *p += 0.3 * ((i * 7 % 11) as f64 - 5.0) / 5.0;
        }
        let mut mask = UvMask::full(3, 3);
        mask.data[4] = false;
        let (_, g) = opacity_regularizer(&tex, &mask, 0.7).unwrap();
        let h = 1e-6;
        for i in 0..tex.params.len() {
            let mut plus = tex.clone();
            plus.params[i] += h;
            let mut minus = tex.clone();
            minus.params[i] -= h;
            let fd = (opacity_regularizer(&plus, &mask, 0.7).unwrap().0
                - opacity_regularizer(&minus, &mask, 0.7).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-9, "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn mask_resize_nearest() {
        let mask = UvMask { height: 2, width: 2, data: vec![true, false, false, true] };
        let up = mask.resized(4, 4);
        assert_eq!(up.data[0..4], [true, true, false, false]);
        assert_eq!(up.data[12..16], [false, false, true, true]);
    }

    #[test]
    fn adam_examples() {
        let cfg = AdamConfig::default();
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &cfg).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[3.0, -0.5], &mut s, &cfg).unwrap();
        assert_relative_eq!(p[0], 1.0 - cfg.learning_rate, epsilon = 1e-9);
        assert_relative_eq!(p[1], 1.0 + cfg.learning_rate, epsilon = 1e-9);
        assert!(adam_step(&mut p, &[1.0], &mut s, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let mut c = FitConfig::default();
        c.adam.beta1 = 1.0;
        assert!(c.validate().is_err());
        let c = FitConfig { texture_size: 32, coarse_to_fine: vec![(10, 64), (20, 64)], ..FitConfig::default() };
        assert!(c.validate().is_err());
    }
}
