//! Analytic texture gradients against central finite differences.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compositor::{composite_backward, composite_image, RenderConfig};
use crate::error::{LsvError, Result};
use crate::mesh::{build_layers, Pose, Shape, TemplateMesh};
use crate::raster::Camera;
use crate::render::render;
use crate::texture::{TextureStack, CHANNELS};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub layers: usize,
    pub texture_size: usize,
    pub image_size: usize,
    /// Number of params compared.
    pub samples: usize,
    pub h: f64,
    /// Texels whose total bilinear weight over all hits is at or below this
    /// are skipped.
    pub min_tap_weight: f64,
    pub seed: u64,
    pub gamma: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            layers: 3,
            texture_size: 64,
            image_size: 64,
            samples: 2048,
            h: 1e-3,
            min_tap_weight: 1e-3,
            seed: 0,
            gamma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamError {
    pub layer: usize,
    pub x: usize,
    pub y: usize,
    pub channel: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Worst entries first.
    pub worst: Vec<ParamError>,
    pub elapsed: Duration,
}

/// Relative error, with both values compared against the larger magnitude.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Random posed view of `mesh` with random layer textures, checked on a
/// random linear functional of the image.
pub fn gradcheck(mesh: Arc<TemplateMesh>, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.samples == 0 || !(cfg.h > 0.0) || !cfg.h.is_finite() {
        return Err(LsvError::invalid("gradcheck needs samples > 0 and a finite h > 0"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stack = build_layers(mesh.clone(), cfg.layers, -0.01, 0.01)?;

    // Frame the rest-pose bounding box from a random azimuth.
    let (lo, hi) = mesh.vertices.iter().fold(
        (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), v| (lo.inf(v), hi.sup(v)),
    );
    let center = 0.5 * (lo + hi);
    let radius = 0.5 * (hi - lo).norm();
    let fov: f64 = 0.7;
    let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
    let dist = 1.1 * radius / (0.5 * fov).tan();
    let eye = center + dist * Vec3::new(azimuth.sin(), 0.2, azimuth.cos()).normalize();
    let cam = Camera::look_at(eye, center, Vec3::y(), fov, cfg.image_size, cfg.image_size)?;
    let mut pose = Pose::zero(mesh.num_joints());
    for r in pose.joint_rotations.iter_mut().skip(1) {
        *r = Vec3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
    }
    let shape = Shape::zero(mesh.num_shapes());

    let n = cfg.texture_size;
    let params = (0..cfg.layers * n * n * CHANNELS).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let tex = TextureStack::new(cfg.layers, n, n, params)?;
    let render_cfg = RenderConfig { gamma: cfg.gamma, background: [rng.gen(), rng.gen(), rng.gen()] };
    render_cfg.validate()?;

    let out = render(&stack, &tex, &cam, &pose, &shape, &render_cfg, true)?;
    let probe: Vec<[f64; 3]> = (0..out.image.num_pixels())
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let mut grads = tex.zero_gradients();
    composite_backward(&out.image, &probe, &tex, &mut grads, &render_cfg)?;

    // Total bilinear weight each texel receives over all hits.
    let mut coverage = vec![0.0; cfg.layers * n * n];
    for h in &out.image.saved.as_ref().expect("kept").hits {
        let taps = tex.taps(h.uv);
        for (&t, &w) in taps.texels.iter().zip(&taps.weights) {
            coverage[h.layer as usize * n * n + t] += w;
        }
    }
    let mut candidates: Vec<usize> = (0..tex.params.len())
        .filter(|&i| coverage[i / CHANNELS] > cfg.min_tap_weight)
        .collect();
    if candidates.is_empty() {
        return Err(LsvError::Degenerate("no texel is visible in the gradcheck view".into()));
    }
    candidates.shuffle(&mut rng);
    candidates.truncate(cfg.samples);
    candidates.sort_unstable();

    let functional = |t: &TextureStack| -> Result<Vec<[f64; 3]>> {
        Ok(composite_image(&out.gbuffers, t, &render_cfg)?.rgb)
    };
    let mut errors = Vec::with_capacity(candidates.len());
    let mut work = tex.clone();
    for &i in &candidates {
        work.params[i] = tex.params[i] + cfg.h;
        let plus = functional(&work)?;
        work.params[i] = tex.params[i] - cfg.h;
        let minus = functional(&work)?;
        work.params[i] = tex.params[i];
        // Summing per-pixel differences keeps untouched pixels exactly zero.
        let mut diff = 0.0;
        for ((p, m), r) in plus.iter().zip(&minus).zip(&probe) {
            for c in 0..3 {
                diff += r[c] * (p[c] - m[c]);
            }
        }
        let numeric = diff / (2.0 * cfg.h);
        let analytic = grads.grads[i];
        let texel = (i / CHANNELS) % (n * n);
        errors.push(ParamError {
            layer: i / (CHANNELS * n * n),
            x: texel % n,
            y: texel / n,
            channel: i % CHANNELS,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    errors.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    Ok(GradcheckReport {
        checked: errors.len(),
        max_rel_error: errors[0].rel_error,
        worst: errors.into_iter().take(10).collect(),
        elapsed: start.elapsed(),
    })
}
