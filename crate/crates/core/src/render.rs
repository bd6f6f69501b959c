//! End-to-end LSV rendering: deform every layer, rasterize each one
//! independently, composite.

use std::time::{Duration, Instant};

use crate::compositor::{composite, composite_image, CompositeBuffer, RenderConfig};
use crate::error::Result;
use crate::mesh::{deform_layers, LayerStack, Pose, Shape};
use crate::raster::{rasterize_layer, Camera, LayerGBuffer};
use crate::texture::TextureStack;
use crate::Vec3;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub deform: Duration,
    pub raster: Duration,
    pub composite: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.deform + self.raster + self.composite
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: CompositeBuffer,
    pub gbuffers: Vec<LayerGBuffer>,
    pub timings: StageTimings,
}

pub fn rasterize_layers(
    cam: &Camera,
    stack: &LayerStack,
    posed: &[Vec<Vec3>],
) -> Result<Vec<LayerGBuffer>> {
    let mesh = &stack.base;
    posed
        .iter()
        .map(|verts| rasterize_layer(cam, verts, &mesh.faces, &mesh.uvs))
        .collect()
}

/// Renders an LSV. `keep_intermediates` retains what the backward pass
/// needs.
pub fn render(
    stack: &LayerStack,
    tex: &TextureStack,
    cam: &Camera,
    pose: &Pose,
    shape: &Shape,
    cfg: &RenderConfig,
    keep_intermediates: bool,
) -> Result<RenderOutput> {
    let t0 = Instant::now();
    let posed = deform_layers(stack, pose, shape)?;
    let t1 = Instant::now();
    let gbuffers = rasterize_layers(cam, stack, &posed)?;
    let t2 = Instant::now();
    let image = if keep_intermediates {
        composite(&gbuffers, tex, cfg)?
    } else {
        composite_image(&gbuffers, tex, cfg)?
    };
    let t3 = Instant::now();
    Ok(RenderOutput {
        image,
        gbuffers,
        timings: StageTimings {
            deform: t1 - t0,
            raster: t2 - t1,
            composite: t3 - t2,
        },
    })
}
