//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use lsv_core::mesh::{build_layers, LayerStack, Pose, Shape};
use lsv_core::synth::build_humanoid;
use lsv_core::{Camera, TextureStack, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub stack: LayerStack,
    pub tex: TextureStack,
    pub camera: Camera,
    pub pose: Pose,
    pub shape: Shape,
}

/// Humanoid with `layers` shells, a random texture and a full-body view.
pub fn fixture(layers: usize, image_size: usize) -> Fixture {
    let mesh = Arc::new(build_humanoid().mesh);
    let stack = build_layers(mesh.clone(), layers, -0.01, 0.01).expect("valid humanoid");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = (0..layers * 128 * 128 * 4).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let tex = TextureStack::new(layers, 128, 128, params).expect("sized params");
    let target = Vec3::new(0.0, 0.92, 0.0);
    let camera = Camera::look_at(
        target + Vec3::new(1.2, 0.4, 2.4),
        target,
        Vec3::y(),
        0.75,
        image_size,
        image_size,
    )
    .expect("valid camera");
    Fixture {
        pose: Pose::zero(mesh.num_joints()),
        shape: Shape::zero(mesh.num_shapes()),
        stack,
        tex,
        camera,
    }
}
