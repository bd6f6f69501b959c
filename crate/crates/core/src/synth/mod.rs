//! Procedural ground-truth scenes.

pub mod humanoid;
pub mod scene;

pub use humanoid::{build_humanoid, build_shell, truth_mesh, Humanoid, Material, Shell};
pub use scene::{
    make_synthetic_scene, material_color, quantize_f32, render_direct, render_truth, write_scene,
    SceneConfig, SceneView, SyntheticScene,
};
