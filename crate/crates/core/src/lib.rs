//! Layered surface volumes: concentric textured shells around a skinned
//! template mesh, rendered by rasterizing each shell and blending the hits
//! with depth-weighted soft alpha compositing.
//!
//! The pipeline is differentiable with respect to the shell textures, which
//! makes single-scene texture fitting from posed multi-view images possible
//! (see [`fit`]).

pub mod compositor;
pub mod error;
pub mod fit;
pub mod gradcheck;
pub mod io;
pub mod mesh;
pub mod raster;
pub mod render;
pub mod synth;
pub mod texture;

pub use compositor::{composite, composite_backward, CompositeBuffer, RenderConfig};
pub use error::{LsvError, Result};
pub use mesh::{
    apply_shape, build_layers, deform_layers, lbs, regress_joints, vertex_normals, LayerStack,
    Pose, Shape, TemplateMesh,
};
pub use raster::{rasterize_layer, Camera, LayerGBuffer};
pub use texture::{TextureGradients, TextureStack};

pub type Vec3 = nalgebra::Vector3<f64>;
