//! Seeded multi-view scene over the humanoid with its shell, rendered by a
//! plain textured-mesh renderer that never touches the layer compositor.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::humanoid::{atlas_local, build_humanoid, build_shell, truth_mesh, Humanoid, Material, Shell};
use crate::error::{LsvError, Result};
use crate::io::{save_camera, save_image_png, save_lsvimg, save_manifest, save_mesh, save_pose, FloatImage, Split};
use crate::mesh::{lbs, regress_joints, Pose, TemplateMesh};
use crate::raster::{rasterize_layer, Camera};
use crate::Vec3;

/// Framing and sampling of the camera ring.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub views: usize,
    pub image_size: usize,
    pub target: Vec3,
    pub distance: f64,
    pub elevation: f64,
    pub fov_y: f64,
    /// Max per-joint rotation perturbation in radians.
    pub pose_jitter: f64,
}

impl SceneConfig {
    pub fn new(seed: u64, views: usize, image_size: usize) -> Self {
        SceneConfig {
            seed,
            views,
            image_size,
            target: Vec3::new(0.0, 1.33, 0.0),
            distance: 1.75,
            elevation: 10f64.to_radians(),
            fov_y: 0.45,
            pose_jitter: 0.12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneView {
    pub camera: Camera,
    pub pose: Pose,
    pub image: FloatImage,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub humanoid: Humanoid,
    pub shell: Shell,
    pub truth: TemplateMesh,
    pub truth_materials: Vec<Material>,
    pub views: Vec<SceneView>,
}

impl SyntheticScene {
    /// The base mesh fitted against (no shell).
    pub fn template(&self) -> &TemplateMesh {
        &self.humanoid.mesh
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SceneView> {
        self.views.iter().filter(move |v| v.split == split)
    }
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

fn wave(x: f64) -> f64 {
    0.5 + 0.5 * (TAU * x).sin()
}

/// Procedural albedo at local cell coordinates of a part.
pub fn material_color(material: Material, lu: f64, lv: f64) -> [f64; 3] {
    match material {
        Material::Skin => mix([0.80, 0.60, 0.47], [0.90, 0.70, 0.56], wave(lv)),
        Material::Shirt => mix([0.20, 0.50, 0.35], [0.85, 0.85, 0.80], wave(lv)),
        Material::Pants => mix([0.12, 0.18, 0.45], [0.25, 0.32, 0.62], wave(lu)),
        Material::Shoes => [0.10, 0.08, 0.07],
        Material::Hair => mix([0.18, 0.10, 0.05], [0.45, 0.28, 0.12], wave(2.0 * lu)),
        Material::Vest => mix([0.70, 0.12, 0.12], [0.95, 0.75, 0.20], wave(lu) * wave(lv)),
    }
}

/// Direct opaque render of a skinned mesh: one rasterization pass, colors
/// from `shade(face, uv)`. Returns premultiplied RGBA with alpha 1 on
/// coverage.
pub fn render_direct(
    mesh: &TemplateMesh,
    cam: &Camera,
    pose: &Pose,
    shade: impl Fn(usize, [f64; 2]) -> [f64; 3],
) -> Result<FloatImage> {
    let joints = regress_joints(mesh, &mesh.vertices)?;
    let posed = lbs(&mesh.vertices, &joints, &mesh.skin_weights, &mesh.parents, pose)?;
    let g = rasterize_layer(cam, &posed, &mesh.faces, &mesh.uvs)?;
    let mut data = vec![0f32; g.width * g.height * 4];
    for (p, px) in data.chunks_exact_mut(4).enumerate() {
        if g.hit(p) {
            let c = shade(g.face[p] as usize, g.uv[p]);
            px.copy_from_slice(&[c[0] as f32, c[1] as f32, c[2] as f32, 1.0]);
        }
    }
    FloatImage::new(g.width, g.height, data)
}

/// Ground-truth render of the full geometry (body plus shell).
pub fn render_truth(
    truth: &TemplateMesh,
    materials: &[Material],
    cam: &Camera,
    pose: &Pose,
) -> Result<FloatImage> {
    render_direct(truth, cam, pose, |f, uv| {
        let (_, lu, lv) = atlas_local(uv);
        material_color(materials[f], lu, lv)
    })
}

/// Rounds every stored real through f32 so the in-memory mesh equals what
/// the binary format reloads.
pub fn quantize_f32(mesh: &mut TemplateMesh) {
    let q = |x: &mut f64| *x = *x as f32 as f64;
    mesh.vertices.iter_mut().flat_map(|v| v.iter_mut()).for_each(q);
    mesh.uvs.iter_mut().flatten().flatten().for_each(q);
    mesh.skin_weights.iter_mut().for_each(q);
    mesh.joint_regressor.iter_mut().for_each(q);
    mesh.shape_basis.iter_mut().flatten().flat_map(|v| v.iter_mut()).for_each(q);
}

/// Joints whose rotation is perturbed per view.
const JITTERED: [usize; 13] = [1, 2, 3, 4, 5, 7, 8, 10, 11, 13, 14, 6, 9];

pub fn make_synthetic_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    if cfg.views < 8 {
        return Err(LsvError::invalid(format!("need at least 8 views, got {}", cfg.views)));
    }
    if cfg.image_size == 0 {
        return Err(LsvError::invalid("image size must be positive"));
    }
    let mut humanoid = build_humanoid();
    quantize_f32(&mut humanoid.mesh);
    let mut shell = build_shell(&humanoid);
    shell.vertices.iter_mut().flat_map(|v| v.iter_mut()).for_each(|x| *x = *x as f32 as f64);
    let (mut truth, truth_materials) = truth_mesh(&humanoid, &shell);
    quantize_f32(&mut truth);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nj = humanoid.mesh.num_joints();
    let up = Vec3::new(0.0, 1.0, 0.0);
    let mut views = Vec::with_capacity(cfg.views);
    for k in 0..cfg.views {
        let azimuth = TAU * (k as f64 + rng.gen_range(-0.25..0.25)) / cfg.views as f64;
        let (ce, se) = (cfg.elevation.cos(), cfg.elevation.sin());
        let eye = cfg.target
            + cfg.distance * Vec3::new(ce * azimuth.sin(), se, ce * azimuth.cos());
        let camera = Camera::look_at(eye, cfg.target, up, cfg.fov_y, cfg.image_size, cfg.image_size)?;
        let mut pose = Pose::zero(nj);
        for &j in &JITTERED {
            pose.joint_rotations[j] = Vec3::from_fn(|_, _| rng.gen_range(-cfg.pose_jitter..=cfg.pose_jitter));
        }
        let image = render_truth(&truth, &truth_materials, &camera, &pose)?;
        views.push(SceneView { camera, pose, image, split: Split::Test });
    }
    let mut order: Vec<usize> = (0..cfg.views).collect();
    order.shuffle(&mut rng);
    for &i in &order[..cfg.views * 3 / 4] {
        views[i].split = Split::Train;
    }
    Ok(SyntheticScene {
        config: cfg.clone(),
        humanoid,
        shell,
        truth,
        truth_materials,
        views,
    })
}

/// Writes the scene layout: `meshes/`, `cameras/`, `poses/`, `images/`
/// and `manifest.json`. Returns the manifest path.
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<PathBuf> {
    save_mesh(&dir.join("meshes/template.lsvmesh"), scene.template())?;
    save_mesh(&dir.join("meshes/truth.lsvmesh"), &scene.truth)?;
    let mut entries = Vec::with_capacity(scene.views.len());
    for (k, view) in scene.views.iter().enumerate() {
        let stem = format!("view_{k:03}");
        let image = PathBuf::from(format!("images/{stem}.lsvimg"));
        let camera = PathBuf::from(format!("cameras/{stem}.json"));
        let pose = PathBuf::from(format!("poses/{stem}.json"));
        save_lsvimg(&dir.join(&image), &view.image)?;
        save_image_png(&dir.join(format!("images/{stem}.png")), &view.image)?;
        save_camera(&dir.join(&camera), &view.camera)?;
        save_pose(&dir.join(&pose), &view.pose)?;
        entries.push((image, camera, pose, None, view.split));
    }
    let manifest = dir.join("manifest.json");
    save_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_views_split_six_two() {
        let scene = make_synthetic_scene(&SceneConfig::new(3, 8, 16)).unwrap();
        assert_eq!(scene.split(Split::Train).count(), 6);
        assert_eq!(scene.split(Split::Test).count(), 2);
    }

    #[test]
    fn too_few_views_rejected() {
        assert!(make_synthetic_scene(&SceneConfig::new(0, 7, 16)).is_err());
    }

    #[test]
    fn figure_is_in_frame() {
        let scene = make_synthetic_scene(&SceneConfig::new(1, 8, 48)).unwrap();
        for view in &scene.views {
            let a = view.image.alpha();
            let covered = a.iter().filter(|&&x| x > 0.0).count();
            assert!(covered > a.len() / 10, "{covered} of {}", a.len());
        }
    }
}
