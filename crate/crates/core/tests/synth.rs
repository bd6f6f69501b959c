mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use lsv_core::compositor::RenderConfig;
use lsv_core::io::{load_camera, load_image, load_manifest, load_mesh, Split};
use lsv_core::mesh::{build_layers, Shape};
use lsv_core::render::render;
use lsv_core::synth::humanoid::{atlas_local, cell_rect, SHELL_MAX_OFFSET};
use lsv_core::synth::{make_synthetic_scene, render_direct, write_scene, SceneConfig};
use lsv_core::texture::CHANNELS;
use lsv_core::TextureStack;

use common::point_triangle_distance;

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn same_seed_writes_identical_bytes() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let scene = make_synthetic_scene(&SceneConfig::new(42, 8, 24)).unwrap();
        write_scene(&scene, d.path()).unwrap();
    }
    let (a, b) = (read_tree(dirs[0].path()), read_tree(dirs[1].path()));
    assert!(a.contains_key("manifest.json"));
    assert!(a.contains_key("meshes/template.lsvmesh"));
    assert_eq!(a.keys().filter(|k| k.starts_with("images/")).count(), 16);
    assert_eq!(a, b);

    let other = tempfile::tempdir().unwrap();
    write_scene(&make_synthetic_scene(&SceneConfig::new(43, 8, 24)).unwrap(), other.path()).unwrap();
    assert_ne!(a.get("manifest.json"), None);
    assert_ne!(a.get("cameras/view_000.json"), read_tree(other.path()).get("cameras/view_000.json"));
}

#[test]
fn saved_scene_reloads_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let scene = make_synthetic_scene(&SceneConfig::new(5, 8, 20)).unwrap();
    let manifest_path = write_scene(&scene, dir.path()).unwrap();

    let template = load_mesh(&dir.path().join("meshes/template.lsvmesh")).unwrap();
    assert_eq!(&template, scene.template());
    let truth = load_mesh(&dir.path().join("meshes/truth.lsvmesh")).unwrap();
    assert_eq!(truth, scene.truth);

    let manifest = load_manifest(&manifest_path).unwrap();
    assert_eq!(manifest.split(Split::Train).count(), 6);
    assert_eq!(manifest.split(Split::Test).count(), 2);
    for (entry, view) in manifest.entries.iter().zip(&scene.views) {
        entry.camera.validate().unwrap();
        assert_eq!(entry.camera, view.camera);
        assert_eq!(entry.pose, view.pose);
        assert_eq!(entry.split, view.split);
        assert_eq!(load_image(&entry.image_path).unwrap(), view.image);
    }
    load_camera(&dir.path().join("cameras/view_007.json")).unwrap();
}

#[test]
fn shell_stays_four_millimetres_off_the_body() {
    let scene = make_synthetic_scene(&SceneConfig::new(0, 8, 8)).unwrap();
    let base = scene.template();
    let mut closest = f64::INFINITY;
    for p in &scene.shell.vertices {
        for f in &base.faces {
            let [a, b, c] = f.map(|i| base.vertices[i as usize]);
            closest = closest.min(point_triangle_distance(*p, a, b, c));
        }
    }
    assert!(closest >= 0.004, "closest shell vertex is {closest} m from the body");
    assert!(closest <= SHELL_MAX_OFFSET, "{closest}");
}

/// Texture holding each part's flat color inside its atlas cell.
fn baked_part_colors(parts: usize, size: usize, color: impl Fn(usize) -> [f64; 3]) -> TextureStack {
    let mut params = vec![0.0; size * size * CHANNELS];
    for j in 0..size {
        for i in 0..size {
            let uv = [(i as f64 + 0.5) / size as f64, (j as f64 + 0.5) / size as f64];
            let (part, _, _) = atlas_local(uv);
            let c = if part < parts { color(part) } else { [0.5; 3] };
            let b = (j * size + i) * CHANNELS;
            for k in 0..3 {
                params[b + k] = lsv_core::texture::logit(c[k]);
            }
            params[b + 3] = 40.0;
        }
    }
    TextureStack::new(1, size, size, params).unwrap()
}

#[test]
fn direct_renderer_matches_single_opaque_layer() {
    let scene = make_synthetic_scene(&SceneConfig::new(2, 8, 64)).unwrap();
    let h = &scene.humanoid;
    let color = |p: usize| {
        let x = p as f64 / h.num_parts() as f64;
        [0.1 + 0.8 * x, 0.9 - 0.7 * x, 0.3 + 0.4 * (x * 7.0).fract()]
    };
    // Cells keep every bilinear tap inside the part at this resolution.
    assert!(cell_rect(0).0 * 128.0 >= 1.0);
    let tex = baked_part_colors(h.num_parts(), 128, color);
    let stack = build_layers(Arc::new(scene.template().clone()), 1, -0.01, 0.01).unwrap();
    let cfg = RenderConfig::default();
    let shape = Shape::zero(scene.template().num_shapes());
    for view in &scene.views {
        let direct = render_direct(scene.template(), &view.camera, &view.pose, |f, _| color(h.face_part[f]))
            .unwrap()
            .over(cfg.background);
        let lsv = render(&stack, &tex, &view.camera, &view.pose, &shape, &cfg, false).unwrap();
        for (p, (a, b)) in direct.iter().zip(&lsv.image.rgb).enumerate() {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-5, "pixel {p}: {a:?} vs {b:?}");
            }
        }
    }
}
