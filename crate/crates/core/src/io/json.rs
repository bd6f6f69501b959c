use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{read_file, write_file};
use crate::error::{LsvError, Result};
use crate::mesh::{Pose, Shape};
use crate::raster::Camera;
use crate::Vec3;

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses JSON with pointer-qualified errors; unknown fields are logged.
pub(crate) fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let mut record = |p: serde_ignored::Path<'_>| unknown.push(p.to_string());
    let ignored = serde_ignored::Deserializer::new(&mut de, &mut record);
    let value = serde_path_to_error::deserialize(ignored).map_err(|e| LsvError::Schema {
        path: path.to_path_buf(),
        pointer: pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| LsvError::Schema {
        path: path.to_path_buf(),
        pointer: String::new(),
        message: e.to_string(),
    })?;
    for field in unknown {
        log::warn!("{}: ignoring unknown field '{field}'", path.display());
    }
    Ok(value)
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| LsvError::Schema {
        path: path.to_path_buf(),
        pointer: String::new(),
        message: e.to_string(),
    })?;
    parse_json(&text, path)
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    /// Row-major world-to-camera rotation.
    rotation: [f64; 9],
    translation: [f64; 3],
    near: f64,
    far: f64,
}

pub fn load_camera(path: &Path) -> Result<Camera> {
    let d: CameraDoc = load_json(path)?;
    let cam = Camera {
        fx: d.fx,
        fy: d.fy,
        cx: d.cx,
        cy: d.cy,
        width: d.width,
        height: d.height,
        rotation: Matrix3::from_row_slice(&d.rotation),
        translation: Vec3::from(d.translation),
        near: d.near,
        far: d.far,
    };
    cam.validate()?;
    Ok(cam)
}

pub fn save_camera(path: &Path, cam: &Camera) -> Result<()> {
    let r = &cam.rotation;
    save_json(
        path,
        &CameraDoc {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            rotation: std::array::from_fn(|k| r[(k / 3, k % 3)]),
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            near: cam.near,
            far: cam.far,
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseDoc {
    joint_rotations: Vec<[f64; 3]>,
    root_translation: [f64; 3],
}

pub fn load_pose(path: &Path) -> Result<Pose> {
    let d: PoseDoc = load_json(path)?;
    let pose = Pose {
        joint_rotations: d.joint_rotations.into_iter().map(Vec3::from).collect(),
        root_translation: Vec3::from(d.root_translation),
    };
    if !pose.is_finite() {
        return Err(LsvError::validation(path.display().to_string(), "non-finite pose"));
    }
    Ok(pose)
}

pub fn save_pose(path: &Path, pose: &Pose) -> Result<()> {
    save_json(
        path,
        &PoseDoc {
            joint_rotations: pose.joint_rotations.iter().map(|r| [r.x, r.y, r.z]).collect(),
            root_translation: [
                pose.root_translation.x,
                pose.root_translation.y,
                pose.root_translation.z,
            ],
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct ShapeDoc {
    coeffs: Vec<f64>,
}

pub fn load_shape(path: &Path) -> Result<Shape> {
    let d: ShapeDoc = load_json(path)?;
    Ok(Shape { coeffs: d.coeffs })
}

pub fn save_shape(path: &Path, shape: &Shape) -> Result<()> {
    save_json(
        path,
        &ShapeDoc {
            coeffs: shape.coeffs.clone(),
        },
    )
}

/// Layer schedule description written by `lsv layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub n: usize,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default)]
    pub thickness: Vec<f64>,
}

pub fn load_layer_config(path: &Path) -> Result<LayerConfig> {
    let cfg: LayerConfig = load_json(path)?;
    if cfg.n == 0 {
        return Err(LsvError::Schema {
            path: path.to_path_buf(),
            pointer: "/n".into(),
            message: "layer count must be at least 1".into(),
        });
    }
    Ok(cfg)
}

pub fn save_layer_config(path: &Path, cfg: &LayerConfig) -> Result<()> {
    save_json(path, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryDoc {
    image: PathBuf,
    camera: PathBuf,
    pose: PathBuf,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub camera: Camera,
    pub pose: Pose,
    pub shape: Option<Shape>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Loads a manifest (JSON array); relative paths resolve against the
/// manifest's directory. Referenced files must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let docs: Vec<EntryDoc> = load_json(path)?;
    let root = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::with_capacity(docs.len());
    for (i, d) in docs.into_iter().enumerate() {
        let image_path = root.join(&d.image);
        if !image_path.is_file() {
            return Err(LsvError::Schema {
                path: path.to_path_buf(),
                pointer: format!("/{i}/image"),
                message: format!("{} does not exist", image_path.display()),
            });
        }
        entries.push(ManifestEntry {
            image_path,
            camera: load_camera(&root.join(&d.camera))?,
            pose: load_pose(&root.join(&d.pose))?,
            shape: d.shape.map(|s| load_shape(&root.join(s))).transpose()?,
            split: d.split,
        });
    }
    let sizes = entries.iter().map(|e| (e.camera.width, e.camera.height));
    if let Some(first) = sizes.clone().next() {
        if let Some((i, s)) = sizes.enumerate().find(|(_, s)| *s != first) {
            return Err(LsvError::Schema {
                path: path.to_path_buf(),
                pointer: format!("/{i}/camera"),
                message: format!("image size {s:?} differs from {first:?}"),
            });
        }
    }
    Ok(DatasetManifest { entries })
}

/// Writes a manifest whose entries point at already-saved files. Paths are
/// written as given (usually relative to the manifest).
pub fn save_manifest(
    path: &Path,
    entries: &[(PathBuf, PathBuf, PathBuf, Option<PathBuf>, Split)],
) -> Result<()> {
    let docs: Vec<EntryDoc> = entries
        .iter()
        .map(|(image, camera, pose, shape, split)| EntryDoc {
            image: image.clone(),
            camera: camera.clone(),
            pose: pose.clone(),
            split: *split,
            shape: shape.clone(),
        })
        .collect();
    save_json(path, &docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_and_pose_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cam = Camera::look_at(
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            0.7,
            32,
            24,
        )
        .unwrap();
        let p = dir.path().join("cam.json");
        save_camera(&p, &cam).unwrap();
        assert_eq!(load_camera(&p).unwrap(), cam);

        let pose = Pose {
            joint_rotations: vec![Vec3::new(0.1, -0.2, 0.3), Vec3::new(1e-17, 0.0, 2.5)],
            root_translation: Vec3::new(0.0, 1.0 / 3.0, -7.0),
        };
        let p = dir.path().join("pose.json");
        save_pose(&p, &pose).unwrap();
        assert_eq!(load_pose(&p).unwrap(), pose);

        let shape = Shape { coeffs: vec![0.25, -1.5] };
        let p = dir.path().join("shape.json");
        save_shape(&p, &shape).unwrap();
        assert_eq!(load_shape(&p).unwrap(), shape);
    }

    #[test]
    fn missing_field_reports_pointer() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cam.json");
        std::fs::write(&p, r#"{"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 4, "height": 4,
            "rotation": [1,0,0,0,1,0,0,0,1], "near": 0.1, "far": 10}"#)
            .unwrap();
        let err = load_camera(&p).unwrap_err();
        assert!(err.to_string().contains("translation"), "{err}");

        let p = dir.path().join("pose.json");
        std::fs::write(&p, r#"{"joint_rotations": [[0,0,0], [0,"x",0]], "root_translation": [0,0,0]}"#)
            .unwrap();
        let err = load_pose(&p).unwrap_err();
        match err {
            LsvError::Schema { pointer, .. } => assert_eq!(pointer, "/joint_rotations/1/1"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_fields_are_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("shape.json");
        std::fs::write(&p, r#"{"coeffs": [1.0], "comment": "extra"}"#).unwrap();
        assert_eq!(load_shape(&p).unwrap().coeffs, vec![1.0]);
    }

    #[test]
    fn manifest_requires_existing_images() {
        let dir = tempfile::tempdir().unwrap();
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), 0.7, 8, 8).unwrap();
        save_camera(&dir.path().join("c.json"), &cam).unwrap();
        save_pose(&dir.path().join("p.json"), &Pose::zero(1)).unwrap();
        let m = dir.path().join("manifest.json");
        save_manifest(
            &m,
            &[("img.lsvimg".into(), "c.json".into(), "p.json".into(), None, Split::Train)],
        )
        .unwrap();
        let err = load_manifest(&m).unwrap_err();
        assert!(err.to_string().contains("/0/image"), "{err}");
        std::fs::write(dir.path().join("img.lsvimg"), b"").unwrap();
        let loaded = load_manifest(&m).unwrap();
        assert_eq!(loaded.entries.len(), 1);
        assert_eq!(loaded.split(Split::Test).count(), 0);
    }
}
