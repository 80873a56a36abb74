use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::{read_mask_pgm, write_mask_pgm, MaskImage};
use super::ply::{read_ply, write_ply};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PointCloud, RigidTransform};

/// Orthonormality tolerance applied to manifest matrices.
pub const MANIFEST_ROTATION_TOL: f64 = 1e-6;

/// Everything captured in one shooting posture: cloud, surface masks,
/// optional intrinsics and the camera → tool → world extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub cloud: PointCloud,
    pub masks: Vec<MaskImage>,
    pub intrinsics: Option<CameraIntrinsics>,
    pub tool_from_camera: RigidTransform,
    pub world_from_tool: RigidTransform,
    /// RNG / generator identifier for synthetic scenes.
    pub generator: Option<String>,
}

impl SceneBundle {
    pub fn new(cloud: PointCloud) -> Self {
        Self {
            cloud,
            masks: Vec::new(),
            intrinsics: None,
            tool_from_camera: RigidTransform::identity(),
            world_from_tool: RigidTransform::identity(),
            generator: None,
        }
    }

    /// `world_from_tool ∘ tool_from_camera`.
    pub fn world_from_camera(&self) -> RigidTransform {
        self.world_from_tool.compose(&self.tool_from_camera)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(first) = self.masks.first() {
            if let Some(bad) = self.masks.iter().find(|m| m.dims() != first.dims()) {
                return Err(Error::DimensionMismatch(format!(
                    "masks differ in size: {:?} vs {:?}",
                    first.dims(),
                    bad.dims()
                )));
            }
            if let Some(o) = self.cloud.organization() {
                if (o.cols, o.rows) != first.dims() {
                    return Err(Error::DimensionMismatch(format!(
                        "organized cloud is {}x{} (rows x cols) but masks are {}x{}",
                        o.rows,
                        o.cols,
                        first.height(),
                        first.width()
                    )));
                }
            }
        }
        if let Some(k) = &self.intrinsics {
            k.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    cloud: String,
    #[serde(default)]
    masks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intrinsics: Option<CameraIntrinsics>,
    tool_from_camera: [[f64; 4]; 4],
    world_from_tool: [[f64; 4]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<String>,
}

/// Paths written by [`write_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFiles {
    pub manifest: PathBuf,
    pub cloud: PathBuf,
    pub masks: Vec<PathBuf>,
}

/// Reads a JSON manifest; relative file names resolve against its directory.
pub fn read_scene(manifest_path: &Path) -> Result<SceneBundle> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let ctx = manifest_path.display().to_string();
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&ctx, e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let cloud = read_ply(&base.join(&m.cloud))?;
    let masks = m
        .masks
        .iter()
        .map(|p| read_mask_pgm(&base.join(p)))
        .collect::<Result<Vec<_>>>()?;
    let transform = |rows: &[[f64; 4]; 4], name: &str| {
        RigidTransform::from_rows(rows, MANIFEST_ROTATION_TOL).map_err(|e| match e {
            Error::InvalidTransform(msg) => Error::InvalidTransform(format!("{name}: {msg}")),
            other => other,
        })
    };
    let bundle = SceneBundle {
        cloud,
        masks,
        intrinsics: m.intrinsics,
        tool_from_camera: transform(&m.tool_from_camera, "tool_from_camera")?,
        world_from_tool: transform(&m.world_from_tool, "world_from_tool")?,
        generator: m.generator,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Optional `truth` entry of a manifest, resolved against its directory.
pub fn manifest_truth_path(manifest_path: &Path) -> Result<Option<PathBuf>> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(manifest_path.display().to_string(), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(m.truth.map(|t| base.join(t)))
}

/// Writes `scene.json`, `cloud.ply` and `mask_<i>.pgm` into `dir`.
/// `truth` is recorded verbatim as the manifest's truth file name.
pub fn write_scene(bundle: &SceneBundle, dir: &Path, truth: Option<&str>) -> Result<SceneFiles> {
    bundle.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cloud_name = "cloud.ply".to_string();
    let mask_names: Vec<String> = (0..bundle.masks.len()).map(|i| format!("mask_{i}.pgm")).collect();
    write_ply(&bundle.cloud, &dir.join(&cloud_name))?;
    for (mask, name) in bundle.masks.iter().zip(&mask_names) {
        write_mask_pgm(mask, &dir.join(name))?;
    }
    let manifest = Manifest {
        cloud: cloud_name.clone(),
        masks: mask_names.clone(),
        intrinsics: bundle.intrinsics,
        tool_from_camera: bundle.tool_from_camera.to_rows(),
        world_from_tool: bundle.world_from_tool.to_rows(),
        generator: bundle.generator.clone(),
        truth: truth.map(str::to_string),
    };
    let manifest_path = dir.join("scene.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(SceneFiles {
        manifest: manifest_path,
        cloud: dir.join(cloud_name),
        masks: mask_names.iter().map(|n| dir.join(n)).collect(),
    })
}
