//! File formats: ASCII PLY clouds, PGM (P5) masks, JSON scene manifests and
//! JSON weld paths.

mod pgm;
mod ply;
mod scene;
mod weld_path;

pub use pgm::{read_mask_pgm, write_mask_pgm, MaskImage};
pub use ply::{parse_ply, read_ply, write_ply, write_ply_string};
pub use scene::{manifest_truth_path, read_scene, write_scene, SceneBundle, SceneFiles, MANIFEST_ROTATION_TOL};
pub use weld_path::{parse_weld_path, read_weld_path, weld_path_json, write_weld_path};
