use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientationWpr, Point3};
use crate::path::{SeamKind, Waypoint, WeldPath};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    seams: Vec<SeamDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeamDoc {
    #[serde(rename = "type")]
    kind: SeamKind,
    residual_mm: f64,
    waypoints: Vec<WaypointDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointDoc {
    x: f64,
    y: f64,
    z: f64,
    w: f64,
    p: f64,
    r: f64,
}

/// Rounds to 6 decimals; `-0` prints as `0`.
fn r6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Pretty JSON `{"seams": [...]}` with values rounded to 6 decimals.
pub fn weld_path_json(paths: &[WeldPath]) -> String {
    let doc = Doc {
        seams: paths
            .iter()
            .map(|s| SeamDoc {
                kind: s.kind,
                residual_mm: r6(s.residual_mm),
                waypoints: s
                    .waypoints
                    .iter()
                    .map(|w| WaypointDoc {
                        x: r6(w.position.x),
                        y: r6(w.position.y),
                        z: r6(w.position.z),
                        w: r6(w.orientation.w),
                        p: r6(w.orientation.p),
                        r: r6(w.orientation.r),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("weld path serializes") + "\n"
}

pub fn write_weld_path(paths: &[WeldPath], path: &Path) -> Result<()> {
    std::fs::write(path, weld_path_json(paths)).map_err(|e| Error::io(path, e))
}

pub fn parse_weld_path(text: &str, ctx: &str) -> Result<Vec<WeldPath>> {
    let doc: Doc = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
    Ok(doc
        .seams
        .into_iter()
        .map(|s| WeldPath {
            kind: s.kind,
            residual_mm: s.residual_mm,
            waypoints: s
                .waypoints
                .into_iter()
                .map(|w| Waypoint {
                    position: Point3::new(w.x, w.y, w.z),
                    orientation: OrientationWpr { w: w.w, p: w.p, r: w.r },
                })
                .collect(),
        })
        .collect())
}

pub fn read_weld_path(path: &Path) -> Result<Vec<WeldPath>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weld_path(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_list() {
        let v: serde_json::Value = serde_json::from_str(&weld_path_json(&[])).unwrap();
        assert_eq!(v, serde_json::json!({"seams": []}));
    }

    #[test]
    fn field_order_is_declared_order() {
        let wp = |x: f64| Waypoint {
            position: Point3::new(x, 2.0, 3.0),
            orientation: OrientationWpr::new(10.0, -20.0, 30.0),
        };
        let path = WeldPath {
            kind: SeamKind::Linear,
            residual_mm: 0.25,
            waypoints: vec![wp(1.0), wp(3.0)],
        };
        let text = weld_path_json(&[path]);
        let compact: String = text.split_whitespace().collect();
        assert!(compact.contains(r#"{"type":"linear","residual_mm":0.25,"waypoints":[{"x":1.0,"y":2.0,"z":3.0,"w":10.0,"p":-20.0,"r":30.0},"#));
        assert_eq!(parse_weld_path(&text, "t").unwrap()[0].waypoints.len(), 2);
    }

    #[test]
    fn round_trip_to_six_decimals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths: Vec<WeldPath> = (0..3)
            .map(|i| WeldPath {
                kind: if i == 1 { SeamKind::Curved } else { SeamKind::Linear },
                residual_mm: rng.random_range(0.0..1.0),
                waypoints: (0..50)
                    .map(|_| Waypoint {
                        position: Point3::new(rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0), rng.random_range(0.0..900.0)),
                        orientation: OrientationWpr::new(rng.random_range(-180.0..180.0), rng.random_range(-89.0..89.0), rng.random_range(-180.0..180.0)),
                    })
                    .collect(),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("p.json");
        write_weld_path(&paths, &file).unwrap();
        let back = read_weld_path(&file).unwrap();
        for (a, b) in paths.iter().zip(&back) {
            assert_eq!(a.kind, b.kind);
            for (u, v) in a.waypoints.iter().zip(&b.waypoints) {
                assert!((u.position - v.position).amax() <= 5e-7);
                assert!((u.orientation.w - v.orientation.w).abs() <= 5e-7);
                assert!((u.orientation.p - v.orientation.p).abs() <= 5e-7);
                assert!((u.orientation.r - v.orientation.r).abs() <= 5e-7);
            }
        }
        assert!(parse_weld_path("{\"seams\":[{\"type\":\"wavy\"}]}", "t").is_err());
    }
}
