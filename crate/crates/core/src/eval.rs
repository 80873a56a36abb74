//! Accuracy metrics against analytic ground truth, the voxel-size sweep and
//! the crop ablation.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::io::SceneBundle;
use crate::path::{SeamKind, WeldPath};
use crate::pipeline::{run_pipeline, PipelineConfig, PointCounts, RunReport, StageTimings};
use crate::synth::{GroundTruth, SeamCurve};

/// A detected seam is assigned to a truth curve only when every waypoint lies
/// within this distance of it, mm.
pub const MATCH_RADIUS_MM: f64 = 5.0;

/// Root mean square of the waypoint distances to `curve`.
pub fn rmse(path: &[Point3], curve: &SeamCurve) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::DegenerateGeometry("rmse of an empty path".into()));
    }
    let sum: f64 = path.iter().map(|p| curve.distance(p).powi(2)).sum();
    Ok((sum / path.len() as f64).sqrt())
}

/// Largest waypoint distance to `curve`.
pub fn max_error(path: &[Point3], curve: &SeamCurve) -> f64 {
    path.iter().map(|p| curve.distance(p)).fold(0.0, f64::max)
}

/// RMSE against the nearest truth curve, failing when it is farther than
/// [`MATCH_RADIUS_MM`].
pub fn rmse_to_truth(path: &[Point3], truth: &GroundTruth) -> Result<f64> {
    let best = truth
        .seams
        .iter()
        .map(|c| (max_error(path, c), c))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((h, c)) if h <= MATCH_RADIUS_MM => rmse(path, c),
        _ => Err(Error::UnmatchedSeam {
            radius_mm: MATCH_RADIUS_MM,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamScore {
    /// Index into the detected paths.
    pub path: usize,
    /// Index into the truth seams.
    pub truth: usize,
    pub kind: SeamKind,
    pub truth_kind: SeamKind,
    pub waypoints: usize,
    pub rmse_mm: f64,
    pub max_error_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub seams: Vec<SeamScore>,
    pub matched: usize,
    pub missed: usize,
    pub spurious: usize,
    /// Mean of the per-seam RMSE values; NaN with no match.
    pub mean_rmse_mm: f64,
    /// RMSE over the waypoints of all matched seams; NaN with no match.
    pub pooled_rmse_mm: f64,
    pub max_error_mm: f64,
    pub points: PointCounts,
    pub timings_ms: StageTimings,
}

/// One-to-one greedy assignment of paths to truth curves by directed
/// Hausdorff distance, closest pairs first.
pub fn evaluate(paths: &[WeldPath], truth: &GroundTruth, run: Option<&RunReport>) -> EvalReport {
    let positions: Vec<Vec<Point3>> = paths.iter().map(|p| p.positions()).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, pos) in positions.iter().enumerate() {
        if pos.is_empty() {
            continue;
        }
        for (j, c) in truth.seams.iter().enumerate() {
            let h = max_error(pos, c);
            if h <= MATCH_RADIUS_MM {
                pairs.push((h, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut path_used = vec![false; paths.len()];
    let mut truth_used = vec![false; truth.seams.len()];
    let mut seams = Vec::new();
    for (h, i, j) in pairs {
        if path_used[i] || truth_used[j] {
            continue;
        }
        path_used[i] = true;
        truth_used[j] = true;
        seams.push(SeamScore {
            path: i,
            truth: j,
            kind: paths[i].kind,
            truth_kind: truth.seams[j].kind(),
            waypoints: positions[i].len(),
            rmse_mm: rmse(&positions[i], &truth.seams[j]).expect("non-empty path"),
            max_error_mm: h,
        });
    }
    seams.sort_by_key(|s| s.truth);
    let matched = seams.len();
    let (mut sq, mut n) = (0.0, 0usize);
    for s in &seams {
        sq += s.rmse_mm.powi(2) * s.waypoints as f64;
        n += s.waypoints;
    }
    let nan_if_empty = |v: f64| if matched == 0 { f64::NAN } else { v };
    EvalReport {
        matched,
        missed: truth.seams.len() - matched,
        spurious: paths.len() - matched,
        mean_rmse_mm: nan_if_empty(seams.iter().map(|s| s.rmse_mm).sum::<f64>() / matched.max(1) as f64),
        pooled_rmse_mm: nan_if_empty((sq / n.max(1) as f64).sqrt()),
        max_error_mm: nan_if_empty(seams.iter().map(|s| s.max_error_mm).fold(0.0, f64::max)),
        seams,
        points: run.map(|r| r.points).unwrap_or_default(),
        timings_ms: run.map(|r| r.timings_ms).unwrap_or_default(),
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        json_nan_as_null(&serde_json::to_value(self).expect("report serializes"))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,truth,kind,truth_kind,waypoints,rmse_mm,max_error_mm\n");
        for r in &self.seams {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.6}",
                r.path,
                r.truth,
                kind_name(r.kind),
                kind_name(r.truth_kind),
                r.waypoints,
                r.rmse_mm,
                r.max_error_mm
            );
        }
        s
    }
}

fn kind_name(k: SeamKind) -> &'static str {
    match k {
        SeamKind::Linear => "linear",
        SeamKind::Curved => "curved",
    }
}

fn json_nan_as_null(v: &serde_json::Value) -> String {
    // serde_json already writes non-finite floats as null
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub voxel_mm: f64,
    /// Points entering region growing.
    pub points: usize,
    pub matched: usize,
    pub missed: usize,
    pub spurious: usize,
    pub rmse_mm: f64,
    pub mean_rmse_mm: f64,
    pub max_error_mm: f64,
    pub time_ms: f64,
    pub error: Option<String>,
}

/// Full pipeline per voxel size, rows in the given order. Pipeline errors
/// mark the row as failed.
pub fn run_sweep(scene: &SceneBundle, truth: &GroundTruth, config: &PipelineConfig, sizes: &[f64]) -> Vec<SweepRow> {
    sizes
        .iter()
        .map(|&r| {
            let cfg = PipelineConfig {
                voxel_mm: r,
                ..config.clone()
            };
            let failed = |e: String, points| SweepRow {
                voxel_mm: r,
                points,
                matched: 0,
                missed: truth.seams.len(),
                spurious: 0,
                rmse_mm: f64::NAN,
                mean_rmse_mm: f64::NAN,
                max_error_mm: f64::NAN,
                time_ms: f64::NAN,
                error: Some(e),
            };
            match run_pipeline(scene, &cfg) {
                Ok(run) => {
                    let ev = evaluate(&run.paths, truth, Some(&run.report));
                    SweepRow {
                        voxel_mm: r,
                        points: run.report.points.after_downsample,
                        matched: ev.matched,
                        missed: ev.missed,
                        spurious: ev.spurious,
                        rmse_mm: ev.pooled_rmse_mm,
                        mean_rmse_mm: ev.mean_rmse_mm,
                        max_error_mm: ev.max_error_mm,
                        time_ms: run.report.timings_ms.total,
                        error: run.status().err().map(|e| e.to_string()),
                    }
                }
                Err(e) => failed(e.to_string(), 0),
            }
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("voxel_mm,points,matched,missed,spurious,rmse_mm,mean_rmse_mm,max_error_mm,time_ms,error\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.3},{}",
            r.voxel_mm,
            r.points,
            r.matched,
            r.missed,
            r.spurious,
            r.rmse_mm,
            r.mean_rmse_mm,
            r.max_error_mm,
            r.time_ms,
            r.error.as_deref().unwrap_or("")
        );
    }
    s
}

pub fn sweep_json(rows: &[SweepRow]) -> String {
    json_nan_as_null(&serde_json::to_value(rows).expect("rows serialize"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ablation {
    pub cropped: EvalReport,
    pub uncropped: EvalReport,
    pub repeats: usize,
}

impl Ablation {
    /// Points entering region growing, cropped over uncropped.
    pub fn point_ratio(&self) -> f64 {
        self.cropped.points.after_downsample as f64 / self.uncropped.points.after_downsample as f64
    }

    pub fn time_ratio(&self) -> f64 {
        self.cropped.timings_ms.total / self.uncropped.timings_ms.total
    }

    pub fn to_json(&self) -> String {
        json_nan_as_null(&serde_json::to_value(self).expect("ablation serializes"))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,points,seams,mean_rmse_mm,total_ms\n");
        for (arm, r) in [("cropped", &self.cropped), ("uncropped", &self.uncropped)] {
            let _ = writeln!(
                s,
                "{arm},{},{},{:.6},{:.3}",
                r.points.after_downsample, r.matched, r.mean_rmse_mm, r.timings_ms.total
            );
        }
        s
    }
}

/// Runs the pipeline with and without cropping under otherwise identical
/// parameters. Each arm runs `repeats` times; the fastest run's timings are
/// reported.
pub fn run_ablation(scene: &SceneBundle, truth: &GroundTruth, config: &PipelineConfig, repeats: usize) -> Result<Ablation> {
    let arm = |crop: bool| -> Result<EvalReport> {
        let cfg = PipelineConfig {
            crop,
            ..config.clone()
        };
        let mut best: Option<(RunReport, Vec<WeldPath>)> = None;
        for _ in 0..repeats.max(1) {
            let run = run_pipeline(scene, &cfg)?;
            if best.as_ref().is_none_or(|b| run.report.timings_ms.total < b.0.timings_ms.total) {
                best = Some((run.report, run.paths));
            }
        }
        let (report, paths) = best.expect("at least one run");
        Ok(evaluate(&paths, truth, Some(&report)))
    };
    Ok(Ablation {
        cropped: arm(true)?,
        uncropped: arm(false)?,
        repeats: repeats.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrientationWpr, RigidTransform, Vector3};
    use crate::path::Waypoint;

    fn line() -> SeamCurve {
        SeamCurve::Linear {
            start: [0.0, 0.0, 0.0],
            end: [100.0, 0.0, 0.0],
        }
    }

    fn path(points: &[Point3]) -> WeldPath {
        WeldPath {
            kind: SeamKind::Linear,
            residual_mm: 0.0,
            waypoints: points
                .iter()
                .map(|p| Waypoint {
                    position: *p,
                    orientation: OrientationWpr::new(0.0, 0.0, 0.0),
                })
                .collect(),
        }
    }

    #[test]
    fn rmse_examples() {
        let on: Vec<Point3> = (0..=10).map(|i| Point3::new(i as f64 * 10.0, 0.0, 0.0)).collect();
        assert_eq!(rmse(&on, &line()).unwrap(), 0.0);
        let c = SeamCurve::Linear {
            start: [0.0, 0.0, 0.0],
            end: [0.0, 0.0, 0.0],
        };
        assert_eq!(rmse(&[Point3::new(1.0, 0.0, 0.0)], &c).unwrap(), 1.0);
        // offsets (1,0,0), (0,2,0), (0,0,2) from single-point curves
        let mk = |p: [f64; 3]| SeamCurve::Linear { start: p, end: p };
        let (a, b, c) = (mk([0.0; 3]), mk([5.0, 0.0, 0.0]), mk([9.0, 0.0, 0.0]));
        let t = GroundTruth {
            seams: vec![a, b, c],
            ..Default::default()
        };
        let pts = [Point3::new(1.0, 0.0, 0.0), Point3::new(5.0, 2.0, 0.0), Point3::new(9.0, 0.0, 2.0)];
        let sq: f64 = pts.iter().map(|p| crate::synth::point_to_seam_distance(p, &t).powi(2)).sum();
        assert!(((sq / 3.0).sqrt() - 3f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &line()).is_err());
    }

    #[test]
    fn unmatched_path_is_an_error() {
        let t = GroundTruth {
            seams: vec![line()],
            ..Default::default()
        };
        let far = [Point3::new(50.0, 6.0, 0.0)];
        assert!(matches!(rmse_to_truth(&far, &t), Err(Error::UnmatchedSeam { .. })));
        assert!((rmse_to_truth(&[Point3::new(50.0, 4.0, 0.0)], &t).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn matching_is_one_to_one() {
        let truth = GroundTruth {
            seams: vec![
                line(),
                SeamCurve::Linear {
                    start: [0.0, 50.0, 0.0],
                    end: [100.0, 50.0, 0.0],
                },
            ],
            ..Default::default()
        };
        let near = |y: f64| path(&[Point3::new(10.0, y, 0.0), Point3::new(90.0, y, 0.0)]);
        // two paths near the first line compete for it; one far away
        let paths = vec![near(0.5), near(0.2), near(200.0)];
        let r = evaluate(&paths, &truth, None);
        assert_eq!((r.matched, r.missed, r.spurious), (1, 1, 2));
        assert_eq!(r.seams[0].path, 1);
        assert_eq!(r.matched + r.missed, truth.seams.len());
        assert_eq!(r.matched + r.spurious, paths.len());
        assert!(r.seams.iter().all(|s| s.rmse_mm <= s.max_error_mm));
    }

    #[test]
    fn rmse_is_rigid_invariant() {
        let t = RigidTransform::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), 0.7)
            .compose(&RigidTransform::from_translation(Vector3::new(5.0, -3.0, 2.0)));
        let curve = SeamCurve::Curved {
            origin: [0.0, 0.0, 0.0],
            axis: [0.0, 1.0, 0.0],
            amp_dir: [1.0, 0.0, 0.0],
            amplitude: 10.0,
            wavelength: 60.0,
            length: 60.0,
            phase: 0.0,
        };
        let pts: Vec<Point3> = (0..20).map(|i| Point3::new(0.3 * (i % 3) as f64, i as f64 * 3.0, 0.2)).collect();
        let moved: Vec<Point3> = pts.iter().map(|p| t.apply(p)).collect();
        let a = rmse(&pts, &curve).unwrap();
        let b = rmse(&moved, &curve.transformed(&t)).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
