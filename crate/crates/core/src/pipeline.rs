//! End-to-end seam extraction for one scene.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::crop::{build_seam_roi, crop_cloud};
use crate::edges::{refine_edges, snap_to_fold, EdgeParams, SnappedPoint};
use crate::error::{Error, Result};
use crate::features::estimate_features;
use crate::geometry::{Point3, PointCloud, Vector3};
use crate::io::SceneBundle;
use crate::kdtree::KdTree;
use crate::path::{compute_torch_pose, fit_seam, reverse_path, sample_with_tangents, to_world, FitParams, SeamKind, Waypoint, WeldPath};
use crate::preprocess::{passthrough_filter, voxel_downsample, AxisBox};
use crate::segment::{segment, GrowthParams};

/// Every tunable of the pipeline. Unknown keys are rejected; missing keys
/// take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Voxel edge length, mm.
    pub voxel_mm: f64,
    /// Camera-frame pass-through box.
    pub passthrough: Option<AxisBox>,
    pub crop: bool,
    pub dilate_px: usize,
    /// Neighbourhood size for normals and curvature.
    pub knn: usize,
    pub growth: GrowthParams,
    pub edges: EdgeParams,
    pub fit: FitParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            voxel_mm: 3.0,
            passthrough: None,
            crop: true,
            dilate_px: 10,
            knn: 30,
            growth: GrowthParams::default(),
            edges: EdgeParams::default(),
            fit: FitParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::parse("pipeline config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            e => e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_mm > 0.0 && self.voxel_mm.is_finite()) {
            return Err(Error::InvalidConfig(format!("voxel_mm must be > 0, got {}", self.voxel_mm)));
        }
        if self.knn < 3 {
            return Err(Error::InvalidConfig(format!("knn must be >= 3, got {}", self.knn)));
        }
        if let Some(b) = &self.passthrough {
            b.validate()?;
        }
        self.growth.validate()?;
        self.edges.validate()?;
        self.fit.validate()
    }
}

/// Point counts after each cloud-reducing stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PointCounts {
    pub input: usize,
    pub after_crop: usize,
    pub after_passthrough: usize,
    /// Points entering feature estimation and region growing.
    pub after_downsample: usize,
}

/// Wall-clock per stage, milliseconds. File I/O is excluded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub crop: f64,
    pub passthrough: f64,
    pub downsample: f64,
    pub kdtree: f64,
    pub features: f64,
    pub grow: f64,
    pub refine: f64,
    pub fit: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamReport {
    pub points: usize,
    pub segments: (u32, u32),
    pub extent_mm: f64,
    pub kind: SeamKind,
    pub rms_mm: f64,
    pub waypoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedSeam {
    pub points: usize,
    pub segments: (u32, u32),
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunReport {
    pub crop_applied: bool,
    pub roi_pairs: Vec<(usize, usize)>,
    pub points: PointCounts,
    pub segments: usize,
    pub edge_candidates: usize,
    /// In the order of the emitted paths.
    pub seams: Vec<SeamReport>,
    pub rejected: Vec<RejectedSeam>,
    /// Stage after which too few points were left to continue.
    pub stopped_after: Option<String>,
    pub timings_ms: StageTimings,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    /// World-frame paths in canonical order.
    pub paths: Vec<WeldPath>,
    pub report: RunReport,
}

impl PipelineRun {
    /// `EmptyCloud` when a stage left nothing, `NoSeamsFound` when no path
    /// was produced.
    pub fn status(&self) -> Result<()> {
        if self.report.stopped_after.is_some() && self.report.points.after_downsample == 0 {
            return Err(Error::EmptyCloud);
        }
        if self.paths.is_empty() {
            return Err(Error::NoSeamsFound);
        }
        Ok(())
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run_pipeline(scene: &SceneBundle, config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    scene.validate()?;
    let start = Instant::now();
    let mut report = RunReport::default();
    report.points.input = scene.cloud.valid_count();

    let t = Instant::now();
    let cloud = if config.crop && scene.masks.len() >= 2 {
        let roi = build_seam_roi(&scene.masks, config.dilate_px)?;
        report.crop_applied = true;
        report.roi_pairs = roi.pairs.clone();
        crop_cloud(&scene.cloud, &roi, scene.intrinsics.as_ref())?
    } else {
        if config.crop {
            log::warn!("crop enabled but scene has {} mask(s); skipping", scene.masks.len());
        }
        scene.cloud.clone()
    };
    report.points.after_crop = cloud.valid_count();
    report.timings_ms.crop = ms(t);

    let t = Instant::now();
    let cloud = match &config.passthrough {
        Some(b) => passthrough_filter(&cloud, b),
        None => PointCloud::from_points(cloud.valid_points().copied().collect())?,
    };
    report.points.after_passthrough = cloud.len();
    report.timings_ms.passthrough = ms(t);

    let finish = |mut report: RunReport, stage: &str, paths: Vec<WeldPath>| {
        if !stage.is_empty() {
            report.stopped_after = Some(stage.to_string());
        }
        report.timings_ms.total = ms(start);
        log::info!("timings (ms): {:?}", report.timings_ms);
        Ok(PipelineRun { paths, report })
    };
    if cloud.is_empty() {
        let stage = if report.crop_applied && report.points.after_crop == 0 { "crop" } else { "passthrough" };
        return finish(report, stage, vec![]);
    }

    let t = Instant::now();
    let cloud = voxel_downsample(&cloud, config.voxel_mm)?;
    report.points.after_downsample = cloud.len();
    report.timings_ms.downsample = ms(t);
    log::info!(
        "points: input {}, crop {}, passthrough {}, downsample {}",
        report.points.input,
        report.points.after_crop,
        report.points.after_passthrough,
        report.points.after_downsample
    );
    if cloud.len() < config.knn.max(config.growth.k_grow).max(config.edges.k) {
        return finish(report, "downsample", vec![]);
    }

    let t = Instant::now();
    let tree = KdTree::build(&cloud)?;
    report.timings_ms.kdtree = ms(t);

    let t = Instant::now();
    let cloud = estimate_features(&cloud, &tree, config.knn)?;
    report.timings_ms.features = ms(t);

    let t = Instant::now();
    let seg = segment(&cloud, &tree, &config.growth)?;
    report.segments = seg.segments.len();
    report.edge_candidates = seg.edge_count();
    report.timings_ms.grow = ms(t);

    let t = Instant::now();
    let seams = refine_edges(&seg, &cloud, &tree, &config.edges, config.edges.link_factor * config.voxel_mm)?;
    report.timings_ms.refine = ms(t);

    let t = Instant::now();
    let mut out: Vec<(WeldPath, SeamReport)> = Vec::new();
    for seam in &seams {
        let mut snapped = snap_to_fold(seam, &seg, &cloud, &tree, config.edges.snap_radius_mm);
        if snapped.iter().filter(|s| s.snapped).count() >= config.edges.min_seam_points {
            snapped.retain(|s| s.snapped);
        }
        match build_path(&snapped, &config.fit) {
            Ok(path) => {
                let world = canonical_direction(to_world(&path, &scene.tool_from_camera, &scene.world_from_tool));
                out.push((
                    world,
                    SeamReport {
                        points: seam.points.len(),
                        segments: seam.segments,
                        extent_mm: seam.extent_mm,
                        kind: path.kind,
                        rms_mm: path.residual_mm,
                        waypoints: path.waypoints.len(),
                    },
                ));
            }
            Err(e) => {
                log::warn!("seam between segments {:?} rejected: {e}", seam.segments);
                report.rejected.push(RejectedSeam {
                    points: seam.points.len(),
                    segments: seam.segments,
                    reason: e.to_string(),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        let (p, q) = (a.0.waypoints[0].position, b.0.waypoints[0].position);
        p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)).then(p.z.total_cmp(&q.z))
    });
    report.timings_ms.fit = ms(t);
    let (paths, seam_reports): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    report.seams = seam_reports;
    finish(report, "", paths)
}

/// Number of snapped points averaged into each waypoint's flank normals.
const NORMAL_SUPPORT: usize = 10;

/// Camera-frame path through the snapped seam points.
fn build_path(snapped: &[SnappedPoint], fit: &FitParams) -> Result<WeldPath> {
    let positions: Vec<Point3> = snapped.iter().map(|s| s.position).collect();
    let hint = snapped
        .iter()
        .fold(Vector3::zeros(), |acc, s| acc + s.normal_a + s.normal_b)
        .try_normalize(1e-12);
    let seam = fit_seam(&positions, hint.as_ref(), fit)?;
    let tree = KdTree::from_points(&positions)?;
    let mut waypoints = Vec::new();
    for (p, tangent) in sample_with_tangents(&seam, fit.step_mm)? {
        let (mut na, mut nb) = (Vector3::zeros(), Vector3::zeros());
        for nbr in tree.knn(&p, NORMAL_SUPPORT) {
            na += snapped[nbr.index].normal_a;
            nb += snapped[nbr.index].normal_b;
        }
        let unit = |v: Vector3| v.try_normalize(1e-12).ok_or_else(|| Error::DegenerateGeometry("flank normals cancel".into()));
        let pose = compute_torch_pose(&tangent, &unit(na)?, &unit(nb)?)?;
        waypoints.push(Waypoint {
            position: p,
            orientation: pose.orientation,
        });
    }
    Ok(WeldPath {
        kind: seam.kind,
        residual_mm: seam.rms_mm,
        waypoints,
    })
}

/// Orients a path so that its dominant world axis of travel increases.
fn canonical_direction(path: WeldPath) -> WeldPath {
    let (Some(a), Some(b)) = (path.waypoints.first(), path.waypoints.last()) else {
        return path;
    };
    let d = b.position - a.position;
    let axis = d.iamax();
    if d[axis] < 0.0 {
        reverse_path(&path)
    } else {
        path
    }
}
