//! Edge refinement: turn edge candidates into individual seam point sets.
//!
//! A candidate survives when its neighbourhood holds at least `m_min` points
//! of each of two surface segments. Survivors are grouped by their dominant
//! segment pair and split into connected components by radius linking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{covariance, sorted_eigen};
use crate::geometry::{Point3, PointCloud, Vector3};
use crate::kdtree::KdTree;
use crate::segment::SegmentationResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeParams {
    /// Neighbourhood size for the two-surface test.
    pub k: usize,
    pub m_min: usize,
    /// Component linking radius as a multiple of the voxel size.
    pub link_factor: f64,
    pub min_seam_points: usize,
    /// Neighbourhood radius for fitting the flanks during fold snapping, mm.
    pub snap_radius_mm: f64,
    /// Keep only concave (valley) edges; convex ridges are not weldable.
    pub concave_only: bool,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            k: 30,
            m_min: 3,
            link_factor: 2.5,
            min_seam_points: 10,
            snap_radius_mm: 12.0,
            concave_only: true,
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 3 || self.m_min == 0 || !(self.link_factor > 0.0) || !(self.snap_radius_mm > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid edge parameters {self:?}")));
        }
        Ok(())
    }
}

/// Indices of one seam's points and its two flanking segments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamPointSet {
    pub points: Vec<usize>,
    pub segments: (u32, u32),
    /// Diagonal of the axis-aligned bounding box, mm.
    pub extent_mm: f64,
}

struct Survivor {
    index: usize,
    pair: (u32, u32),
}

/// Refined seams, ordered by segment pair and then by first point index.
/// An empty result is not an error here; the pipeline maps it to
/// [`Error::NoSeamsFound`].
pub fn refine_edges(
    seg: &SegmentationResult,
    cloud: &PointCloud,
    tree: &KdTree,
    params: &EdgeParams,
    link_r: f64,
) -> Result<Vec<SeamPointSet>> {
    params.validate()?;
    let normals = cloud.normals().ok_or(Error::MissingFeatures)?;
    let pts = cloud.points();

    let candidates: Vec<usize> = (0..cloud.len()).filter(|&i| seg.edge_candidates[i]).collect();
    let survivors: Vec<Survivor> = candidates
        .iter()
        .filter_map(|&i| {
            let nbrs = tree.knn(&pts[i], params.k);
            let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
            for nb in &nbrs {
                let l = seg.labels[nb.index];
                if l != 0 {
                    *counts.entry(l).or_default() += 1;
                }
            }
            let mut sides: Vec<(u32, usize)> = counts.into_iter().filter(|(_, c)| *c >= params.m_min).collect();
            if sides.len() < 2 {
                return None;
            }
            sides.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let (a, b) = (sides[0].0.min(sides[1].0), sides[0].0.max(sides[1].0));
            if params.concave_only && !is_concave(&nbrs, seg, pts, normals, a, b) {
                return None;
            }
            Some(Survivor { index: i, pair: (a, b) })
        })
        .collect();

    let mut groups: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for s in &survivors {
        groups.entry(s.pair).or_default().push(s.index);
    }
    let mut seams = Vec::new();
    for (pair, members) in groups {
        for comp in components(&members, pts, link_r) {
            if comp.len() < params.min_seam_points {
                continue;
            }
            let mut lo = pts[comp[0]];
            let mut hi = lo;
            for &i in &comp {
                lo = lo.inf(&pts[i]);
                hi = hi.sup(&pts[i]);
            }
            seams.push(SeamPointSet {
                points: comp,
                segments: pair,
                extent_mm: (hi - lo).norm(),
            });
        }
    }
    log::debug!(
        "refinement: {} candidates, {} survivors, {} seams",
        candidates.len(),
        survivors.len(),
        seams.len()
    );
    Ok(seams)
}

/// Each side's points lie on the normal side of the other side's points.
fn is_concave(
    nbrs: &[crate::kdtree::Neighbor],
    seg: &SegmentationResult,
    pts: &[Point3],
    normals: &[Vector3],
    a: u32,
    b: u32,
) -> bool {
    let side = |id: u32| {
        let mut c = Vector3::zeros();
        let mut n = Vector3::zeros();
        let mut k = 0.0;
        for nb in nbrs.iter().filter(|nb| seg.labels[nb.index] == id) {
            c += pts[nb.index].coords;
            n += normals[nb.index];
            k += 1.0;
        }
        (c / k, n / k)
    };
    let (ca, na) = side(a);
    let (cb, nb) = side(b);
    na.dot(&(cb - ca)) > 0.0 && nb.dot(&(ca - cb)) > 0.0
}

/// Connected components under `|p − q| ≤ link_r`, each sorted by index.
fn components(members: &[usize], pts: &[Point3], link_r: f64) -> Vec<Vec<usize>> {
    let local: Vec<Point3> = members.iter().map(|&i| pts[i]).collect();
    let tree = KdTree::from_points(&local).expect("group is non-empty");
    let mut comp = vec![usize::MAX; members.len()];
    let mut out = Vec::new();
    for start in 0..members.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        comp[start] = id;
        let mut stack = vec![start];
        let mut found = vec![members[start]];
        while let Some(cur) = stack.pop() {
            for nb in tree.radius_search(&local[cur], link_r) {
                if comp[nb.index] == usize::MAX {
                    comp[nb.index] = id;
                    stack.push(nb.index);
                    found.push(members[nb.index]);
                }
            }
        }
        found.sort_unstable();
        out.push(found);
    }
    out
}

/// A seam point moved onto the local intersection of its flanking surfaces,
/// with the two surface normals there (facing the camera).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnappedPoint {
    pub position: Point3,
    pub normal_a: Vector3,
    pub normal_b: Vector3,
    /// False when the flanks could not be fitted and the point kept its
    /// original position.
    pub snapped: bool,
}

const MIN_FOLD_ANGLE_DEG: f64 = 5.0;
const MIN_SIDE_POINTS: usize = 8;
/// Smallest in-plane spread of a side, relative to the snapping radius.
const MIN_SIDE_SPREAD: f64 = 0.1;

/// Projects every seam point onto the intersection line of planes fitted to
/// the members of each flanking segment within `radius`. Points whose flanks
/// cannot be fitted keep their position and use the segments' mean normals.
pub fn snap_to_fold(
    seam: &SeamPointSet,
    seg: &SegmentationResult,
    cloud: &PointCloud,
    tree: &KdTree,
    radius: f64,
) -> Vec<SnappedPoint> {
    let pts = cloud.points();
    let (a, b) = seam.segments;
    let mean_normal = |id: u32| seg.segment(id).map(|s| s.mean_normal).unwrap_or_else(Vector3::z);
    seam.points
        .iter()
        .map(|&i| {
            let p = pts[i];
            let nbrs = tree.radius_search(&p, radius);
            let side = |id: u32| -> Vec<Point3> {
                nbrs.iter().filter(|nb| seg.labels[nb.index] == id).map(|nb| pts[nb.index]).collect()
            };
            let fallback = SnappedPoint {
                position: p,
                normal_a: mean_normal(a),
                normal_b: mean_normal(b),
                snapped: false,
            };
            let (Some((ca, na)), Some((cb, nb))) = (local_plane(&side(a), &p, radius), local_plane(&side(b), &p, radius)) else {
                return fallback;
            };
            let dir = na.cross(&nb);
            if dir.norm() < MIN_FOLD_ANGLE_DEG.to_radians().sin() {
                return fallback;
            }
            // point on both planes closest to p
            let m = nalgebra::Matrix3::from_rows(&[na.transpose(), nb.transpose(), dir.transpose()]);
            let rhs = Vector3::new(na.dot(&ca.coords), nb.dot(&cb.coords), dir.dot(&p.coords));
            match m.try_inverse() {
                Some(inv) => SnappedPoint {
                    position: Point3::from(inv * rhs),
                    normal_a: na,
                    normal_b: nb,
                    snapped: true,
                },
                None => fallback,
            }
        })
        .collect()
}

/// Plane through the barycenter of `side`, normal facing the camera.
/// `None` for too few points or a side too thin to fix the plane.
fn local_plane(side: &[Point3], view_from: &Point3, radius: f64) -> Option<(Point3, Vector3)> {
    if side.len() < MIN_SIDE_POINTS {
        return None;
    }
    let (c, m) = covariance(side);
    let (vals, vecs) = sorted_eigen(&m);
    if !(vals[1].sqrt() >= MIN_SIDE_SPREAD * radius) {
        return None;
    }
    let mut n = vecs[0];
    if n.dot(&view_from.coords) > 0.0 {
        n = -n;
    }
    Some((c, n))
}

/// Diagnostics for one seam, serialized in the run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamDiagnostics {
    pub points: usize,
    pub segments: (u32, u32),
    pub extent_mm: f64,
}

pub fn diagnostics(seams: &[SeamPointSet]) -> Vec<SeamDiagnostics> {
    seams
        .iter()
        .map(|s| SeamDiagnostics {
            points: s.points.len(),
            segments: s.segments,
            extent_mm: s.extent_mm,
        })
        .collect()
}
