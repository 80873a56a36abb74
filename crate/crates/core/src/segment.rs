//! Region-growing segmentation into smooth surfaces.
//!
//! Segments are seeded at the unvisited point of smallest curvature and grown
//! breadth-first through each seed's `k_grow` nearest neighbours. A neighbour
//! whose normal deviates from the seed normal by more than `theta1` becomes an
//! edge candidate; otherwise it joins the segment and, when flat enough
//! (`δ < c2`), becomes a seed itself.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vector3};
use crate::kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthParams {
    /// Normal-angle bound, degrees.
    pub theta1_deg: f64,
    /// Curvature bound for seed promotion.
    pub c2: f64,
    pub k_grow: usize,
    pub min_segment: usize,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self {
            theta1_deg: 15.0,
            c2: 0.01,
            k_grow: 30,
            min_segment: 50,
        }
    }
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1_deg > 0.0 && self.theta1_deg < 90.0) {
            return Err(Error::InvalidConfig(format!("theta1 must be in (0, 90) degrees, got {}", self.theta1_deg)));
        }
        if !(0.0..=1.0 / 3.0).contains(&self.c2) {
            return Err(Error::InvalidConfig(format!("curvature seed bound must be in [0, 1/3], got {}", self.c2)));
        }
        if self.k_grow < 3 {
            return Err(Error::InvalidConfig(format!("k_grow must be >= 3, got {}", self.k_grow)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInfo {
    pub id: u32,
    pub count: usize,
    pub mean_normal: Vector3,
}

/// Per-point labels (0 = unassigned) and edge-candidate flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub labels: Vec<u32>,
    pub edge_candidates: Vec<bool>,
    pub segments: Vec<SegmentInfo>,
}

impl SegmentationResult {
    pub fn edge_count(&self) -> usize {
        self.edge_candidates.iter().filter(|e| **e).count()
    }

    pub fn segment(&self, id: u32) -> Option<&SegmentInfo> {
        self.segments.iter().find(|s| s.id == id)
    }
}

pub fn segment(cloud: &PointCloud, tree: &KdTree, params: &GrowthParams) -> Result<SegmentationResult> {
    params.validate()?;
    let (Some(normals), Some(curv)) = (cloud.normals(), cloud.curvatures()) else {
        return Err(Error::MissingFeatures);
    };
    let n = cloud.len();
    let cos_limit = params.theta1_deg.to_radians().cos();

    let mut order: Vec<usize> = cloud.valid_indices().collect();
    order.sort_by(|&a, &b| curv[a].total_cmp(&curv[b]).then(a.cmp(&b)));

    let mut visited = vec![false; n];
    for (i, v) in visited.iter_mut().enumerate() {
        *v = !cloud.is_valid(i);
    }
    let mut raw_labels = vec![0u32; n];
    let mut edge = vec![false; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();

    for &start in &order {
        if visited[start] {
            continue;
        }
        let id = members.len() as u32 + 1;
        let mut seg = vec![start];
        visited[start] = true;
        raw_labels[start] = id;
        queue.clear();
        queue.push_back(start);
        while let Some(seed) = queue.pop_front() {
            let ns = normals[seed];
            for nb in tree.knn(&cloud.points()[seed], params.k_grow) {
                let j = nb.index;
                if visited[j] {
                    continue;
                }
                visited[j] = true;
                // |cos| comparison is the same test as arccos(|n·n|) > theta1
                if ns.dot(&normals[j]).abs() < cos_limit {
                    edge[j] = true;
                } else {
                    raw_labels[j] = id;
                    seg.push(j);
                    if curv[j] < params.c2 {
                        queue.push_back(j);
                    }
                }
            }
        }
        members.push(seg);
    }

    let mut labels = vec![0u32; n];
    let mut segments = Vec::new();
    for seg in members.iter().filter(|s| s.len() >= params.min_segment) {
        let id = segments.len() as u32 + 1;
        let mut sum = Vector3::zeros();
        for &i in seg {
            labels[i] = id;
            sum += normals[i];
        }
        segments.push(SegmentInfo {
            id,
            count: seg.len(),
            mean_normal: sum.try_normalize(1e-12).unwrap_or_else(Vector3::z),
        });
    }
    log::debug!(
        "region growing: {} raw segments, {} kept, {} edge candidates",
        members.len(),
        segments.len(),
        edge.iter().filter(|e| **e).count()
    );
    Ok(SegmentationResult {
        labels,
        edge_candidates: edge,
        segments,
    })
}
