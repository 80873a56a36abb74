//! Normal and curvature estimation from the covariance of each point's
//! k-nearest neighbourhood.
//!
//! For eigenvalues `λ0 ≤ λ1 ≤ λ2` of the neighbourhood covariance the
//! curvature proxy is `δ = λ0 / (λ0 + λ1 + λ2)`, which is 0 on a plane and
//! 1/3 for isotropic scatter. The normal is the eigenvector of `λ0`, flipped
//! to face the camera at the origin.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Matrix3, Point3, PointCloud, Vector3};
use crate::kdtree::KdTree;

/// Normal, curvature and neighbourhood size of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSurfaceStats {
    pub normal: Vector3,
    pub curvature: f64,
    pub k: usize,
    /// All neighbours coincide; the normal is the view direction and δ is 0.
    pub degenerate: bool,
}

/// Eigenvalues ascending with matching unit eigenvectors.
pub fn sorted_eigen(m: &Matrix3) -> ([f64; 3], [Vector3; 3]) {
    let eig = nalgebra::SymmetricEigen::new(*m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let values = idx.map(|i| eig.eigenvalues[i]);
    let vectors = idx.map(|i| eig.eigenvectors.column(i).normalize());
    (values, vectors)
}

/// `(1/n) Σ (p − p̄)(p − p̄)ᵀ` about the barycenter `p̄`.
pub fn covariance(points: &[Point3]) -> (Point3, Matrix3) {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / n;
    let mut m = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        m += d * d.transpose();
    }
    (Point3::from(mean), m / n)
}

/// Covariance of the `k` nearest indexed points to `query`.
pub fn knn_covariance(tree: &KdTree, query: &Point3, k: usize) -> Matrix3 {
    let pts: Vec<Point3> = tree.knn(query, k).iter().map(|n| *tree.point(n.index)).collect();
    covariance(&pts).1
}

/// Covariance over the `k` nearest neighbours of point `i`, the point itself
/// included. Coincident neighbourhoods give the zero matrix.
pub fn neighborhood_covariance(cloud: &PointCloud, tree: &KdTree, i: usize, k: usize) -> Result<Matrix3> {
    check_k(tree, k)?;
    if !cloud.is_valid(i) {
        return Err(Error::DegenerateNeighborhood(i));
    }
    Ok(knn_covariance(tree, &cloud.points()[i], k))
}

fn check_k(tree: &KdTree, k: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!("knn k must be >= 3, got {k}")));
    }
    if tree.len() < k {
        return Err(Error::InvalidConfig(format!(
            "cloud has {} points, fewer than knn k = {k}",
            tree.len()
        )));
    }
    Ok(())
}

/// Normal and δ from a covariance matrix; `p` orients the normal.
pub fn stats_from_covariance(m: &Matrix3, p: &Point3, k: usize) -> LocalSurfaceStats {
    let (vals, vecs) = sorted_eigen(m);
    let vals = vals.map(|v| v.max(0.0));
    let sum: f64 = vals.iter().sum();
    let view = (-p.coords).try_normalize(1e-12).unwrap_or_else(Vector3::z);
    if !(sum > 0.0) {
        return LocalSurfaceStats {
            normal: view,
            curvature: 0.0,
            k,
            degenerate: true,
        };
    }
    let mut normal = vecs[0];
    if normal.dot(&view) < 0.0 {
        normal = -normal;
    }
    LocalSurfaceStats {
        normal,
        curvature: (vals[0] / sum).min(1.0 / 3.0),
        k,
        degenerate: false,
    }
}

/// Per-point statistics for every point of `cloud`. Invalid organized
/// points get a degenerate placeholder.
pub fn local_stats(cloud: &PointCloud, tree: &KdTree, k: usize) -> Result<Vec<LocalSurfaceStats>> {
    check_k(tree, k)?;
    let stats = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let p = &cloud.points()[i];
            if !cloud.is_valid(i) {
                return LocalSurfaceStats {
                    normal: Vector3::z(),
                    curvature: 0.0,
                    k: 0,
                    degenerate: true,
                };
            }
            stats_from_covariance(&knn_covariance(tree, p, k), p, k)
        })
        .collect::<Vec<_>>();
    let flagged = stats.iter().filter(|s| s.degenerate).count();
    if flagged > 0 {
        log::debug!("{flagged} degenerate neighbourhoods flagged");
    }
    Ok(stats)
}

/// Returns a copy of `cloud` carrying normals and curvatures.
pub fn estimate_features(cloud: &PointCloud, tree: &KdTree, k: usize) -> Result<PointCloud> {
    let stats = local_stats(cloud, tree, k)?;
    let mut out = cloud.clone();
    out.set_features(
        stats.iter().map(|s| s.normal).collect(),
        stats.iter().map(|s| s.curvature).collect(),
    )?;
    Ok(out)
}
