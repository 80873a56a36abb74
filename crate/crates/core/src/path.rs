//! Seam curve fitting and robot path generation.
//!
//! A seam point set is fitted with a total-least-squares plane, projected
//! into a frame whose z axis is the plane normal, and fitted in-plane with a
//! line or a low-degree polynomial. Waypoints are sampled at equal arc
//! length and given a torch orientation bisecting the two flanking surfaces.

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{covariance, sorted_eigen};
use crate::geometry::{rotation_to_wpr, Matrix3, OrientationWpr, Point3, RigidTransform, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeamKind {
    Linear,
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Point3,
    pub orientation: OrientationWpr,
}

/// One seam's ordered waypoints plus fit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct WeldPath {
    pub kind: SeamKind,
    pub residual_mm: f64,
    pub waypoints: Vec<Waypoint>,
}

impl WeldPath {
    pub fn positions(&self) -> Vec<Point3> {
        self.waypoints.iter().map(|w| w.position).collect()
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }
}

/// Fit tolerances and waypoint spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitParams {
    pub line_tol_mm: f64,
    pub curve_tol_mm: f64,
    pub step_mm: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            line_tol_mm: 0.5,
            curve_tol_mm: 0.8,
            step_mm: 2.0,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if pos(self.line_tol_mm) && pos(self.curve_tol_mm) && pos(self.step_mm) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("fit parameters must be positive: {self:?}")))
        }
    }
}

/// `A x + B y + C z + D = 0` with `(A, B, C)` unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Plane {
    /// Plane through `point` with the sign-canonical form of `normal`.
    pub fn through(point: &Point3, normal: &Vector3) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::DegenerateGeometry("zero plane normal".into()))?;
        let n = canonical_sign(n);
        Ok(Self {
            a: n.x,
            b: n.y,
            c: n.z,
            d: -n.dot(&point.coords),
        })
    }

    pub fn normal(&self) -> Vector3 {
        Vector3::new(self.a, self.b, self.c)
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal().dot(&p.coords) + self.d
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal() * self.signed_distance(p)
    }
}

const SIGN_EPS: f64 = 1e-12;

fn canonical_sign(n: Vector3) -> Vector3 {
    for k in [2, 1, 0] {
        if n[k].abs() > SIGN_EPS {
            return if n[k] < 0.0 { -n } else { n };
        }
    }
    n
}

/// Total-least-squares plane: normal = smallest covariance eigenvector,
/// through the barycenter. Sign: `C ≥ 0`, then `B ≥ 0`, then `A ≥ 0`.
pub fn fit_plane(points: &[Point3]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "plane fit needs 3 points, got {}",
            points.len()
        )));
    }
    let (mean, m) = covariance(points);
    let (vals, vecs) = sorted_eigen(&m);
    if !(vals[1] > 1e-12 * vals[2]) || vals[2] <= 0.0 {
        return Err(Error::DegenerateGeometry("plane fit on collinear points".into()));
    }
    Plane::through(&mean, &vecs[0])
}

/// Projects `points` onto `plane` and expresses them in a frame whose z axis
/// is the plane normal and whose x axis follows the largest in-plane
/// variance. Returns the 2D coordinates and the `plane ← camera` rotation;
/// every transformed point has z = `−D`.
pub fn to_plane_frame(points: &[Point3], plane: &Plane) -> (Vec<Point2<f64>>, RigidTransform) {
    let n = plane.normal();
    let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u0 = (helper - n * n.dot(&helper)).normalize();
    let v0 = n.cross(&u0);

    let proj: Vec<Point3> = points.iter().map(|p| plane.project(p)).collect();
    let mut ex = u0;
    if proj.len() >= 2 {
        let coords: Vec<(f64, f64)> = proj.iter().map(|p| (p.coords.dot(&u0), p.coords.dot(&v0))).collect();
        let nn = coords.len() as f64;
        let (mu, mv) = coords.iter().fold((0.0, 0.0), |s, c| (s.0 + c.0, s.1 + c.1));
        let (mu, mv) = (mu / nn, mv / nn);
        let (mut cuu, mut cvv, mut cuv) = (0.0, 0.0, 0.0);
        for (u, v) in &coords {
            cuu += (u - mu) * (u - mu);
            cvv += (v - mv) * (v - mv);
            cuv += (u - mu) * (v - mv);
        }
        let theta = 0.5 * (2.0 * cuv).atan2(cuu - cvv);
        ex = u0 * theta.cos() + v0 * theta.sin();
    }
    let k = ex.iamax();
    if ex[k] < 0.0 {
        ex = -ex;
    }
    let ey = n.cross(&ex);
    let rot = Matrix3::from_rows(&[ex.transpose(), ey.transpose(), n.transpose()]);
    let frame = RigidTransform::new_within(rot, Vector3::zeros(), 1e-9)
        .expect("orthonormal plane frame");
    let pts2 = proj
        .iter()
        .map(|p| {
            let q = frame.apply(p);
            Point2::new(q.x, q.y)
        })
        .collect();
    (pts2, frame)
}

/// In-plane seam model.
#[derive(Debug, Clone, PartialEq)]
pub enum InPlaneModel {
    /// `origin + t · direction` for `t ∈ range`.
    Line {
        origin: Point2<f64>,
        direction: Vector2<f64>,
        range: (f64, f64),
    },
    /// `y = Σ coeffs[i] · s^i` with `s = (x − center) / scale`, `x ∈ range`.
    Poly {
        center: f64,
        scale: f64,
        coeffs: Vec<f64>,
        range: (f64, f64),
    },
}

impl InPlaneModel {
    pub fn range(&self) -> (f64, f64) {
        match self {
            InPlaneModel::Line { range, .. } | InPlaneModel::Poly { range, .. } => *range,
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            InPlaneModel::Line { .. } => 1,
            InPlaneModel::Poly { coeffs, .. } => coeffs.len() - 1,
        }
    }

    pub fn eval(&self, u: f64) -> Point2<f64> {
        match self {
            InPlaneModel::Line { origin, direction, .. } => origin + direction * u,
            InPlaneModel::Poly { center, scale, coeffs, .. } => {
                let s = (u - center) / scale;
                Point2::new(u, horner(coeffs, s))
            }
        }
    }

    /// d/du of [`InPlaneModel::eval`].
    pub fn derivative(&self, u: f64) -> Vector2<f64> {
        match self {
            InPlaneModel::Line { direction, .. } => *direction,
            InPlaneModel::Poly { center, scale, coeffs, .. } => {
                let s = (u - center) / scale;
                let d: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect();
                Vector2::new(1.0, horner(&d, s) / scale)
            }
        }
    }

    /// Polynomial coefficients in raw `x`, lowest power first.
    pub fn coefficients(&self) -> Option<Vec<f64>> {
        let InPlaneModel::Poly { center, scale, coeffs, .. } = self else {
            return None;
        };
        let mut out = vec![0.0; coeffs.len()];
        for (k, a) in coeffs.iter().enumerate() {
            let f = a / scale.powi(k as i32);
            for (j, o) in out.iter_mut().enumerate().take(k + 1) {
                *o += f * binomial(k, j) * (-center).powi((k - j) as i32);
            }
        }
        Some(out)
    }

    /// Distance from `p` to the model over its parameter range.
    pub fn distance(&self, p: &Point2<f64>) -> f64 {
        let (lo, hi) = self.range();
        match self {
            InPlaneModel::Line { origin, direction, .. } => {
                let t = (p - origin).dot(direction).clamp(lo, hi);
                (p - self.eval(t)).norm()
            }
            InPlaneModel::Poly { .. } => {
                let n = 512;
                let h = (hi - lo) / n as f64;
                let dist = |u: f64| (p - self.eval(u)).norm();
                let best = (0..=n)
                    .map(|i| lo + h * i as f64)
                    .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
                    .unwrap();
                let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
                let g = (5f64.sqrt() - 1.0) / 2.0;
                for _ in 0..60 {
                    let c = b - g * (b - a);
                    let d = a + g * (b - a);
                    if dist(c) < dist(d) {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                dist(0.5 * (a + b))
            }
        }
    }
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Result of [`fit_inplane`].
#[derive(Debug, Clone, PartialEq)]
pub struct InPlaneFit {
    pub kind: SeamKind,
    pub model: InPlaneModel,
    pub rms_mm: f64,
}

/// Total-least-squares line if its RMS residual is within `line_tol`,
/// otherwise the lowest polynomial degree (2, then 3) within `curve_tol`.
pub fn fit_inplane(points: &[Point2<f64>], line_tol: f64, curve_tol: f64) -> Result<InPlaneFit> {
    let line = fit_line_2d(points)?;
    if line.rms_mm <= line_tol {
        return Ok(line);
    }
    if points.len() < 5 {
        return Err(Error::DegenerateGeometry(format!(
            "curved fit needs 5 points, got {}",
            points.len()
        )));
    }
    let mut last = f64::INFINITY;
    for degree in 2..=3 {
        let fit = fit_poly(points, degree)?;
        if fit.rms_mm <= curve_tol {
            return Ok(fit);
        }
        last = fit.rms_mm;
    }
    Err(Error::FitRejected {
        rms_mm: last,
        tol_mm: curve_tol,
    })
}

fn fit_line_2d(points: &[Point2<f64>]) -> Result<InPlaneFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "line fit needs 2 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |s, p| s + p.coords) / n;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p.coords - mean;
        cxx += d.x * d.x;
        cyy += d.y * d.y;
        cxy += d.x * d.y;
    }
    if cxx + cyy <= 0.0 {
        return Err(Error::DegenerateGeometry("all seam points coincide".into()));
    }
    let theta = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    let mut dir = Vector2::new(theta.cos(), theta.sin());
    if dir[dir.iamax()] < 0.0 {
        dir = -dir;
    }
    let origin = Point2::from(mean);
    let (mut lo, mut hi, mut ss) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for p in points {
        let d = p - origin;
        let t = d.dot(&dir);
        lo = lo.min(t);
        hi = hi.max(t);
        let perp = d.x * dir.y - d.y * dir.x;
        ss += perp * perp;
    }
    Ok(InPlaneFit {
        kind: SeamKind::Linear,
        model: InPlaneModel::Line {
            origin,
            direction: dir,
            range: (lo, hi),
        },
        rms_mm: (ss / n).sqrt(),
    })
}

fn fit_poly(points: &[Point2<f64>], degree: usize) -> Result<InPlaneFit> {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.x), h.max(p.x)));
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    if !(scale > 0.0) {
        return Err(Error::DegenerateGeometry("seam has no extent along its principal axis".into()));
    }
    let a = DMatrix::from_fn(points.len(), degree + 1, |i, j| {
        ((points[i].x - center) / scale).powi(j as i32)
    });
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.y));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(Error::DegenerateGeometry(format!(
            "too few distinct abscissae for a degree {degree} fit"
        )));
    }
    let x = svd
        .solve(&b, 1e-12 * smax)
        .map_err(|e| Error::DegenerateGeometry(e.to_string()))?;
    let resid = &a * &x - b;
    let rms = (resid.norm_squared() / points.len() as f64).sqrt();
    Ok(InPlaneFit {
        kind: SeamKind::Curved,
        model: InPlaneModel::Poly {
            center,
            scale,
            coeffs: x.iter().copied().collect(),
            range: (lo, hi),
        },
        rms_mm: rms,
    })
}

/// A seam fitted in 3D: plane, in-plane model and the plane frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSeam {
    pub kind: SeamKind,
    pub plane: Plane,
    pub model: InPlaneModel,
    pub rms_mm: f64,
    /// Maps camera coordinates into the plane frame.
    pub frame: RigidTransform,
}

impl FittedSeam {
    fn lift(&self, q: &Point2<f64>) -> Point3 {
        self.frame.inverse().apply(&Point3::new(q.x, q.y, -self.plane.d))
    }

    pub fn start(&self) -> Point3 {
        self.lift(&self.model.eval(self.model.range().0))
    }

    pub fn end(&self) -> Point3 {
        self.lift(&self.model.eval(self.model.range().1))
    }

    /// Distance from a camera-frame point to the fitted curve.
    pub fn distance(&self, p: &Point3) -> f64 {
        let q = self.frame.apply(p);
        let in_plane = self.model.distance(&Point2::new(q.x, q.y));
        (in_plane * in_plane + (q.z + self.plane.d).powi(2)).sqrt()
    }
}

/// Plane fit, projection and in-plane fit of one seam point set. When the
/// points are exactly collinear the plane is taken through their line and
/// perpendicular to `hint`.
pub fn fit_seam(points: &[Point3], hint: Option<&Vector3>, params: &FitParams) -> Result<FittedSeam> {
    let plane = match (fit_plane(points), hint) {
        (Ok(p), _) => p,
        (Err(Error::DegenerateGeometry(_)), Some(h)) if points.len() >= 2 => {
            let (mean, m) = covariance(points);
            let (_, vecs) = sorted_eigen(&m);
            let dir = vecs[2];
            Plane::through(&mean, &(h - dir * dir.dot(h)))?
        }
        (Err(e), _) => return Err(e),
    };
    let (pts2, frame) = to_plane_frame(points, &plane);
    let fit = fit_inplane(&pts2, params.line_tol_mm, params.curve_tol_mm)?;
    Ok(FittedSeam {
        kind: fit.kind,
        plane,
        model: fit.model,
        rms_mm: fit.rms_mm,
        frame,
    })
}

const ARC_TABLE: usize = 4096;

/// Model parameters at equal arc-length spacing close to `step`, both
/// endpoints included: `n = max(1, round(L / step))` segments.
pub fn sample_parameters(model: &InPlaneModel, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!("waypoint step must be > 0, got {step}")));
    }
    let (lo, hi) = model.range();
    match model {
        InPlaneModel::Line { .. } => {
            let n = segments(hi - lo, step);
            Ok((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
        }
        InPlaneModel::Poly { .. } => {
            let h = (hi - lo) / ARC_TABLE as f64;
            let mut us = Vec::with_capacity(ARC_TABLE + 1);
            let mut arc = Vec::with_capacity(ARC_TABLE + 1);
            let mut acc = 0.0;
            let mut prev = model.eval(lo);
            for i in 0..=ARC_TABLE {
                let u = lo + h * i as f64;
                let q = model.eval(u);
                acc += (q - prev).norm();
                prev = q;
                us.push(u);
                arc.push(acc);
            }
            let total = acc;
            let n = segments(total, step);
            let mut out = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let target = total * i as f64 / n as f64;
                let j = arc.partition_point(|&s| s < target).clamp(1, ARC_TABLE);
                let (s0, s1) = (arc[j - 1], arc[j]);
                let f = if s1 > s0 { ((target - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
                out.push(us[j - 1] + f * (us[j] - us[j - 1]));
            }
            out[0] = lo;
            out[n] = hi;
            Ok(out)
        }
    }
}

fn segments(length: f64, step: f64) -> usize {
    ((length / step).round() as usize).max(1)
}

/// Camera-frame waypoints from start to end at arc spacing ≈ `step`.
pub fn sample_waypoints(seam: &FittedSeam, step: f64) -> Result<Vec<Point3>> {
    Ok(sample_parameters(&seam.model, step)?
        .iter()
        .map(|&u| seam.lift(&seam.model.eval(u)))
        .collect())
}

/// Camera-frame waypoints with unit tangents pointing from start to end.
pub fn sample_with_tangents(seam: &FittedSeam, step: f64) -> Result<Vec<(Point3, Vector3)>> {
    let back = seam.frame.inverse();
    Ok(sample_parameters(&seam.model, step)?
        .iter()
        .map(|&u| {
            let d = seam.model.derivative(u).normalize();
            (
                seam.lift(&seam.model.eval(u)),
                back.apply_vector(&Vector3::new(d.x, d.y, 0.0)),
            )
        })
        .collect())
}

/// Torch frame at one waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorchPose {
    /// Columns: seam tangent, `approach × tangent`, approach.
    pub frame: Matrix3,
    pub orientation: OrientationWpr,
}

impl TorchPose {
    pub fn approach(&self) -> Vector3 {
        self.frame.column(2).into_owned()
    }
}

/// Approach axis `a = −normalize(n1 + n2)`, made exactly perpendicular to the
/// tangent `t`; the frame `[t, a × t, a]` is converted to (w, p, r).
pub fn compute_torch_pose(tangent: &Vector3, n1: &Vector3, n2: &Vector3) -> Result<TorchPose> {
    let t = tangent
        .try_normalize(1e-12)
        .ok_or_else(|| Error::DegenerateGeometry("zero seam tangent".into()))?;
    let a = -(n1 + n2)
        .try_normalize(1e-9)
        .ok_or_else(|| Error::DegenerateGeometry("flank normals are opposite".into()))?;
    let a = (a - t * a.dot(&t))
        .try_normalize(1e-9)
        .ok_or_else(|| Error::DegenerateGeometry("approach axis is parallel to the seam".into()))?;
    let frame = frame_from_tangent_approach(&t, &a);
    Ok(TorchPose {
        frame,
        orientation: wpr_of(&frame),
    })
}

fn frame_from_tangent_approach(t: &Vector3, a: &Vector3) -> Matrix3 {
    let y = a.cross(t);
    Matrix3::from_columns(&[*t, y, *a])
}

fn wpr_of(m: &Matrix3) -> OrientationWpr {
    rotation_to_wpr(m).unwrap_or_else(|g| g.canonical)
}

/// Applies `world_from_tool ∘ tool_from_camera` to positions and frames.
pub fn to_world(path: &WeldPath, tool_from_camera: &RigidTransform, world_from_tool: &RigidTransform) -> WeldPath {
    transform_path(path, &world_from_tool.compose(tool_from_camera))
}

pub fn transform_path(path: &WeldPath, t: &RigidTransform) -> WeldPath {
    WeldPath {
        kind: path.kind,
        residual_mm: path.residual_mm,
        waypoints: path
            .waypoints
            .iter()
            .map(|w| Waypoint {
                position: t.apply(&w.position),
                orientation: wpr_of(&(t.rotation() * w.orientation.to_rotation())),
            })
            .collect(),
    }
}

/// Reverses the waypoint order, turning each frame half a turn about its
/// approach axis so the x axis keeps following the direction of travel.
pub fn reverse_path(path: &WeldPath) -> WeldPath {
    let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
    WeldPath {
        kind: path.kind,
        residual_mm: path.residual_mm,
        waypoints: path
            .waypoints
            .iter()
            .rev()
            .map(|w| Waypoint {
                position: w.position,
                orientation: wpr_of(&(w.orientation.to_rotation() * flip)),
            })
            .collect(),
    }
}
