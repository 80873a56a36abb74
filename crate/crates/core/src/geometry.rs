//! Geometric value types shared by every pipeline stage.
//!
//! All lengths are millimetres. Rigid transforms chain camera → tool → world
//! coordinates; torch orientations are expressed as fixed-axis X/Y/Z angles
//! in degrees (`w` about X, then `p` about Y, then `r` about Z, all about the
//! fixed frame), i.e. `R = Rz(r) · Ry(p) · Rx(w)`.

use nalgebra::{Matrix4, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;

/// Orthonormality tolerance enforced on every stored rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// Rotation + translation acting on camera, tool or world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3,
    translation: Vector3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from a rotation that must already be orthonormal
    /// with determinant +1 within [`ROTATION_TOL`].
    pub fn new(rotation: Matrix3, translation: Vector3) -> Result<Self> {
        check_rotation(&rotation, ROTATION_TOL)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Accepts a rotation that is orthonormal within `tol` and snaps it to the
    /// nearest proper rotation, so file-sourced matrices printed with a few
    /// decimals still satisfy the stored invariant.
    pub fn new_within(rotation: Matrix3, translation: Vector3, tol: f64) -> Result<Self> {
        check_rotation(&rotation, tol)?;
        Self::new(nearest_rotation(&rotation), translation)
    }

    pub fn from_translation(t: Vector3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle_rad` about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3, angle_rad: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        let rotation = *nalgebra::Rotation3::from_axis_angle(&axis, angle_rad).matrix();
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Row-major 4×4 homogeneous matrix. The last row must be `[0, 0, 0, 1]`.
    pub fn from_rows(rows: &[[f64; 4]; 4], tol: f64) -> Result<Self> {
        let last = rows[3];
        if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > tol {
            return Err(Error::InvalidTransform(format!(
                "last row must be [0, 0, 0, 1], got {last:?}"
            )));
        }
        let rotation = Matrix3::from_fn(|i, j| rows[i][j]);
        let translation = Vector3::new(rows[0][3], rows[1][3], rows[2][3]);
        Self::new_within(rotation, translation, tol)
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_homogeneous();
        let mut rows = [[0.0; 4]; 4];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        rows
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation(&self) -> &Matrix3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    /// `rotation · p + translation`.
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Rotates a direction; translation does not apply.
    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest absolute entry-wise difference of the homogeneous matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        (self.to_homogeneous() - other.to_homogeneous()).amax()
    }
}

fn check_rotation(r: &Matrix3, tol: f64) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidTransform("non-finite rotation entry".into()));
    }
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if err > tol {
        return Err(Error::InvalidTransform(format!(
            "rotation is not orthonormal (max |RᵀR − I| = {err:.3e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::InvalidTransform(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

/// Polar projection onto SO(3).
fn nearest_rotation(r: &Matrix3) -> Matrix3 {
    let svd = SVD::new(*r, true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut q = u * v_t;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * v_t;
    }
    q
}

/// Torch orientation as fixed-axis X/Y/Z angles in degrees, each in (−180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationWpr {
    pub w: f64,
    pub p: f64,
    pub r: f64,
}

/// Returned by [`rotation_to_wpr`] when pitch is ±90°. `w` and `r` are no
/// longer independent there; the canonical decomposition fixes `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GimbalLock {
    pub canonical: OrientationWpr,
}

fn canonical_deg(a: f64) -> f64 {
    let mut d = a % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

impl OrientationWpr {
    pub fn new(w: f64, p: f64, r: f64) -> Self {
        Self {
            w: canonical_deg(w),
            p: canonical_deg(p),
            r: canonical_deg(r),
        }
    }

    pub fn to_rotation(&self) -> Matrix3 {
        wpr_to_rotation(self)
    }
}

/// `Rz(r) · Ry(p) · Rx(w)`.
pub fn wpr_to_rotation(o: &OrientationWpr) -> Matrix3 {
    let (sw, cw) = o.w.to_radians().sin_cos();
    let (sp, cp) = o.p.to_radians().sin_cos();
    let (sr, cr) = o.r.to_radians().sin_cos();
    Matrix3::new(
        cr * cp,
        cr * sp * sw - sr * cw,
        cr * sp * cw + sr * sw,
        sr * cp,
        sr * sp * sw + cr * cw,
        sr * sp * cw - cr * sw,
        -sp,
        cp * sw,
        cp * cw,
    )
}

pub fn rotation_to_wpr(m: &Matrix3) -> Result<OrientationWpr, GimbalLock> {
    let cp = (m[(0, 0)] * m[(0, 0)] + m[(1, 0)] * m[(1, 0)]).sqrt();
    let p = (-m[(2, 0)]).atan2(cp);
    if cp < 1e-9 {
        // R = Ry(±90°)·Rx(w) once r is pinned to zero.
        let w = if m[(2, 0)] < 0.0 {
            m[(0, 1)].atan2(m[(1, 1)])
        } else {
            (-m[(0, 1)]).atan2(m[(1, 1)])
        };
        return Err(GimbalLock {
            canonical: OrientationWpr::new(w.to_degrees(), p.to_degrees(), 0.0),
        });
    }
    let w = m[(2, 1)].atan2(m[(2, 2)]);
    let r = m[(1, 0)].atan2(m[(0, 0)]);
    Ok(OrientationWpr::new(
        w.to_degrees(),
        p.to_degrees(),
        r.to_degrees(),
    ))
}

/// Pinhole intrinsics. Pixel `(u, v)` = column, row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid camera intrinsics {self:?}")))
        }
    }

    /// Continuous pixel coordinates, or `None` behind the camera.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Integer pixel (column, row) with nearest rounding, ties toward +∞.
    /// `None` when behind the camera or outside the frame.
    pub fn pixel(&self, p: &Point3) -> Option<(usize, usize)> {
        let (u, v) = self.project(p)?;
        let (u, v) = ((u + 0.5).floor(), (v + 0.5).floor());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    /// Unit ray direction through pixel centre `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3 {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }
}

/// Row/column layout of an organized cloud plus its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Organization {
    pub rows: usize,
    pub cols: usize,
    valid: Vec<bool>,
}

impl Organization {
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// A set of 3D points, optionally laid out on the sensor grid and optionally
/// carrying per-point normals and curvature.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    organization: Option<Organization>,
    normals: Option<Vec<Vector3>>,
    curvatures: Option<Vec<f64>>,
}

impl PointCloud {
    /// Unorganized cloud. Every coordinate must be finite.
    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::parse("point cloud", format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            ..Default::default()
        })
    }

    /// Organized `rows × cols` cloud in row-major pixel order. Non-finite
    /// points are stored as the origin and flagged invalid.
    pub fn organized(rows: usize, cols: usize, mut points: Vec<Point3>) -> Result<Self> {
        if rows * cols != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "organized {rows}x{cols} needs {} points, got {}",
                rows * cols,
                points.len()
            )));
        }
        let valid: Vec<bool> = points.iter().map(is_finite).collect();
        for (p, ok) in points.iter_mut().zip(&valid) {
            if !ok {
                *p = Point3::origin();
            }
        }
        Ok(Self {
            points,
            organization: Some(Organization { rows, cols, valid }),
            ..Default::default()
        })
    }

    /// Like [`PointCloud::organized`] with an explicit validity mask.
    pub fn organized_with_mask(
        rows: usize,
        cols: usize,
        points: Vec<Point3>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if valid.len() != points.len() {
            return Err(Error::DimensionMismatch("validity mask length".into()));
        }
        let mut cloud = Self::organized(rows, cols, points)?;
        let org = cloud.organization.as_mut().unwrap();
        for (v, keep) in org.valid.iter_mut().zip(valid) {
            *v &= keep;
        }
        Ok(cloud)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn organization(&self) -> Option<&Organization> {
        self.organization.as_ref()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.organization.as_ref().is_none_or(|o| o.valid[i])
    }

    pub fn valid_count(&self) -> usize {
        match &self.organization {
            Some(o) => o.valid.iter().filter(|v| **v).count(),
            None => self.points.len(),
        }
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.points.len()).filter(move |&i| self.is_valid(i))
    }

    /// Valid points only, in storage order.
    pub fn valid_points(&self) -> impl Iterator<Item = &Point3> + '_ {
        self.valid_indices().map(move |i| &self.points[i])
    }

    pub fn normals(&self) -> Option<&[Vector3]> {
        self.normals.as_deref()
    }

    pub fn curvatures(&self) -> Option<&[f64]> {
        self.curvatures.as_deref()
    }

    pub fn has_features(&self) -> bool {
        self.normals.is_some() && self.curvatures.is_some()
    }

    /// Attaches per-point normals (re-normalized) and curvature values.
    pub fn set_features(&mut self, normals: Vec<Vector3>, curvatures: Vec<f64>) -> Result<()> {
        if normals.len() != self.points.len() || curvatures.len() != self.points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} normals / {} curvatures",
                self.points.len(),
                normals.len(),
                curvatures.len()
            )));
        }
        self.normals = Some(normals.into_iter().map(unit_or_z).collect());
        self.curvatures = Some(curvatures);
        Ok(())
    }

    /// Attaches normals only (e.g. read from a PLY file).
    pub fn set_normals(&mut self, normals: Vec<Vector3>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::DimensionMismatch("normal count".into()));
        }
        self.normals = Some(normals.into_iter().map(unit_or_z).collect());
        Ok(())
    }

    /// Applies `t` to every point and normal; layout is kept.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            organization: self.organization.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
            curvatures: self.curvatures.clone(),
        }
    }

    /// Componentwise (min, max) over valid points.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let mut it = self.valid_points();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

fn is_finite(p: &Point3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

fn unit_or_z(n: Vector3) -> Vector3 {
    n.try_normalize(1e-300).unwrap_or_else(Vector3::z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rot_z(deg: f64) -> RigidTransform {
        RigidTransform::from_axis_angle(Vector3::z(), deg.to_radians())
    }

    #[test]
    fn identity_and_translation() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(RigidTransform::identity().apply(&p), p);
        let t = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(t.apply(&Point3::origin()), p);
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = rot_z(90.0).apply(&Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(q, Point3::new(0.0, 1.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn compose_examples() {
        let t = RigidTransform::new(*rot_z(33.0).rotation(), Vector3::new(4.0, -1.0, 2.0)).unwrap();
        assert!(RigidTransform::identity().compose(&t).max_abs_diff(&t) < 1e-15);
        assert!(t.compose(&t.inverse()).max_abs_diff(&RigidTransform::identity()) < 1e-9);
        assert!(rot_z(45.0).compose(&rot_z(45.0)).max_abs_diff(&rot_z(90.0)) < 1e-9);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
        let t = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(*t.inverse().translation(), Vector3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn rejects_reflection_and_skew() {
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            RigidTransform::new(refl, Vector3::zeros()),
            Err(Error::InvalidTransform(_))
        ));
        let mut skew = Matrix3::identity();
        skew[(0, 1)] = 1e-3;
        assert!(RigidTransform::new_within(skew, Vector3::zeros(), 1e-6).is_err());
        skew[(0, 1)] = 1e-7;
        let t = RigidTransform::new_within(skew, Vector3::zeros(), 1e-6).unwrap();
        assert!((t.rotation().transpose() * t.rotation() - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn wpr_examples() {
        assert_eq!(
            rotation_to_wpr(&Matrix3::identity()).unwrap(),
            OrientationWpr::new(0.0, 0.0, 0.0)
        );
        let rx = *RigidTransform::from_axis_angle(Vector3::x(), 90f64.to_radians()).rotation();
        let o = rotation_to_wpr(&rx).unwrap();
        assert_relative_eq!(o.w, 90.0, epsilon = 1e-9);
        assert_relative_eq!(o.p, 0.0, epsilon = 1e-9);
        assert_relative_eq!(o.r, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn gimbal_lock_is_signalled_with_canonical_decomposition() {
        for pitch in [90.0, -90.0] {
            let m = wpr_to_rotation(&OrientationWpr::new(30.0, pitch, 0.0));
            let lock = rotation_to_wpr(&m).unwrap_err();
            assert_eq!(lock.canonical.r, 0.0);
            assert_relative_eq!(lock.canonical.p, pitch, epsilon = 1e-6);
            assert!((lock.canonical.to_rotation() - m).amax() < 1e-6);
        }
    }

    #[test]
    fn canonical_range_is_half_open() {
        assert_eq!(OrientationWpr::new(-180.0, 540.0, 190.0), OrientationWpr::new(180.0, 180.0, -170.0));
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -3.2f64..3.2,
            prop::array::uniform3(-500.0f64..500.0),
        )
            .prop_filter_map("zero axis", |(axis, angle, t)| {
                let axis = Vector3::from(axis);
                (axis.norm() > 1e-3).then(|| {
                    let r = RigidTransform::from_axis_angle(axis, angle);
                    RigidTransform::new(*r.rotation(), Vector3::from(t)).unwrap()
                })
            })
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        prop::array::uniform3(-1000.0f64..1000.0).prop_map(Point3::from)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn double_inverse_is_identity(t in arb_transform()) {
            prop_assert!(t.inverse().inverse().max_abs_diff(&t) < 1e-9);
        }

        #[test]
        fn compose_matches_sequential_application(a in arb_transform(), b in arb_transform(), p in arb_point()) {
            let lhs = a.compose(&b).apply(&p);
            let rhs = a.apply(&b.apply(&p));
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(l.max_abs_diff(&r) < 1e-9);
        }

        #[test]
        fn transforms_preserve_distances(t in arb_transform(), a in arb_point(), b in arb_point()) {
            let d0 = (a - b).norm();
            let d1 = (t.apply(&a) - t.apply(&b)).norm();
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn wpr_round_trip(t in arb_transform()) {
            let m = *t.rotation();
            if let Ok(o) = rotation_to_wpr(&m) {
                prop_assume!(o.p.abs() < 89.9);
                prop_assert!((wpr_to_rotation(&o) - m).amax() < 1e-6);
                prop_assert!(o.w > -180.0 && o.w <= 180.0);
                prop_assert!(o.r > -180.0 && o.r <= 180.0);
            }
        }
    }

    #[test]
    fn organized_cloud_converts_nan_to_invalid() {
        let pts = vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(f64::NAN, 0.0, 1.0),
            Point3::new(1.0, 0.0, 1.0),
            Point3::new(1.0, 1.0, 1.0),
        ];
        let c = PointCloud::organized(2, 2, pts).unwrap();
        assert_eq!(c.valid_count(), 3);
        assert!(!c.is_valid(1));
        assert!(c.points()[1].coords.iter().all(|v| v.is_finite()));
        assert!(PointCloud::organized(3, 2, vec![Point3::origin(); 4]).is_err());
    }

    #[test]
    fn features_must_match_point_count() {
        let mut c = PointCloud::from_points(vec![Point3::origin(); 3]).unwrap();
        assert!(c.set_features(vec![Vector3::z(); 2], vec![0.0; 3]).is_err());
        c.set_features(vec![Vector3::new(0.0, 0.0, 2.0); 3], vec![0.0; 3]).unwrap();
        assert!(c.normals().unwrap().iter().all(|n| (n.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pixel_rounding_ties_go_up() {
        let k = CameraIntrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, width: 4, height: 4 };
        assert_eq!(k.pixel(&Point3::new(1.5, 0.5, 1.0)), Some((2, 1)));
        assert_eq!(k.pixel(&Point3::new(1.49, 0.0, 1.0)), Some((1, 0)));
        assert_eq!(k.pixel(&Point3::new(1.0, 1.0, -1.0)), None);
        assert_eq!(k.pixel(&Point3::new(3.6, 0.0, 1.0)), None);
    }
}
