//! Synthetic workpiece scans with analytic ground-truth seams.
//!
//! Workpieces are heightfields over a rectangular plate lying in the world
//! `z = 0` plane, resting on a workbench further below. A pinhole camera
//! above the plate looks straight down; every pixel ray is intersected with
//! the heightfield and perturbed along the ray by Gaussian depth noise. The
//! cloud is organized on the camera grid and each part of the workpiece gets
//! an exact mask.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Matrix3, Point3, PointCloud, RigidTransform, Vector3};
use crate::io::{MaskImage, SceneBundle};
use crate::path::SeamKind;
use crate::preprocess::AxisBox;

/// RNG algorithm recorded in generated manifests.
pub const GENERATOR_ID: &str = "seamforge-synth/1 rng=ChaCha8Rng(seed_from_u64) noise=normal-along-ray";

const BENCH_DEPTH_MM: f64 = 50.0;
/// Target ROI half-width on the base plate when suggesting a dilation.
const BAND_MM: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkpieceKind {
    Butt,
    TeeRibArray,
    CurvedSinusoid,
}

/// Fixture description. Missing fields take the defaults of the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkpieceSpec {
    pub kind: WorkpieceKind,
    /// Plate extent across the seams (world x), mm.
    pub width_mm: f64,
    /// Plate extent along the seams (world y), mm.
    pub length_mm: f64,
    pub ribs: usize,
    pub rib_spacing_mm: f64,
    /// Rib or wall height above the base plate, mm.
    pub height_mm: f64,
    /// Opening angle between the two surfaces meeting at a seam, degrees.
    pub dihedral_deg: f64,
    pub amplitude_mm: f64,
    pub wavelength_mm: f64,
    /// Phase of the curved seam at its start, radians.
    pub phase_rad: f64,
    /// Sample pitch on the base plate, mm.
    pub pitch_mm: f64,
    pub sigma_mm: f64,
    pub seed: u64,
    pub standoff_mm: f64,
    pub margin_px: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: WorkpieceKind,
    width_mm: Option<f64>,
    length_mm: Option<f64>,
    ribs: Option<usize>,
    rib_spacing_mm: Option<f64>,
    height_mm: Option<f64>,
    dihedral_deg: Option<f64>,
    amplitude_mm: Option<f64>,
    wavelength_mm: Option<f64>,
    phase_rad: Option<f64>,
    pitch_mm: Option<f64>,
    sigma_mm: Option<f64>,
    seed: Option<u64>,
    standoff_mm: Option<f64>,
    margin_px: Option<usize>,
}

impl WorkpieceSpec {
    pub fn defaults(kind: WorkpieceKind) -> Self {
        let base = Self {
            kind,
            width_mm: 300.0,
            length_mm: 200.0,
            ribs: 0,
            rib_spacing_mm: 0.0,
            height_mm: 0.0,
            dihedral_deg: 135.0,
            amplitude_mm: 0.0,
            wavelength_mm: 0.0,
            phase_rad: 0.0,
            pitch_mm: 1.5,
            sigma_mm: 0.1,
            seed: 1,
            standoff_mm: 1500.0,
            margin_px: 10,
        };
        match kind {
            WorkpieceKind::Butt => base,
            WorkpieceKind::TeeRibArray => Self::tee_rib_array(5),
            WorkpieceKind::CurvedSinusoid => Self {
                width_mm: 300.0,
                length_mm: 150.0,
                height_mm: 40.0,
                amplitude_mm: 20.0,
                wavelength_mm: 300.0,
                phase_rad: -PI / 2.0,
                ..base
            },
        }
    }

    pub fn butt() -> Self {
        Self::defaults(WorkpieceKind::Butt)
    }

    /// `ribs` triangular ribs across a large base plate; two seams per rib.
    pub fn tee_rib_array(ribs: usize) -> Self {
        Self {
            kind: WorkpieceKind::TeeRibArray,
            width_mm: 400.0 * ribs as f64,
            length_mm: 300.0,
            ribs,
            rib_spacing_mm: 400.0,
            height_mm: 60.0,
            dihedral_deg: 135.0,
            amplitude_mm: 0.0,
            wavelength_mm: 0.0,
            phase_rad: 0.0,
            pitch_mm: 1.5,
            sigma_mm: 0.1,
            seed: 1,
            standoff_mm: 3000.0,
            margin_px: 10,
        }
    }

    pub fn curved() -> Self {
        Self::defaults(WorkpieceKind::CurvedSinusoid)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec =
            serde_json::from_str(text).map_err(|e| Error::parse("workpiece spec", e.to_string()))?;
        let d = Self::defaults(raw.kind);
        let spec = Self {
            kind: raw.kind,
            width_mm: raw.width_mm.unwrap_or(d.width_mm),
            length_mm: raw.length_mm.unwrap_or(d.length_mm),
            ribs: raw.ribs.unwrap_or(d.ribs),
            rib_spacing_mm: raw.rib_spacing_mm.unwrap_or(d.rib_spacing_mm),
            height_mm: raw.height_mm.unwrap_or(d.height_mm),
            dihedral_deg: raw.dihedral_deg.unwrap_or(d.dihedral_deg),
            amplitude_mm: raw.amplitude_mm.unwrap_or(d.amplitude_mm),
            wavelength_mm: raw.wavelength_mm.unwrap_or(d.wavelength_mm),
            phase_rad: raw.phase_rad.unwrap_or(d.phase_rad),
            pitch_mm: raw.pitch_mm.unwrap_or(d.pitch_mm),
            sigma_mm: raw.sigma_mm.unwrap_or(d.sigma_mm),
            seed: raw.seed.unwrap_or(d.seed),
            standoff_mm: raw.standoff_mm.unwrap_or(d.standoff_mm),
            margin_px: raw.margin_px.unwrap_or(d.margin_px),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.pitch_mm) {
            return bad("pitch must be > 0");
        }
        if !(self.sigma_mm >= 0.0 && self.sigma_mm.is_finite()) {
            return bad("sigma must be >= 0");
        }
        if !pos(self.width_mm) || !pos(self.length_mm) || !pos(self.standoff_mm) {
            return bad("plate size and standoff must be > 0");
        }
        if !(self.dihedral_deg > 90.0 && self.dihedral_deg < 180.0) {
            return bad("dihedral must be in (90, 180) degrees");
        }
        match self.kind {
            WorkpieceKind::Butt => {}
            WorkpieceKind::TeeRibArray => {
                if self.ribs == 0 {
                    return bad("tee-rib-array needs at least one rib");
                }
                if !pos(self.height_mm) || !pos(self.rib_spacing_mm) {
                    return bad("rib height and spacing must be > 0");
                }
                let foot = 2.0 * self.height_mm / self.slope().tan();
                if foot >= self.rib_spacing_mm {
                    return bad("ribs overlap: spacing must exceed the rib footprint");
                }
                if self.rib_spacing_mm * (self.ribs as f64 - 1.0) + foot >= self.width_mm {
                    return bad("ribs do not fit on the plate");
                }
            }
            WorkpieceKind::CurvedSinusoid => {
                if !pos(self.height_mm) || !pos(self.wavelength_mm) || !(self.amplitude_mm >= 0.0) {
                    return bad("curved wall needs height, wavelength > 0 and amplitude >= 0");
                }
            }
        }
        if self.max_height() >= self.standoff_mm * 0.5 {
            return bad("camera too close to the workpiece");
        }
        Ok(())
    }

    /// Incline of the raised surface(s) from the base plane, radians.
    fn slope(&self) -> f64 {
        match self.kind {
            WorkpieceKind::Butt => (180.0 - self.dihedral_deg).to_radians() / 2.0,
            _ => (180.0 - self.dihedral_deg).to_radians(),
        }
    }

    fn max_height(&self) -> f64 {
        match self.kind {
            WorkpieceKind::Butt => 0.5 * self.width_mm * self.slope().tan(),
            _ => self.height_mm,
        }
    }

    /// Suggested ROI dilation for these masks: a band of about 15 mm on the
    /// base plate.
    pub fn suggested_dilate_px(&self) -> usize {
        (BAND_MM / self.pitch_mm).ceil() as usize
    }
}

/// Analytic ground-truth seam in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase")]
pub enum SeamCurve {
    Linear {
        start: [f64; 3],
        end: [f64; 3],
    },
    /// `origin + s·axis + amplitude·sin(2π s / wavelength + phase)·amp_dir`
    /// for `s ∈ [0, length]`; `axis` and `amp_dir` are orthonormal.
    Curved {
        origin: [f64; 3],
        axis: [f64; 3],
        amp_dir: [f64; 3],
        amplitude: f64,
        wavelength: f64,
        length: f64,
        phase: f64,
    },
}

fn v3(a: &[f64; 3]) -> Vector3 {
    Vector3::new(a[0], a[1], a[2])
}

fn arr(v: &Vector3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl SeamCurve {
    pub fn kind(&self) -> SeamKind {
        match self {
            SeamCurve::Linear { .. } => SeamKind::Linear,
            SeamCurve::Curved { .. } => SeamKind::Curved,
        }
    }

    /// Curve parameter domain: arc length for lines, axis abscissa otherwise.
    pub fn domain(&self) -> f64 {
        match self {
            SeamCurve::Linear { start, end } => (v3(end) - v3(start)).norm(),
            SeamCurve::Curved { length, .. } => *length,
        }
    }

    pub fn point_at(&self, s: f64) -> Point3 {
        match self {
            SeamCurve::Linear { start, end } => {
                let d = v3(end) - v3(start);
                let len = d.norm();
                Point3::from(v3(start) + if len > 0.0 { d * (s / len) } else { d })
            }
            SeamCurve::Curved { origin, axis, amp_dir, amplitude, wavelength, phase, .. } => Point3::from(
                v3(origin) + v3(axis) * s + v3(amp_dir) * (amplitude * (2.0 * PI * s / wavelength + phase).sin()),
            ),
        }
    }

    /// Minimum distance from `p` to the curve. Exact for lines; for the
    /// sinusoid a dense scan is refined by golden-section search.
    pub fn distance(&self, p: &Point3) -> f64 {
        match self {
            SeamCurve::Linear { start, end } => {
                let a = v3(start);
                let d = v3(end) - a;
                let len2 = d.norm_squared();
                let t = if len2 > 0.0 { ((p.coords - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                (p.coords - (a + d * t)).norm()
            }
            SeamCurve::Curved { length, wavelength, .. } => {
                let dist2 = |s: f64| (p - self.point_at(s)).norm_squared();
                let n = ((length / wavelength) * 64.0).ceil().max(64.0) as usize;
                let h = length / n as f64;
                let best = (0..=n)
                    .map(|i| i as f64 * h)
                    .min_by(|a, b| dist2(*a).total_cmp(&dist2(*b)))
                    .unwrap();
                let (mut a, mut b) = ((best - h).max(0.0), (best + h).min(*length));
                let g = (5f64.sqrt() - 1.0) / 2.0;
                let mut c = b - g * (b - a);
                let mut d = a + g * (b - a);
                let (mut fc, mut fd) = (dist2(c), dist2(d));
                while b - a > 1e-9 {
                    if fc < fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - g * (b - a);
                        fc = dist2(c);
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + g * (b - a);
                        fd = dist2(d);
                    }
                }
                dist2(0.5 * (a + b)).sqrt()
            }
        }
    }

    /// Points along the curve at parameter spacing `step`, ends included.
    pub fn sample(&self, step: f64) -> Vec<Point3> {
        let len = self.domain();
        let n = ((len / step).ceil() as usize).max(1);
        (0..=n).map(|i| self.point_at(len * i as f64 / n as f64)).collect()
    }

    pub fn transformed(&self, t: &RigidTransform) -> SeamCurve {
        match self {
            SeamCurve::Linear { start, end } => SeamCurve::Linear {
                start: arr(&t.apply(&Point3::from(v3(start))).coords),
                end: arr(&t.apply(&Point3::from(v3(end))).coords),
            },
            SeamCurve::Curved { origin, axis, amp_dir, amplitude, wavelength, length, phase } => SeamCurve::Curved {
                origin: arr(&t.apply(&Point3::from(v3(origin))).coords),
                axis: arr(&t.apply_vector(&v3(axis))),
                amp_dir: arr(&t.apply_vector(&v3(amp_dir))),
                amplitude: *amplitude,
                wavelength: *wavelength,
                length: *length,
                phase: *phase,
            },
        }
    }
}

/// Ground truth of a generated scene, in the world frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub seams: Vec<SeamCurve>,
    /// Surface id per pixel (row-major); `-1` for workbench and plate sides.
    pub surface_ids: Vec<i32>,
    /// Mask (part) index of every surface id.
    pub part_of_surface: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthDoc {
    seams: Vec<SeamCurve>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TruthDoc { seams: self.seams.clone() }).expect("truth serializes") + "\n"
    }

    /// Seams only; per-pixel ids are not part of the file.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TruthDoc = serde_json::from_str(text).map_err(|e| Error::parse("ground truth", e.to_string()))?;
        Ok(Self {
            seams: doc.seams,
            ..Default::default()
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn transformed(&self, t: &RigidTransform) -> GroundTruth {
        GroundTruth {
            seams: self.seams.iter().map(|s| s.transformed(t)).collect(),
            ..self.clone()
        }
    }
}

/// Minimum distance from `p` to any ground-truth seam.
pub fn point_to_seam_distance(p: &Point3, truth: &GroundTruth) -> f64 {
    truth
        .seams
        .iter()
        .map(|s| s.distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub scene: SceneBundle,
    pub truth: GroundTruth,
    /// Camera-frame box keeping the workpiece and dropping the workbench.
    pub passthrough: AxisBox,
    pub dilate_px: usize,
}

/// Heightfield of one workpiece in world coordinates.
struct Heightfield<'a> {
    spec: &'a WorkpieceSpec,
    tan: f64,
    half_w: f64,
    half_l: f64,
}

impl Heightfield<'_> {
    fn rib_centre(&self, i: usize) -> f64 {
        (i as f64 - (self.spec.ribs as f64 - 1.0) / 2.0) * self.spec.rib_spacing_mm
    }

    fn foot(&self, y: f64) -> f64 {
        let s = y + self.half_l;
        self.spec.amplitude_mm * (2.0 * PI * s / self.spec.wavelength_mm + self.spec.phase_rad).sin()
    }

    /// Height and surface id at `(x, y)`; the bench has id `-1`.
    fn at(&self, x: f64, y: f64) -> (f64, i32) {
        if x.abs() > self.half_w || y.abs() > self.half_l {
            return (-BENCH_DEPTH_MM, -1);
        }
        match self.spec.kind {
            WorkpieceKind::Butt => {
                if x < 0.0 {
                    (-x * self.tan, 0)
                } else {
                    (x * self.tan, 1)
                }
            }
            WorkpieceKind::TeeRibArray => {
                let b = self.spec.height_mm / self.tan;
                for i in 0..self.spec.ribs {
                    let c = self.rib_centre(i);
                    if (x - c).abs() < b {
                        let id = if x < c { 1 + 2 * i } else { 2 + 2 * i };
                        return ((b - (x - c).abs()) * self.tan, id as i32);
                    }
                }
                (0.0, 0)
            }
            WorkpieceKind::CurvedSinusoid => {
                let rise = (x - self.foot(y)) * self.tan;
                if rise <= 0.0 {
                    (0.0, 0)
                } else if rise < self.spec.height_mm {
                    (rise, 1)
                } else {
                    (self.spec.height_mm, 2)
                }
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        match self.spec.kind {
            // |∂x/∂y| of the wall foot adds to the slope along y
            WorkpieceKind::CurvedSinusoid => {
                self.tan * (1.0 + self.spec.amplitude_mm * 2.0 * PI / self.spec.wavelength_mm)
            }
            _ => self.tan,
        }
    }

    fn surface_count(&self) -> usize {
        match self.spec.kind {
            WorkpieceKind::Butt => 2,
            WorkpieceKind::TeeRibArray => 1 + 2 * self.spec.ribs,
            WorkpieceKind::CurvedSinusoid => 3,
        }
    }

    fn part_of_surface(&self) -> Vec<usize> {
        match self.spec.kind {
            WorkpieceKind::Butt => vec![0, 1],
            WorkpieceKind::TeeRibArray => (0..self.surface_count()).map(|s| s.div_ceil(2)).collect(),
            WorkpieceKind::CurvedSinusoid => vec![0, 1, 1],
        }
    }

    fn seams(&self) -> Vec<SeamCurve> {
        let (l0, l1) = (-self.half_l, self.half_l);
        match self.spec.kind {
            WorkpieceKind::Butt => vec![SeamCurve::Linear { start: [0.0, l0, 0.0], end: [0.0, l1, 0.0] }],
            WorkpieceKind::TeeRibArray => {
                let b = self.spec.height_mm / self.tan;
                (0..self.spec.ribs)
                    .flat_map(|i| {
                        let c = self.rib_centre(i);
                        [c - b, c + b].map(|x| SeamCurve::Linear { start: [x, l0, 0.0], end: [x, l1, 0.0] })
                    })
                    .collect()
            }
            WorkpieceKind::CurvedSinusoid => vec![SeamCurve::Curved {
                origin: [0.0, l0, 0.0],
                axis: [0.0, 1.0, 0.0],
                amp_dir: [1.0, 0.0, 0.0],
                amplitude: self.spec.amplitude_mm,
                wavelength: self.spec.wavelength_mm,
                length: self.spec.length_mm,
                phase: self.spec.phase_rad,
            }],
        }
    }

    /// First intersection of the ray `o + t·d` with the heightfield.
    fn cast(&self, o: &Point3, d: &Vector3) -> (Point3, i32) {
        let f = |t: f64| {
            let q = o + d * t;
            let (h, id) = self.at(q.x, q.y);
            (q.z - h, id)
        };
        let dz = -d.z;
        let dxy = (d.x * d.x + d.y * d.y).sqrt();
        let rate = dz + self.lipschitz() * dxy;
        let mut t = (o.z - self.spec.max_height() - 1.0) / dz;
        let mut prev = t;
        for _ in 0..10_000 {
            let (g, id) = f(t);
            if g < 0.0 {
                // crossed a discontinuity (plate edge): bisect the jump
                let (mut a, mut b) = (prev, t);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if f(m).0 < 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let q = o + d * a;
                let id = if self.at(q.x, q.y).1 >= 0 && (q.z - self.at(q.x, q.y).0).abs() < 1e-6 {
                    self.at(q.x, q.y).1
                } else {
                    -1
                };
                return (q, id);
            }
            if g < 1e-10 {
                return (o + d * t, id);
            }
            prev = t;
            t += g / rate;
        }
        let q = o + d * t;
        (q, self.at(q.x, q.y).1)
    }
}

/// Renders the organized cloud, masks and ground truth for `spec`.
pub fn generate(spec: &WorkpieceSpec) -> Result<GeneratedScene> {
    spec.validate()?;
    let hf = Heightfield {
        spec,
        tan: spec.slope().tan(),
        half_w: spec.width_mm / 2.0,
        half_l: spec.length_mm / 2.0,
    };
    let f = spec.standoff_mm / spec.pitch_mm;
    let width = (spec.width_mm / spec.pitch_mm).ceil() as usize + 2 * spec.margin_px;
    let height = (spec.length_mm / spec.pitch_mm).ceil() as usize + 2 * spec.margin_px;
    let intrinsics = CameraIntrinsics {
        fx: f,
        fy: f,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
        width,
        height,
    };
    intrinsics.validate()?;

    // camera above the plate looking down: x_c = x_w, y_c = −y_w, z_c = standoff − z_w
    let world_from_camera = RigidTransform::new(
        Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
        Vector3::new(0.0, 0.0, spec.standoff_mm),
    )?;
    let camera_from_world = world_from_camera.inverse();
    let eye = Point3::new(0.0, 0.0, spec.standoff_mm);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut points = Vec::with_capacity(width * height);
    let mut ids = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            let ray_c = intrinsics.ray(u as f64, v as f64);
            let ray_w = world_from_camera.apply_vector(&ray_c);
            let (hit, id) = hf.cast(&eye, &ray_w);
            let e: f64 = noise.sample(&mut rng);
            points.push(camera_from_world.apply(&(hit + ray_w * (spec.sigma_mm * e))));
            ids.push(id);
        }
    }
    let part_of_surface = hf.part_of_surface();
    let parts = part_of_surface.iter().max().map_or(0, |m| m + 1);
    let masks = (0..parts)
        .map(|k| {
            MaskImage::from_fn(width, height, |u, v| {
                let id = ids[v * width + u];
                id >= 0 && part_of_surface[id as usize] == k
            })
        })
        .collect();

    let world_from_tool = RigidTransform::from_axis_angle(Vector3::z(), 30f64.to_radians())
        .compose(&RigidTransform::from_translation(Vector3::new(400.0, -200.0, 150.0)));
    let tool_from_camera = world_from_tool.inverse().compose(&world_from_camera);

    let scene = SceneBundle {
        cloud: PointCloud::organized(height, width, points)?,
        masks,
        intrinsics: Some(intrinsics),
        tool_from_camera,
        world_from_tool,
        generator: Some(format!("{GENERATOR_ID} seed={}", spec.seed)),
    };
    let top = spec.standoff_mm - spec.max_height() - 5.0;
    let passthrough = AxisBox::new([-1e5, -1e5, top], [1e5, 1e5, spec.standoff_mm + 2.0])?;
    Ok(GeneratedScene {
        scene,
        truth: GroundTruth {
            seams: hf.seams(),
            surface_ids: ids,
            part_of_surface,
        },
        passthrough,
        dilate_px: spec.suggested_dilate_px(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tee(ribs: usize) -> WorkpieceSpec {
        WorkpieceSpec {
            width_mm: 200.0 * ribs as f64,
            length_mm: 60.0,
            rib_spacing_mm: 200.0,
            height_mm: 30.0,
            pitch_mm: 2.0,
            ..WorkpieceSpec::tee_rib_array(ribs)
        }
    }

    #[test]
    fn butt_truth_and_masks() {
        let spec = WorkpieceSpec { sigma_mm: 0.0, length_mm: 40.0, ..WorkpieceSpec::butt() };
        let g = generate(&spec).unwrap();
        assert_eq!(g.truth.seams.len(), 1);
        assert_eq!(g.scene.masks.len(), 2);
        for p in g.truth.seams[0].sample(1.0) {
            assert!(p.x.abs() < 1e-12 && p.z.abs() < 1e-12);
            assert!(point_to_seam_distance(&p, &g.truth) < 1e-12);
        }
        // noise-free points lie on their surface
        let to_world = g.scene.world_from_camera();
        let tan = spec.slope().tan();
        for (i, p) in g.scene.cloud.points().iter().enumerate() {
            let w = to_world.apply(p);
            match g.truth.surface_ids[i] {
                0 | 1 => assert!((w.z - w.x.abs() * tan).abs() < 1e-6),
                _ => {}
            }
        }
    }

    #[test]
    fn tee_has_two_seams_per_rib() {
        let g = generate(&small_tee(5)).unwrap();
        assert_eq!(g.truth.seams.len(), 10);
        assert_eq!(g.scene.masks.len(), 6);
        assert_eq!(g.truth.part_of_surface.len(), 11);
    }

    #[test]
    fn masks_match_surface_ids() {
        let g = generate(&small_tee(2)).unwrap();
        let w = g.scene.masks[0].width();
        for (i, &id) in g.truth.surface_ids.iter().enumerate() {
            let (u, v) = (i % w, i / w);
            for (k, m) in g.scene.masks.iter().enumerate() {
                let want = id >= 0 && g.truth.part_of_surface[id as usize] == k;
                assert_eq!(m.get(u, v), want);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small_tee(1)).unwrap();
        let b = generate(&small_tee(1)).unwrap();
        assert_eq!(a.scene, b.scene);
        let c = generate(&WorkpieceSpec { seed: 2, ..small_tee(1) }).unwrap();
        assert_ne!(a.scene.cloud, c.scene.cloud);
    }

    #[test]
    fn curved_seam_lies_on_the_sinusoid() {
        let spec = WorkpieceSpec {
            amplitude_mm: 10.0,
            wavelength_mm: 60.0,
            length_mm: 60.0,
            sigma_mm: 0.0,
            ..WorkpieceSpec::curved()
        };
        let g = generate(&spec).unwrap();
        assert_eq!(g.truth.seams.len(), 1);
        assert_eq!(g.truth.seams[0].kind(), SeamKind::Curved);
        for p in g.truth.seams[0].sample(0.5) {
            let s = p.y + 30.0;
            let x = 10.0 * (2.0 * PI * s / 60.0 - PI / 2.0).sin();
            assert!((p.x - x).abs() < 1e-9 && p.z.abs() < 1e-12);
            assert!(point_to_seam_distance(&p, &g.truth) < 1e-9);
        }
    }

    #[test]
    fn distance_examples() {
        let t = GroundTruth {
            seams: vec![SeamCurve::Linear { start: [-5.0, 0.0, 0.0], end: [5.0, 0.0, 0.0] }],
            ..Default::default()
        };
        assert_eq!(point_to_seam_distance(&Point3::new(0.0, 0.0, 1.0), &t), 1.0);
        assert_eq!(point_to_seam_distance(&Point3::new(2.0, 0.0, 0.0), &t), 0.0);
        assert_eq!(point_to_seam_distance(&Point3::new(8.0, 4.0, 0.0), &t), 5.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            WorkpieceSpec { pitch_mm: 0.0, ..WorkpieceSpec::butt() },
            WorkpieceSpec { sigma_mm: -1.0, ..WorkpieceSpec::butt() },
            WorkpieceSpec { ribs: 0, ..WorkpieceSpec::tee_rib_array(1) },
            WorkpieceSpec { rib_spacing_mm: 50.0, ..WorkpieceSpec::tee_rib_array(3) },
            WorkpieceSpec { dihedral_deg: 60.0, ..WorkpieceSpec::butt() },
        ];
        for s in bad {
            assert!(matches!(generate(&s), Err(Error::InvalidSpec(_))), "{s:?}");
        }
        assert!(WorkpieceSpec::from_json(r#"{"kind":"tee-rib-array","ribz":3}"#).is_err());
        let s = WorkpieceSpec::from_json(r#"{"kind":"tee-rib-array","ribs":1,"width_mm":500}"#).unwrap();
        assert_eq!(s.ribs, 1);
        assert_eq!(s.height_mm, 60.0);
    }

    #[test]
    fn truth_json_round_trip() {
        let g = generate(&WorkpieceSpec { length_mm: 30.0, ..WorkpieceSpec::curved() }).unwrap();
        let back = GroundTruth::from_json(&g.truth.to_json()).unwrap();
        assert_eq!(back.seams, g.truth.seams);
    }
}
