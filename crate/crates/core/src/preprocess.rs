//! Pass-through filtering and voxel-grid (centroid) downsampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Vector3};

/// Inclusive axis-aligned box in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl AxisBox {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    /// Parses `xmin,xmax,ymin,ymax,zmin,zmax`.
    pub fn parse(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::parse("passthrough box", e.to_string()))?;
        if vals.len() != 6 {
            return Err(Error::parse(
                "passthrough box",
                format!("expected 6 comma separated values, got {}", vals.len()),
            ));
        }
        Self::new([vals[0], vals[2], vals[4]], [vals[1], vals[3], vals[5]])
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..3).all(|a| {
            self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] <= self.max[a]
        });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "passthrough box needs finite min <= max per axis, got {self:?}"
            )))
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }
}

/// Keeps valid points inside `bounds`, in input order. The result is unorganized.
pub fn passthrough_filter(cloud: &PointCloud, bounds: &AxisBox) -> PointCloud {
    let kept = cloud
        .valid_points()
        .filter(|p| bounds.contains(p))
        .copied()
        .collect();
    PointCloud::from_points(kept).expect("points of a valid cloud are finite")
}

/// Voxel grid with edge `r` anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridSpec {
    pub r: f64,
    pub origin: Point3,
}

impl VoxelGridSpec {
    /// Grid anchored at the componentwise minimum of the cloud's valid points.
    pub fn for_cloud(cloud: &PointCloud, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidConfig(format!("voxel size must be > 0, got {r}")));
        }
        let (origin, _) = cloud.bounds().ok_or(Error::EmptyCloud)?;
        Ok(Self { r, origin })
    }

    /// Axis-aligned bounds `[lo, hi)` of a voxel.
    pub fn voxel_bounds(&self, h: (i64, i64, i64)) -> (Point3, Point3) {
        let lo = self.origin.coords + Vector3::new(h.0 as f64, h.1 as f64, h.2 as f64) * self.r;
        (Point3::from(lo), Point3::from(lo.add_scalar(self.r)))
    }
}

/// `h_k = ⌊(p_k − origin_k) / r⌋` per axis.
pub fn voxel_index(p: &Point3, spec: &VoxelGridSpec) -> (i64, i64, i64) {
    let h = |k: usize| ((p[k] - spec.origin[k]) / spec.r).floor() as i64;
    (h(0), h(1), h(2))
}

/// Replaces the points of each occupied voxel by their centroid. Output is
/// ordered lexicographically by voxel index.
pub fn voxel_downsample(cloud: &PointCloud, r: f64) -> Result<PointCloud> {
    let spec = VoxelGridSpec::for_cloud(cloud, r)?;
    voxel_downsample_with(cloud, &spec)
}

/// [`voxel_downsample`] on an explicit grid. Sums are accumulated in input
/// order, so the result is bitwise reproducible.
pub fn voxel_downsample_with(cloud: &PointCloud, spec: &VoxelGridSpec) -> Result<PointCloud> {
    if cloud.valid_count() == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut cells: BTreeMap<(i64, i64, i64), (Vector3, usize)> = BTreeMap::new();
    for p in cloud.valid_points() {
        let cell = cells
            .entry(voxel_index(p, spec))
            .or_insert((Vector3::zeros(), 0));
        cell.0 += p.coords;
        cell.1 += 1;
    }
    let out = cells
        .into_values()
        .map(|(sum, n)| Point3::from(sum / n as f64))
        .collect();
    PointCloud::from_points(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn spec(r: f64) -> VoxelGridSpec {
        VoxelGridSpec {
            r,
            origin: Point3::origin(),
        }
    }

    #[test]
    fn voxel_index_floor_semantics() {
        assert_eq!(voxel_index(&Point3::origin(), &spec(3.0)), (0, 0, 0));
        assert_eq!(voxel_index(&Point3::new(7.5, 0.0, 0.0), &spec(3.0)), (2, 0, 0));
        assert_eq!(voxel_index(&Point3::new(3.0, 3.0, 3.0), &spec(3.0)), (1, 1, 1));
        let shifted = VoxelGridSpec {
            r: 3.0,
            origin: Point3::new(-10.0, 5.0, 100.0),
        };
        assert_eq!(voxel_index(&Point3::new(-2.5, 5.0, 103.0), &shifted), (2, 0, 1));
    }

    #[test]
    fn single_voxel_collapses_to_centroid() {
        let c = PointCloud::from_points(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.5),
        ])
        .unwrap();
        let d = voxel_downsample(&c, 3.0).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.points()[0] - Point3::new(1.0 / 3.0, 2.0 / 3.0, 0.5 / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn sparse_lattice_is_only_reordered() {
        let pts: Vec<Point3> = (0..4)
            .rev()
            .flat_map(|i| (0..3).map(move |j| Point3::new(i as f64 * 5.0, j as f64 * 4.0, 0.0)))
            .collect();
        let c = PointCloud::from_points(pts.clone()).unwrap();
        let d = voxel_downsample(&c, 3.0).unwrap();
        assert_eq!(d.len(), pts.len());
        let mut expected = pts;
        expected.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        assert_eq!(d.points(), &expected[..]);
    }

    #[test]
    fn empty_and_bad_size_rejected() {
        let empty = PointCloud::default();
        assert!(matches!(voxel_downsample(&empty, 3.0), Err(Error::EmptyCloud)));
        let one = PointCloud::from_points(vec![Point3::origin()]).unwrap();
        assert!(voxel_downsample(&one, 0.0).is_err());
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::from_points(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-30.0..30.0),
                        rng.random_range(400.0..420.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn matches_hash_grouping_oracle() {
        let cloud = random_cloud(10_000, 7);
        let out = voxel_downsample(&cloud, 3.0).unwrap();

        // independent grouping with a hash map and a separately computed minimum
        let min = cloud.points().iter().fold([f64::MAX; 3], |m, p| {
            [m[0].min(p.x), m[1].min(p.y), m[2].min(p.z)]
        });
        let mut groups: HashMap<[i64; 3], Vec<Point3>> = HashMap::new();
        for p in cloud.points() {
            let key = [0, 1, 2].map(|k| ((p[k] - min[k]) / 3.0).floor() as i64);
            groups.entry(key).or_default().push(*p);
        }
        assert_eq!(out.len(), groups.len());
        let mut keys: Vec<_> = groups.keys().copied().collect();
        keys.sort();
        for (key, got) in keys.iter().zip(out.points()) {
            let members = &groups[key];
            let mean = members.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / members.len() as f64;
            assert!((got.coords - mean).amax() < 1e-12);
        }
    }

    #[test]
    fn centroids_stay_inside_their_voxel_and_regrid_is_stable() {
        let cloud = random_cloud(5_000, 11);
        let grid = VoxelGridSpec::for_cloud(&cloud, 2.5).unwrap();
        let once = voxel_downsample_with(&cloud, &grid).unwrap();
        for p in once.points() {
            let (lo, hi) = grid.voxel_bounds(voxel_index(p, &grid));
            assert!((0..3).all(|k| lo[k] <= p[k] && p[k] < hi[k]));
        }
        let twice = voxel_downsample_with(&once, &grid).unwrap();
        assert_eq!(once.len(), twice.len());
        for (a, b) in once.points().iter().zip(twice.points()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn voxel_count_non_increasing_over_sweep() {
        for seed in 0..5 {
            let cloud = random_cloud(20_000, seed);
            let counts: Vec<usize> = (1..=10)
                .map(|r| voxel_downsample(&cloud, r as f64).unwrap().len())
                .collect();
            assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        }
    }

    #[test]
    fn passthrough_examples() {
        let cloud = random_cloud(2_000, 3);
        let all = AxisBox::new([-100.0, -100.0, 0.0], [100.0, 100.0, 1000.0]).unwrap();
        assert_eq!(passthrough_filter(&cloud, &all).points(), cloud.points());
        let none = AxisBox::new([500.0; 3], [600.0; 3]).unwrap();
        assert!(passthrough_filter(&cloud, &none).is_empty());

        let b = AxisBox::parse("-10,20,-5,5,405,415").unwrap();
        let kept = passthrough_filter(&cloud, &b);
        let oracle: Vec<Point3> = cloud
            .points()
            .iter()
            .filter(|p| p.x >= -10.0 && p.x <= 20.0 && p.y >= -5.0 && p.y <= 5.0 && p.z >= 405.0 && p.z <= 415.0)
            .copied()
            .collect();
        assert_eq!(kept.points(), &oracle[..]);
        assert!(kept.organization().is_none());
    }

    #[test]
    fn box_parse_errors() {
        assert!(AxisBox::parse("1,2,3").is_err());
        assert!(AxisBox::parse("1,0,0,1,0,1").is_err());
        assert!(AxisBox::parse("a,b,c,d,e,f").is_err());
    }
}
