use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seamforge::geometry::{Point3, PointCloud, Vector3};
use seamforge::kdtree::KdTree;
use seamforge::preprocess::{voxel_downsample, voxel_index, VoxelGridSpec};

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, quantize: bool) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let mut c = [0.0f64; 3];
            for v in &mut c {
                *v = rng.random_range(-50.0..50.0);
                if quantize {
                    *v = v.round();
                }
            }
            Point3::new(c[0], c[1], c[2])
        })
        .collect()
}

/// Sorted by (distance, index), exactly as the tree reports them.
fn brute(points: &[Point3], q: &Point3) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - q).norm(), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all
}

#[test]
fn kdtree_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..100 {
        // every fourth trial sits on an integer lattice to force distance ties
        let points = random_cloud(&mut rng, 500, trial % 4 == 0);
        let tree = KdTree::from_points(&points).unwrap();
        assert!(tree.splits_are_consistent());
        for _ in 0..50 {
            let q = Point3::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
            let expect = brute(&points, &q);

            let k = rng.random_range(1..=40);
            let got = tree.knn(&q, k);
            assert_eq!(got.len(), k);
            for (g, e) in got.iter().zip(&expect) {
                assert_eq!(g.index, e.1, "trial {trial} knn index");
                assert!((g.distance - e.0).abs() <= 1e-12);
            }
            assert!(got.windows(2).all(|w| w[0].distance <= w[1].distance));

            let r = rng.random_range(0.0..30.0);
            let mut got: Vec<usize> = tree.radius_search(&q, r).iter().map(|n| n.index).collect();
            let mut want: Vec<usize> = expect.iter().filter(|e| e.0 <= r).map(|e| e.1).collect();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want, "trial {trial} radius {r}");
        }
    }
}

#[test]
fn every_index_lands_in_exactly_one_leaf() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points = random_cloud(&mut rng, 2000, false);
    let tree = KdTree::from_points(&points).unwrap();
    let mut seen = vec![0usize; points.len()];
    for leaf in tree.leaves() {
        for &i in leaf {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn hundred_thousand_point_build_and_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points = random_cloud(&mut rng, 100_000, false);
    let t = Instant::now();
    let tree = KdTree::from_points(&points).unwrap();
    let mut total = 0;
    for _ in 0..1000 {
        let q = Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        total += tree.knn(&q, 30).len();
        total += tree.radius_search(&q, 3.0).len();
    }
    assert!(total >= 30_000);
    assert!(t.elapsed().as_secs_f64() < 60.0);
}

fn hash_oracle(points: &[Point3], r: f64) -> Vec<((i64, i64, i64), Point3)> {
    let origin = points.iter().fold(Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), |m, p| {
        Point3::new(m.x.min(p.x), m.y.min(p.y), m.z.min(p.z))
    });
    let mut groups: HashMap<(i64, i64, i64), (Vector3, usize)> = HashMap::new();
    for p in points {
        let key = (
            ((p.x - origin.x) / r).floor() as i64,
            ((p.y - origin.y) / r).floor() as i64,
            ((p.z - origin.z) / r).floor() as i64,
        );
        let e = groups.entry(key).or_insert((Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += 1;
    }
    let mut out: Vec<_> = groups.into_iter().map(|(k, (s, n))| (k, Point3::from(s / n as f64))).collect();
    out.sort_by_key(|e| e.0);
    out
}

#[test]
fn voxel_downsample_matches_hash_grouping() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let points = random_cloud(&mut rng, 2000, trial % 5 == 0);
        let r = rng.random_range(0.5..12.0);
        let cloud = PointCloud::from_points(points.clone()).unwrap();
        let got = voxel_downsample(&cloud, r).unwrap();
        let want = hash_oracle(&points, r);
        assert_eq!(got.len(), want.len(), "trial {trial}");
        for (g, (_, w)) in got.points().iter().zip(&want) {
            assert!((g - w).norm() <= 1e-12, "trial {trial}: {g} vs {w}");
        }
    }
}

#[test]
fn voxel_index_floor_boundaries() {
    let spec = VoxelGridSpec { r: 3.0, origin: Point3::new(-1.0, 0.0, 2.0) };
    let cases = [
        (Point3::new(-1.0, 0.0, 2.0), (0, 0, 0)),
        (Point3::new(2.0, 3.0, 5.0), (1, 1, 1)),
        (Point3::new(2.0 - 1e-12, 3.0 - 1e-12, 5.0 - 1e-12), (0, 0, 0)),
        (Point3::new(-1.0 - 1e-9, -1e-9, 2.0 - 1e-9), (-1, -1, -1)),
        (Point3::new(-4.0, -3.0, -1.0), (-1, -1, -1)),
        (Point3::new(-4.0 - 1e-9, 29.0, 32.0), (-2, 9, 10)),
    ];
    for (p, want) in cases {
        assert_eq!(voxel_index(&p, &spec), want, "{p}");
    }
}
