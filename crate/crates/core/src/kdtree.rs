//! Static 3D KD-tree for k-nearest-neighbour and fixed-radius queries.
//!
//! Each internal node splits on the axis of largest coordinate variance at
//! the median point; leaves hold at most [`LEAF_SIZE`] indices. All query
//! results are ordered by `(distance, index)`, which makes every search fully
//! deterministic even with duplicate points.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Indexes the valid points of `cloud`; query results refer to cloud indices.
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        let order: Vec<usize> = cloud.valid_indices().collect();
        Self::build_from(cloud.points().to_vec(), order)
    }

    pub fn from_points(points: &[Point3]) -> Result<Self> {
        Self::build_from(points.to_vec(), (0..points.len()).collect())
    }

    fn build_from(points: Vec<Point3>, mut order: Vec<usize>) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut nodes = Vec::with_capacity(2 * order.len() / LEAF_SIZE + 1);
        build_node(&points, &mut order, 0, &mut nodes);
        Ok(Self {
            points,
            order,
            nodes,
        })
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn point(&self, index: usize) -> &Point3 {
        &self.points[index]
    }

    /// Index slices held by each leaf, in tree order.
    pub fn leaves(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { start, end } => Some(&self.order[*start..*end]),
            Node::Split { .. } => None,
        })
    }

    /// Checks that every split plane separates its two subtrees.
    pub fn splits_are_consistent(&self) -> bool {
        self.check_node(0).is_some()
    }

    fn check_node(&self, id: usize) -> Option<(Point3, Point3)> {
        match &self.nodes[id] {
            Node::Leaf { start, end } => {
                let mut it = self.order[*start..*end].iter().map(|&i| self.points[i]);
                let first = it.next()?;
                Some(it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p))))
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let (llo, lhi) = self.check_node(*left)?;
                let (rlo, rhi) = self.check_node(*right)?;
                (lhi[*axis] <= *value && rlo[*axis] >= *value)
                    .then(|| (llo.inf(&rlo), lhi.sup(&rhi)))
            }
        }
    }

    /// The `min(k, len)` nearest points, ascending by distance then index.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_node(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out.into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.dist2.sqrt(),
            })
            .collect()
    }

    fn knn_node(&self, id: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match &self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let c = Candidate {
                        dist2: (self.points[i] - q).norm_squared(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.knn_node(near, q, k, heap);
                // Inclusive so equal-distance points stay reachable for index tie-breaks.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.knn_node(far, q, k, heap);
                }
            }
        }
    }

    /// All points within `radius` (inclusive), ascending by distance then index.
    pub fn radius_search(&self, query: &Point3, radius: f64) -> Vec<Neighbor> {
        let mut hits = Vec::new();
        self.radius_node(0, query, radius, &mut hits);
        hits.sort_unstable();
        hits.into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.dist2.sqrt(),
            })
            .collect()
    }

    fn radius_node(&self, id: usize, q: &Point3, radius: f64, hits: &mut Vec<Candidate>) {
        match &self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let dist2 = (self.points[i] - q).norm_squared();
                    if dist2.sqrt() <= radius {
                        hits.push(Candidate { dist2, index: i });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                if diff <= radius {
                    self.radius_node(*left, q, radius, hits);
                }
                if -diff <= radius {
                    self.radius_node(*right, q, radius, hits);
                }
            }
        }
    }
}

fn build_node(points: &[Point3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let axis = widest_variance_axis(points, order);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(points, lo, offset, nodes);
    let right = build_node(points, hi, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

fn widest_variance_axis(points: &[Point3], order: &[usize]) -> usize {
    let n = order.len() as f64;
    let mut mean = [0.0; 3];
    for &i in order {
        for (a, m) in mean.iter_mut().enumerate() {
            *m += points[i][a];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for &i in order {
        for (a, v) in var.iter_mut().enumerate() {
            let d = points[i][a] - mean[a];
            *v += d * d;
        }
    }
    let mut best = 0;
    for a in 1..3 {
        if var[a] > var[best] {
            best = a;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_tree() {
        let t = KdTree::from_points(&[Point3::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(t.leaves().count(), 1);
        let hit = t.knn(&Point3::new(1.0, 2.0, 3.0), 1);
        assert_eq!(hit, vec![Neighbor { index: 0, distance: 0.0 }]);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(matches!(KdTree::from_points(&[]), Err(Error::EmptyCloud)));
        let all_invalid = PointCloud::organized(1, 2, vec![Point3::new(f64::NAN, 0.0, 0.0); 2]).unwrap();
        assert!(matches!(KdTree::build(&all_invalid), Err(Error::EmptyCloud)));
    }

    #[test]
    fn duplicates_are_all_indexed_and_tie_broken_by_index() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 40];
        let t = KdTree::from_points(&pts).unwrap();
        assert_eq!(t.len(), 40);
        let hits = t.knn(&Point3::origin(), 5);
        let idx: Vec<usize> = hits.iter().map(|h| h.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert!(t.splits_are_consistent());
    }

    #[test]
    fn k_larger_than_size_returns_everything_sorted() {
        let pts: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let t = KdTree::from_points(&pts).unwrap();
        let hits = t.knn(&Point3::new(-1.0, 0.0, 0.0), 50);
        assert_eq!(hits.len(), 5);
        assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn radius_edge_cases() {
        let pts: Vec<Point3> = (0..27)
            .map(|i| Point3::new((i % 3) as f64, ((i / 3) % 3) as f64, (i / 9) as f64))
            .collect();
        let t = KdTree::from_points(&pts).unwrap();
        assert!(t.radius_search(&Point3::new(0.5, 0.5, 0.5), 0.3).is_empty());
        assert_eq!(t.radius_search(&Point3::new(1.0, 1.0, 1.0), 10.0).len(), 27);
        // inclusive boundary
        assert_eq!(t.radius_search(&Point3::new(0.0, 0.0, 0.0), 1.0).len(), 4);
    }

    #[test]
    fn organized_invalid_points_are_skipped() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(f64::NAN, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
        ];
        let cloud = PointCloud::organized(2, 2, pts).unwrap();
        let t = KdTree::build(&cloud).unwrap();
        assert_eq!(t.len(), 3);
        let hits = t.knn(&Point3::new(0.1, 0.0, 0.0), 4);
        assert!(hits.iter().all(|h| h.index != 1));
    }
}
