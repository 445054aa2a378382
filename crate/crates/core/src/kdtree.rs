//! Exact nearest-neighbor and radius queries over a point cloud snapshot.
//!
//! The tree is a static axis-aligned BSP built once over a cloud; queries
//! are exact (identical result to a linear scan). Distance ties are broken
//! by the lowest point index, which keeps every downstream consumer
//! deterministic. Radius membership is inclusive: distance <= r.

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};

const LEAF_SIZE: usize = 16;

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

/// A kd-tree over a fixed snapshot of a cloud's points. Immutable after
/// build; concurrent queries are safe.
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl KdTree {
    /// Builds a tree over all points of the cloud.
    pub fn build(cloud: &PointCloud) -> Result<KdTree> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points = cloud.points.clone();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            root: 0,
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
            points,
            order: Vec::new(),
        };
        let n = tree.points.len();
        tree.root = tree.build_node(&mut order, 0, n);
        tree.order = order;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, order: &mut [u32], start: usize, end: usize) -> usize {
        let count = end - start;
        if count <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }

        // Widest axis of the bounding box of this subset.
        let mut lo = self.points[order[start] as usize];
        let mut hi = lo;
        for &i in &order[start + 1..end] {
            let p = self.points[i as usize];
            lo = lo.min(p);
            hi = hi.max(p);
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };

        // Median split ordered by (coordinate, index) so duplicates still
        // partition strictly and the recursion always terminates.
        let mid = count / 2;
        let seg = &mut order[start..end];
        seg.select_nth_unstable_by(mid, |&a, &b| {
            let ca = self.points[a as usize].axis(axis);
            let cb = self.points[b as usize].axis(axis);
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let value = self.points[seg[mid] as usize].axis(axis);

        let left = self.build_node(order, start, start + mid);
        let right = self.build_node(order, start + mid, end);
        self.nodes.push(Node::Split {
            axis,
            value,
            left,
            right,
        });
        self.nodes.len() - 1
    }

    /// Index and Euclidean distance of the point nearest to `query`.
    /// Exact; ties by lowest index.
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        let (i, d2) = self.nearest_sq(query);
        (i, d2.sqrt())
    }

    /// Index and squared distance of the nearest point. Threshold
    /// comparisons use this form so they agree exactly with a linear scan
    /// over [`Point3::distance_squared`].
    pub fn nearest_sq(&self, query: Point3) -> (usize, f64) {
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_inner(self.root, query, u32::MAX, &mut best);
        (best.1 as usize, best.0)
    }

    /// Like [`KdTree::nearest`] but skips the point at index `exclude`.
    /// Used to measure a cloud's own nearest-neighbor spacing.
    pub fn nearest_excluding(&self, query: Point3, exclude: usize) -> (usize, f64) {
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_inner(self.root, query, exclude as u32, &mut best);
        (best.1 as usize, best.0.sqrt())
    }

    fn nearest_inner(&self, node: usize, query: Point3, exclude: u32, best: &mut (f64, u32)) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if i == exclude {
                        continue;
                    }
                    let d2 = query.distance_squared(self.points[i as usize]);
                    if (d2, i) < *best {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query.axis(*axis) - value;
                let (near, far) = if diff < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.nearest_inner(near, query, exclude, best);
                // The far side may still hold an equally-near point with a
                // lower index, so only prune on a strict bound violation.
                if diff * diff <= best.0 {
                    self.nearest_inner(far, query, exclude, best);
                }
            }
        }
    }

    /// All indices within Euclidean distance `r` of `query` (inclusive),
    /// sorted ascending.
    pub fn within_radius(&self, query: Point3, r: f64) -> Result<Vec<usize>> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::InvalidRadius(r));
        }
        let r2 = r * r;
        let mut hits = Vec::new();
        self.radius_inner(self.root, query, r2, &mut hits);
        hits.sort_unstable();
        Ok(hits)
    }

    fn radius_inner(&self, node: usize, query: Point3, r2: f64, hits: &mut Vec<usize>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if query.distance_squared(self.points[i as usize]) <= r2 {
                        hits.push(i as usize);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query.axis(*axis) - value;
                if diff < 0.0 {
                    self.radius_inner(*left, query, r2, hits);
                    if diff * diff <= r2 {
                        self.radius_inner(*right, query, r2, hits);
                    }
                } else {
                    self.radius_inner(*right, query, r2, hits);
                    if diff * diff <= r2 {
                        self.radius_inner(*left, query, r2, hits);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force oracle with the same tie rule: argmin over (d^2, index).
    fn linear_nearest(points: &[Point3], query: Point3, exclude: Option<usize>) -> (usize, f64) {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, &p) in points.iter().enumerate() {
            if Some(i) == exclude {
                continue;
            }
            let d2 = query.distance_squared(p);
            if (d2, i) < best {
                best = (d2, i);
            }
        }
        (best.1, best.0.sqrt())
    }

    fn linear_radius(points: &[Point3], query: Point3, r: f64) -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| query.distance_squared(**p) <= r * r)
            .map(|(i, _)| i)
            .collect()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(matches!(
            KdTree::build(&PointCloud::new(vec![])),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn single_point_tree() {
        let tree = KdTree::build(&PointCloud::new(vec![Point3::ORIGIN])).unwrap();
        assert_eq!(tree.len(), 1);
        let (i, d) = tree.nearest(Point3::new(1.0, 0.0, 0.0));
        assert_eq!(i, 0);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn two_point_example() {
        let tree = KdTree::build(&PointCloud::new(vec![
            Point3::ORIGIN,
            Point3::new(10.0, 0.0, 0.0),
        ]))
        .unwrap();
        let (i, d) = tree.nearest(Point3::new(4.0, 0.0, 0.0));
        assert_eq!(i, 0);
        assert_eq!(d, 4.0);
    }

    #[test]
    fn matches_linear_scan_on_random_cloud() {
        let cloud = random_cloud(1000, 11);
        let tree = KdTree::build(&cloud).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let q = Point3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            assert_eq!(tree.nearest(q), linear_nearest(&cloud.points, q, None));
        }
    }

    #[test]
    fn large_cloud_matches_linear_scan() {
        let cloud = random_cloud(10_000, 21);
        let tree = KdTree::build(&cloud).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..1000 {
            let q = Point3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            assert_eq!(tree.nearest(q), linear_nearest(&cloud.points, q, None));
        }
    }

    #[test]
    fn duplicate_points_tie_break_to_lowest_index() {
        // Several exact duplicates scattered among distinct points.
        let p = Point3::new(0.25, -0.5, 0.75);
        let mut points = random_cloud(64, 31).points;
        points.insert(10, p);
        points.insert(40, p);
        points.insert(55, p);
        let tree = KdTree::build(&PointCloud::new(points.clone())).unwrap();
        let (i, d) = tree.nearest(p);
        assert_eq!((i, d), (10, 0.0));
        assert_eq!(linear_nearest(&points, p, None), (10, 0.0));
    }

    #[test]
    fn nearest_excluding_skips_the_query_point() {
        let cloud = random_cloud(200, 41);
        let tree = KdTree::build(&cloud).unwrap();
        for i in 0..cloud.len() {
            let got = tree.nearest_excluding(cloud.points[i], i);
            let want = linear_nearest(&cloud.points, cloud.points[i], Some(i));
            assert_eq!(got, want);
        }
    }

    #[test]
    fn radius_zero_on_stored_point() {
        let cloud = random_cloud(100, 51);
        let tree = KdTree::build(&cloud).unwrap();
        let hits = tree.within_radius(cloud.points[17], 0.0).unwrap();
        assert_eq!(hits, vec![17]);
    }

    #[test]
    fn radius_far_from_everything_is_empty() {
        let cloud = random_cloud(100, 61);
        let tree = KdTree::build(&cloud).unwrap();
        let hits = tree
            .within_radius(Point3::new(100.0, 100.0, 100.0), 0.5)
            .unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn radius_matches_brute_force_filter() {
        let cloud = random_cloud(500, 71);
        let tree = KdTree::build(&cloud).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        for _ in 0..50 {
            let q = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            assert_eq!(
                tree.within_radius(q, 0.3).unwrap(),
                linear_radius(&cloud.points, q, 0.3)
            );
        }
    }

    #[test]
    fn radius_boundary_is_inclusive() {
        let points = vec![Point3::ORIGIN, Point3::new(0.5, 0.0, 0.0)];
        let tree = KdTree::build(&PointCloud::new(points)).unwrap();
        let hits = tree.within_radius(Point3::ORIGIN, 0.5).unwrap();
        assert_eq!(hits, vec![0, 1]);
    }

    #[test]
    fn negative_radius_is_rejected() {
        let tree = KdTree::build(&PointCloud::new(vec![Point3::ORIGIN])).unwrap();
        assert!(matches!(
            tree.within_radius(Point3::ORIGIN, -0.1),
            Err(Error::InvalidRadius(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nearest_equals_linear_scan(
            n in 1usize..256,
            seed in 0u64..1 << 32,
            qx in -2.0..2.0f64, qy in -2.0..2.0f64, qz in -2.0..2.0f64,
        ) {
            let cloud = random_cloud(n, seed);
            let tree = KdTree::build(&cloud).unwrap();
            let q = Point3::new(qx, qy, qz);
            prop_assert_eq!(tree.nearest(q), linear_nearest(&cloud.points, q, None));
        }

        #[test]
        fn radius_equals_brute_force(
            n in 1usize..256,
            seed in 0u64..1 << 32,
            r in 0.0..1.0f64,
            qx in -1.5..1.5f64, qy in -1.5..1.5f64, qz in -1.5..1.5f64,
        ) {
            let cloud = random_cloud(n, seed);
            let tree = KdTree::build(&cloud).unwrap();
            let q = Point3::new(qx, qy, qz);
            prop_assert_eq!(
                tree.within_radius(q, r).unwrap(),
                linear_radius(&cloud.points, q, r)
            );
        }

        #[test]
        fn queries_invariant_under_permutation(
            n in 2usize..128,
            seed in 0u64..1 << 32,
            qx in -1.5..1.5f64, qy in -1.5..1.5f64, qz in -1.5..1.5f64,
        ) {
            // Distinct random points: tie-breaking never fires, so results
            // must map exactly through the permutation.
            let cloud = random_cloud(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let permuted = PointCloud::new(perm.iter().map(|&i| cloud.points[i]).collect());

            let tree = KdTree::build(&cloud).unwrap();
            let tree_p = KdTree::build(&permuted).unwrap();
            let q = Point3::new(qx, qy, qz);

            let (i, d) = tree.nearest(q);
            let (ip, dp) = tree_p.nearest(q);
            prop_assert_eq!(perm[ip], i);
            prop_assert_eq!(d, dp);
        }
    }
}
