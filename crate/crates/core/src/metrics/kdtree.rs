use crate::numcore::Tensor2;

/// Static 3-d tree over a point cloud, split at the axis median with the
/// axis cycling by depth.
#[derive(Debug, Clone)]
pub struct PointCloudNN {
    points: Vec<[f64; 3]>,
    /// Point indices arranged so every subtree is a contiguous slice with
    /// its splitting point in the middle.
    order: Vec<usize>,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

impl PointCloudNN {
    pub fn new(points: &Tensor2) -> Self {
        let pts: Vec<[f64; 3]> = points.iter_rows().map(|r| [r[0], r[1], r[2]]).collect();
        Self::from_points(pts)
    }

    pub fn from_points(points: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    /// Index and squared distance of the exact nearest neighbour; ties go
    /// to the lowest index. `None` for an empty cloud.
    pub fn nearest(&self, q: [f64; 3]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(&self.order, 0, &q, &mut best);
        Some(best)
    }

    fn search(&self, slice: &[usize], depth: usize, q: &[f64; 3], best: &mut (usize, f64)) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let idx = slice[mid];
        let p = &self.points[idx];
        let d = dist2(p, q);
        if d < best.1 || (d == best.1 && idx < best.0) {
            *best = (idx, d);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, best);
        if diff * diff <= best.1 {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(points: &[[f64; 3]], slice: &mut [usize], depth: usize) {
    if slice.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (left, right) = slice.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

/// Exhaustive nearest neighbour, the reference for the tree.
pub fn brute_force_nearest(points: &Tensor2, q: [f64; 3]) -> Option<(usize, f64)> {
    points
        .iter_rows()
        .enumerate()
        .map(|(i, r)| (i, dist2(&[r[0], r[1], r[2]], &q)))
        .fold(None, |acc, (i, d)| match acc {
            Some((_, bd)) if bd <= d => acc,
            _ => Some((i, d)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng;
    use proptest::prelude::*;

    #[test]
    fn matches_brute_force_on_random_sets() {
        for set in 0..100u64 {
            let mut r = rng::seeded(set);
            let n = 1 + (set as usize * 7) % 300;
            let pts = rng::uniform_tensor(&mut r, n, 3, 1.0);
            let tree = PointCloudNN::new(&pts);
            for _ in 0..20 {
                let q = [
                    rng::uniform(&mut r, -1.2, 1.2),
                    rng::uniform(&mut r, -1.2, 1.2),
                    rng::uniform(&mut r, -1.2, 1.2),
                ];
                let (ti, td) = tree.nearest(q).unwrap();
                let (bi, bd) = brute_force_nearest(&pts, q).unwrap();
                assert_eq!(td, bd);
                assert_eq!(ti, bi);
            }
        }
    }

    #[test]
    fn duplicates_and_empty() {
        let pts = Tensor2::from_rows(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let tree = PointCloudNN::new(&pts);
        assert_eq!(tree.nearest([0.0, 0.0, 0.1]).unwrap().0, 0);
        assert!(PointCloudNN::from_points(vec![]).nearest([0.0; 3]).is_none());
    }

    proptest! {
        #[test]
        fn tree_distance_equals_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..64),
            q in prop::array::uniform3(-1.5f64..1.5),
        ) {
            let t = Tensor2::from_rows(&pts);
            let tree = PointCloudNN::new(&t);
            prop_assert_eq!(tree.nearest(q).unwrap().1, brute_force_nearest(&t, q).unwrap().1);
        }
    }
}
