//! Static k-d tree for exact nearest-neighbor queries on 3D point sets.

use crate::{Error, Result, Vec3};

struct Node {
    point: Vec3,
    /// index into the original input slice
    payload: u32,
    axis: u8,
    left: i32,
    right: i32,
}

pub struct KdTree {
    nodes: Vec<Node>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Result<KdTree> {
        if points.is_empty() {
            return Err(Error::EmptyInput("kd-tree needs at least one point"));
        }
        let mut items: Vec<(Vec3, u32)> =
            points.iter().enumerate().map(|(i, &p)| (p, i as u32)).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(&mut items, &mut nodes);
        Ok(KdTree { nodes, root })
    }

    fn build_rec(items: &mut [(Vec3, u32)], nodes: &mut Vec<Node>) -> i32 {
        if items.is_empty() {
            return -1;
        }
        // split along the widest axis of this slice
        let mut lo = items[0].0;
        let mut hi = items[0].0;
        for (p, _) in items.iter() {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |a, b| {
            a.0[axis].partial_cmp(&b.0[axis]).unwrap()
        });
        let (point, payload) = items[mid];
        let idx = nodes.len() as i32;
        nodes.push(Node { point, payload, axis: axis as u8, left: -1, right: -1 });
        let (head, tail) = items.split_at_mut(mid);
        let left = Self::build_rec(head, nodes);
        let right = Self::build_rec(&mut tail[1..], nodes);
        nodes[idx as usize].left = left;
        nodes[idx as usize].right = right;
        idx
    }

    /// Index (into the build slice) and squared distance of the closest point.
    pub fn nearest(&self, query: Vec3) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        self.search(self.root, query, &mut best);
        best
    }

    fn search(&self, node: i32, query: Vec3, best: &mut (usize, f64)) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let d = (n.point - query).norm_squared();
        if d < best.1 {
            *best = (n.payload as usize, d);
        }
        let delta = query[n.axis as usize] - n.point[n.axis as usize];
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near, query, best);
        if delta * delta < best.1 {
            self.search(far, query, best);
        }
    }
}
