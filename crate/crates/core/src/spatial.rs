//! Exact k-nearest-neighbour queries over 3D points.
//!
//! Neighbours are ordered by `(squared distance, index)`, so equidistant
//! points resolve to the lowest index and results match a brute-force scan
//! exactly.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::math::dist2;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// A static kd-tree over a point slice.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// A neighbour hit: point index and squared distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

fn closer(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.dist2
        .partial_cmp(&b.dist2)
        .unwrap_or(Ordering::Equal)
        .then(a.index.cmp(&b.index))
}

impl KdTree {
    pub fn build(points: &[[f64; 3]]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split on the widest axis at the median.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| {
                (hi[a] - lo[a])
                    .partial_cmp(&(hi[b] - lo[b]))
                    .unwrap_or(Ordering::Equal)
            })
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .partial_cmp(&points[b][axis])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The nearest point, ties resolved to the lowest index.
    pub fn nearest(&self, query: [f64; 3]) -> Option<Neighbor> {
        self.k_nearest(query, 1).into_iter().next()
    }

    /// Up to `k` nearest points sorted by `(dist2, index)`.
    pub fn k_nearest(&self, query: [f64; 3], k: usize) -> Vec<Neighbor> {
        self.k_nearest_filtered(query, k, |_| true)
    }

    /// Like [`KdTree::k_nearest`] but only considers indices accepted by `keep`.
    pub fn k_nearest_filtered(
        &self,
        query: [f64; 3],
        k: usize,
        keep: impl Fn(usize) -> bool,
    ) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        self.search(0, query, k, &keep, &mut best);
        best
    }

    fn search(
        &self,
        node: usize,
        q: [f64; 3],
        k: usize,
        keep: &impl Fn(usize) -> bool,
        best: &mut Vec<Neighbor>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if !keep(i) {
                        continue;
                    }
                    let cand = Neighbor {
                        index: i,
                        dist2: dist2(q, self.points[i]),
                    };
                    if best.len() == k {
                        if closer(&cand, &best[k - 1]) != Ordering::Less {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best
                        .binary_search_by(|b| closer(b, &cand))
                        .unwrap_or_else(|p| p);
                    best.insert(pos, cand);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, keep, best);
                // Equal distances must still be visited for the index tie-break.
                if best.len() < k || diff * diff <= best[k - 1].dist2 {
                    self.search(far, q, k, keep, best);
                }
            }
        }
    }
}

/// O(N) scan returning the `k` nearest by `(dist2, index)`.
pub fn brute_force_k_nearest(points: &[[f64; 3]], query: [f64; 3], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .map(|(index, &p)| Neighbor {
            index,
            dist2: dist2(query, p),
        })
        .collect();
    all.sort_by(closer);
    all.truncate(k);
    all
}
