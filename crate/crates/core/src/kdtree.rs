//! Static kd-tree over 3-D points with exact k-nearest-neighbor queries.
//!
//! The tree is immutable after [`KnnIndex::build`] and safe to query from any
//! number of threads. Queries are exact: ties in distance are broken by
//! ascending point id, so results are fully deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::math::{Real, Vector3};

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("point {index} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("knn query on an empty index")]
    EmptyIndex,
    #[error("knn query with k = 0")]
    ZeroK,
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node<T> {
    point: Vector3<T>,
    id: u32,
    axis: u8,
    left: u32,
    right: u32,
}

/// Balanced kd-tree over a fixed point set.
pub struct KnnIndex<T> {
    nodes: Vec<Node<T>>,
    root: u32,
    len: usize,
}

/// Result of a k-nearest-neighbor query, sorted by ascending distance.
#[derive(Clone, Debug)]
pub struct Neighborhood<T> {
    /// Original point ids, nearest first.
    pub indices: Vec<u32>,
    /// Euclidean distances matching `indices`.
    pub distances: Vec<T>,
    /// Distance to the farthest returned neighbor (the bandwidth).
    pub r_k: T,
    /// Set when fewer than k points exist in the index.
    pub short: bool,
}

impl<T: Real> Neighborhood<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Max-heap entry ordered by (squared distance, id); the heap keeps the
/// current worst candidate on top.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate<T> {
    d2: T,
    id: u32,
}

impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Distances are finite by construction.
        self.d2
            .partial_cmp(&other.d2)
            .expect("finite distance")
            .then(self.id.cmp(&other.id))
    }
}

impl<T: Real> KnnIndex<T> {
    /// Build a median-split balanced tree. Duplicate points are kept with
    /// their own ids. Empty input is allowed; queries then fail.
    pub fn build(points: &[Vector3<T>]) -> Result<Self, KnnError> {
        for (index, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(KnnError::NonFiniteCoordinate { index });
            }
        }
        let mut items: Vec<(Vector3<T>, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u32))
            .collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_rec(&mut nodes, &mut items);
        Ok(Self {
            nodes,
            root,
            len: points.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Exact k nearest neighbors of `query` by Euclidean distance.
    /// If `k` exceeds the point count, all points are returned and the
    /// neighborhood is flagged short.
    pub fn knn(&self, query: Vector3<T>, k: usize) -> Result<Neighborhood<T>, KnnError> {
        Ok(self.knn_with_visit_count(query, k)?.0)
    }

    /// As [`Self::knn`], also reporting how many tree nodes were visited.
    pub fn knn_with_visit_count(
        &self,
        query: Vector3<T>,
        k: usize,
    ) -> Result<(Neighborhood<T>, usize), KnnError> {
        if self.is_empty() {
            return Err(KnnError::EmptyIndex);
        }
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        let want = k.min(self.len);
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(want + 1);
        let mut visited = 0usize;
        self.search(self.root, query, want, &mut heap, &mut visited);

        let mut sorted = heap.into_vec();
        sorted.sort_unstable();
        let indices: Vec<u32> = sorted.iter().map(|c| c.id).collect();
        let distances: Vec<T> = sorted.iter().map(|c| c.d2.sqrt()).collect();
        let r_k = *distances.last().expect("non-empty result");
        Ok((
            Neighborhood {
                indices,
                distances,
                r_k,
                short: want < k,
            },
            visited,
        ))
    }

    fn search(
        &self,
        node_ix: u32,
        query: Vector3<T>,
        k: usize,
        heap: &mut BinaryHeap<Candidate<T>>,
        visited: &mut usize,
    ) {
        if node_ix == NONE {
            return;
        }
        *visited += 1;
        let node = &self.nodes[node_ix as usize];
        let d2 = (node.point - query).length_squared();
        let cand = Candidate { d2, id: node.id };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("full heap") {
            heap.pop();
            heap.push(cand);
        }

        let axis = node.axis as usize;
        let delta = query[axis] - node.point[axis];
        let (near, far) = if delta < T::zero() {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, query, k, heap, visited);
        // The far side can still hold an equal-distance point with a smaller
        // id, so recurse on <= rather than <.
        let plane_d2 = delta * delta;
        if heap.len() < k || plane_d2 <= heap.peek().expect("full heap").d2 {
            self.search(far, query, k, heap, visited);
        }
    }
}

fn build_rec<T: Real>(nodes: &mut Vec<Node<T>>, items: &mut [(Vector3<T>, u32)]) -> u32 {
    if items.is_empty() {
        return NONE;
    }
    // Split on the axis of largest extent; ties pick the lowest axis.
    let mut lo = items[0].0;
    let mut hi = items[0].0;
    for (p, _) in items.iter() {
        lo = Vector3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vector3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    let spread = hi - lo;
    let mut axis = 0usize;
    if spread.y > spread[axis] {
        axis = 1;
    }
    if spread.z > spread[axis] {
        axis = 2;
    }

    let median = items.len() / 2;
    items.select_nth_unstable_by(median, |a, b| {
        a.0[axis]
            .partial_cmp(&b.0[axis])
            .expect("finite coordinate")
            .then(a.1.cmp(&b.1))
    });
    let (point, id) = items[median];
    let node_ix = nodes.len() as u32;
    nodes.push(Node {
        point,
        id,
        axis: axis as u8,
        left: NONE,
        right: NONE,
    });
    let (left_items, rest) = items.split_at_mut(median);
    let right_items = &mut rest[1..];
    let left = build_rec(nodes, left_items);
    let right = build_rec(nodes, right_items);
    nodes[node_ix as usize].left = left;
    nodes[node_ix as usize].right = right;
    node_ix
}
