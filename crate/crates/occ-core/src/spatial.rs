//! Internal neighbor-search structures for the point-cloud filters.
//!
//! Both structures are exact: they enumerate every candidate whose distance
//! could influence the result, so filter decisions match a brute-force scan
//! bit for bit.

use std::collections::HashMap;

use crate::geom::Vec3;
use crate::scalar::Real;

/// Uniform hash grid with cell edge = query radius; a radius query only ever
/// needs the 3×3×3 cell neighborhood.
pub(crate) struct HashGrid<T> {
    cell: T,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<T: Real> HashGrid<T> {
    pub fn build(points: &[Vec3<T>], cell: T) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(*p, cell)).or_default().push(i as u32);
        }
        Self { cell, cells }
    }

    fn key(p: Vec3<T>, cell: T) -> [i64; 3] {
        [
            (p.x / cell).floor().to_i64().unwrap_or(0),
            (p.y / cell).floor().to_i64().unwrap_or(0),
            (p.z / cell).floor().to_i64().unwrap_or(0),
        ]
    }

    /// Number of OTHER points within distance <= radius of `points[i]`
    /// (inclusive boundary), where radius equals the build cell size.
    pub fn neighbors_within(&self, points: &[Vec3<T>], i: usize) -> usize {
        let p = points[i];
        let r2 = self.cell * self.cell;
        let key = Self::key(p, self.cell);
        let mut count = 0;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let k = [key[0] + dx, key[1] + dy, key[2] + dz];
                    let Some(bucket) = self.cells.get(&k) else {
                        continue;
                    };
                    for &j in bucket {
                        if j as usize == i {
                            continue;
                        }
                        if (points[j as usize] - p).norm_squared() <= r2 {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }
}

/// Balanced kd-tree over point indices; queries return the k smallest
/// squared distances to OTHER points.
pub(crate) struct KdTree<T> {
    nodes: Vec<KdNode<T>>,
    root: Option<usize>,
}

struct KdNode<T> {
    point: Vec3<T>,
    index: u32,
    axis: u8,
    left: Option<usize>,
    right: Option<usize>,
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Vec3<T>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut order[..], &mut nodes);
        Self { nodes, root }
    }

    fn build_rec(points: &[Vec3<T>], order: &mut [u32], nodes: &mut Vec<KdNode<T>>) -> Option<usize> {
        if order.is_empty() {
            return None;
        }
        // Split along the widest extent for balance on skewed inputs.
        let mut lo = points[order[0] as usize];
        let mut hi = lo;
        for &i in order.iter() {
            lo = lo.min_component_wise(points[i as usize]);
            hi = hi.max_component_wise(points[i as usize]);
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0u8
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let pa = points[a as usize].to_array()[axis as usize];
            let pb = points[b as usize].to_array()[axis as usize];
            pa.partial_cmp(&pb).expect("finite coordinates")
        });
        let pivot = order[mid];
        let slot = nodes.len();
        nodes.push(KdNode {
            point: points[pivot as usize],
            index: pivot,
            axis,
            left: None,
            right: None,
        });
        let (left_half, rest) = order.split_at_mut(mid);
        let right_half = &mut rest[1..];
        let left = Self::build_rec(points, left_half, nodes);
        let right = Self::build_rec(points, right_half, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        Some(slot)
    }

    /// Squared distances of the k nearest OTHER points to `points[query]`,
    /// sorted ascending. Returns fewer than k values only when the cloud has
    /// fewer than k other points.
    pub fn k_nearest_sq(&self, query_point: Vec3<T>, query_index: usize, k: usize) -> Vec<T> {
        let mut best: Vec<T> = Vec::with_capacity(k + 1);
        if let Some(root) = self.root {
            self.search(root, query_point, query_index as u32, k, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: Vec3<T>, skip: u32, k: usize, best: &mut Vec<T>) {
        let n = &self.nodes[node];
        if n.index != skip {
            let d2 = (n.point - q).norm_squared();
            if best.len() < k {
                let pos = best.partition_point(|&b| b < d2);
                best.insert(pos, d2);
            } else if d2 < best[k - 1] {
                let pos = best.partition_point(|&b| b < d2);
                best.insert(pos, d2);
                best.pop();
            }
        }
        let delta = q.to_array()[n.axis as usize] - n.point.to_array()[n.axis as usize];
        let (near, far) = if delta < T::zero() {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, q, skip, k, best);
        }
        // Visit the far side unless the splitting plane is strictly beyond
        // the current k-th best (equal distances must still be examined).
        let plane2 = delta * delta;
        let must_visit = best.len() < k || plane2 <= best[k - 1];
        if must_visit {
            if let Some(c) = far {
                self.search(c, q, skip, k, best);
            }
        }
    }
}
