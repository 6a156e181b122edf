//! Quadtree over embedding points and the Barnes-Hut traversal.
//!
//! The tree is rebuilt from scratch every iteration: a bounding square
//! (padded so boundary points fall strictly inside) is subdivided until each
//! leaf holds a single point, a set of exactly coincident points, or the
//! depth cap is reached. Construction partitions one id arena in place, so
//! the only per-build allocations are the arena, one scratch buffer, and the
//! node vector.
//!
//! A traversal for query `q` walks the tree with an explicit stack. A cell
//! of `N` points with center of mass `c` and half-side `r` is accepted
//! whenever `r / ||q - c|| < theta` (evaluated squared), contributing
//!
//! ```text
//! z     += N / (1 + D^2)
//! force += N * (q - c) / (1 + D^2)^2        with D = ||q - c||
//! ```
//!
//! Rejected cells recurse; leaves contribute their points one by one, which
//! makes `theta = 0` the exact all-pairs computation. Coincident pairs are
//! harmless: at `D = 0` the kernel is 1 and the force term vanishes.
//!
//! Geometry and accumulation are carried in `f64` regardless of the
//! coordinate scalar; structure is determined purely by point positions, so
//! permuting the input permutes leaf ids but leaves sums unchanged.

use crate::error::{Result, TsneError};
use crate::scalar::Scalar;

/// Points at or above this count are pre-sorted along a Z-order curve so
/// tree construction and traversal touch memory coherently.
const MORTON_THRESHOLD: usize = 10_000;
/// Subdivision stops here even for non-coincident points; with a padded
/// square this is only reachable through adversarial coordinate spreads.
const MAX_DEPTH: usize = 64;
/// Root padding relative to the bounding-box span.
const ROOT_PADDING: f64 = 1e-5;

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    /// Center of mass of the subtree's points.
    com: [f64; 2],
    /// Squared half-side of the cell.
    r2: f64,
    /// Points in the subtree.
    count: u32,
    /// Child node ids in quadrant order (-x-y, +x-y, -x+y, +x+y).
    children: [u32; 4],
    /// Arena range of a leaf; empty for internal nodes.
    start: u32,
    len: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.children == [NO_CHILD; 4]
    }
}

/// Quadtree specialized for Barnes-Hut force evaluation in the plane.
#[derive(Debug, Clone)]
pub struct QuadTree {
    nodes: Vec<Node>,
    root: u32,
    /// `(id, x, y)` triples grouped so each leaf owns a contiguous range.
    arena: Vec<(u32, f64, f64)>,
    depth: usize,
}

/// One partially-built cell: its arena range, bounds, and depth.
struct BuildFrame {
    lo: usize,
    hi: usize,
    origin: [f64; 2],
    side: f64,
    depth: usize,
}

impl QuadTree {
    /// Builds a tree over `n` points given as interleaved `x, y` pairs.
    pub fn build<T: Scalar>(coords: &[T]) -> Result<QuadTree> {
        Self::build_with_ordering(coords, coords.len() / 2 >= MORTON_THRESHOLD)
    }

    /// Like [`QuadTree::build`] with explicit control over the Z-order
    /// pre-sort (exposed so tests can cover both paths at any size).
    pub fn build_with_ordering<T: Scalar>(coords: &[T], morton: bool) -> Result<QuadTree> {
        if coords.len() < 2 || !coords.len().is_multiple_of(2) {
            return Err(TsneError::InvalidParameter(format!(
                "coordinate buffer must hold interleaved pairs for >= 1 point, got {} values",
                coords.len()
            )));
        }
        let n = coords.len() / 2;
        let mut arena: Vec<(u32, f64, f64)> = Vec::with_capacity(n);
        for i in 0..n {
            let x = coords[2 * i].as_f64();
            let y = coords[2 * i + 1].as_f64();
            if !x.is_finite() || !y.is_finite() {
                return Err(TsneError::NonFinite {
                    context: "embedding coordinates".into(),
                    index: 2 * i,
                });
            }
            arena.push((i as u32, x, y));
        }

        // Bounding square, padded so extreme points land strictly inside.
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(_, x, y) in &arena {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        let span = (max_x - min_x).max(max_y - min_y);
        let side = if span > 0.0 {
            span * (1.0 + 2.0 * ROOT_PADDING)
        } else {
            1.0
        };
        let origin = [
            0.5 * (min_x + max_x) - 0.5 * side,
            0.5 * (min_y + max_y) - 0.5 * side,
        ];

        if morton {
            let inv = 65536.0 / side;
            arena.sort_unstable_by_key(|&(id, x, y)| {
                let qx = ((x - origin[0]) * inv) as u32& 0xFFFF;
                let qy = ((y - origin[1]) * inv) as u32 & 0xFFFF;
                (zorder(qx, qy), id)
            });
        }

        let mut tree = QuadTree {
            nodes: Vec::with_capacity(2 * n),
            root: 0,
            arena,
            depth: 0,
        };
        let mut scratch = vec![(0u32, 0f64, 0f64); n];
        tree.root = tree.subdivide(
            BuildFrame {
                lo: 0,
                hi: n,
                origin,
                side,
                depth: 0,
            },
            &mut scratch,
        );
        Ok(tree)
    }

    /// Builds the cell for one arena range, recursing into quadrants, and
    /// returns its node id. Children precede parents in the node vector.
    fn subdivide(&mut self, frame: BuildFrame, scratch: &mut [(u32, f64, f64)]) -> u32 {
        let BuildFrame {
            lo,
            hi,
            origin,
            side,
            depth,
        } = frame;
        let count = hi - lo;
        self.depth = self.depth.max(depth);
        let r2 = (side * 0.5) * (side * 0.5);

        let coincident = || {
            let (_, x0, y0) = self.arena[lo];
            self.arena[lo..hi].iter().all(|&(_, x, y)| x == x0 && y == y0)
        };
        if count == 1 || depth >= MAX_DEPTH || coincident() {
            let mut com = [0f64; 2];
            for &(_, x, y) in &self.arena[lo..hi] {
                com[0] += x;
                com[1] += y;
            }
            com[0] /= count as f64;
            com[1] /= count as f64;
            self.nodes.push(Node {
                com,
                r2,
                count: count as u32,
                children: [NO_CHILD; 4],
                start: lo as u32,
                len: count as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }

        // Stable 4-way partition of the range by quadrant.
        let mid = [origin[0] + side * 0.5, origin[1] + side * 0.5];
        let quadrant = |x: f64, y: f64| (x >= mid[0]) as usize + 2 * (y >= mid[1]) as usize;
        let mut counts = [0usize; 4];
        for &(_, x, y) in &self.arena[lo..hi] {
            counts[quadrant(x, y)] += 1;
        }
        let mut offsets = [0usize; 4];
        for q in 1..4 {
            offsets[q] = offsets[q - 1] + counts[q - 1];
        }
        let mut cursors = offsets;
        for &entry in &self.arena[lo..hi] {
            let q = quadrant(entry.1, entry.2);
            scratch[cursors[q]] = entry;
            cursors[q] += 1;
        }
        self.arena[lo..hi].copy_from_slice(&scratch[..count]);

        let half = side * 0.5;
        let mut children = [NO_CHILD; 4];
        for q in 0..4 {
            if counts[q] == 0 {
                continue;
            }
            let child_origin = [
                origin[0] + ((q & 1) as f64) * half,
                origin[1] + ((q >> 1) as f64) * half,
            ];
            children[q] = self.subdivide(
                BuildFrame {
                    lo: lo + offsets[q],
                    hi: lo + offsets[q] + counts[q],
                    origin: child_origin,
                    side: half,
                    depth: depth + 1,
                },
                scratch,
            );
        }

        // Center of mass from the children, in fixed quadrant order.
        let mut com = [0f64; 2];
        for &child in children.iter().filter(|&&c| c != NO_CHILD) {
            let node = &self.nodes[child as usize];
            com[0] += node.com[0] * node.count as f64;
            com[1] += node.com[1] * node.count as f64;
        }
        com[0] /= count as f64;
        com[1] /= count as f64;

        self.nodes.push(Node {
            com,
            r2,
            count: count as u32,
            children,
            start: 0,
            len: 0,
        });
        (self.nodes.len() - 1) as u32
    }

    pub fn n(&self) -> usize {
        self.arena.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Deepest cell level in the tree (root is level 0).
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Coordinates of indexed point `id` as stored in the tree.
    pub fn point(&self, id: u32) -> [f64; 2] {
        // The arena is permuted; scan-free access matters only for tests.
        let &(_, x, y) = self
            .arena
            .iter()
            .find(|&&(pid, _, _)| pid == id)
            .expect("id indexed by this tree");
        [x, y]
    }

    /// Accumulates the repulsive kernel over the tree for one query point.
    ///
    /// Returns the unnormalized force sum `sum w^2 (q - y)` and the kernel
    /// sum `z = sum w` with `w = 1 / (1 + ||q - y||^2)`, where far cells are
    /// collapsed to their centers of mass under the opening criterion
    /// `r_cell / D < theta`. `exclude` drops one indexed point (the query
    /// itself when querying tree members).
    pub fn traverse(&self, x: f64, y: f64, exclude: Option<u32>, theta: f64) -> ([f64; 2], f64) {
        let mut stack = Vec::with_capacity(64);
        self.traverse_into(x, y, exclude, theta, &mut stack)
    }

    /// [`QuadTree::traverse`] with a caller-owned stack, for hot loops.
    pub fn traverse_into(
        &self,
        x: f64,
        y: f64,
        exclude: Option<u32>,
        theta: f64,
        stack: &mut Vec<u32>,
    ) -> ([f64; 2], f64) {
        let theta2 = theta * theta;
        let mut force = [0f64; 2];
        let mut z = 0f64;
        stack.clear();
        stack.push(self.root);

        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            let dx = x - node.com[0];
            let dy = y - node.com[1];
            let d2 = dx * dx + dy * dy;

            if !node.is_leaf() {
                if node.r2 < theta2 * d2 {
                    // Far enough: the whole cell acts as `count` points at
                    // its center of mass.
                    let w = 1.0 / (1.0 + d2);
                    let ww = w * w * node.count as f64;
                    force[0] += ww * dx;
                    force[1] += ww * dy;
                    z += node.count as f64 * w;
                } else {
                    for &child in node.children.iter().rev() {
                        if child != NO_CHILD {
                            stack.push(child);
                        }
                    }
                }
                continue;
            }

            let lo = node.start as usize;
            let hi = lo + node.len as usize;
            for &(pid, px, py) in &self.arena[lo..hi] {
                if Some(pid) == exclude {
                    continue;
                }
                let dx = x - px;
                let dy = y - py;
                let d2 = dx * dx + dy * dy;
                let w = 1.0 / (1.0 + d2);
                let ww = w * w;
                force[0] += ww * dx;
                force[1] += ww * dy;
                z += w;
            }
        }
        (force, z)
    }
}

/// Interleaves two 16-bit values, x in the even bits and y in the odd bits.
fn zorder(x: u32, y: u32) -> u32 {
    (spread16(x) | (spread16(y) << 1)) as u32
}

fn spread16(v: u32) -> u64 {
    let mut v = (v & 0xFFFF) as u64;
    v = (v | (v << 8)) & 0x00FF_00FF;
    v = (v | (v << 4)) & 0x0F0F_0F0F;
    v = (v | (v << 2)) & 0x3333_3333;
    v = (v | (v << 1)) & 0x5555_5555;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    /// Direct all-pairs evaluation of the same kernel.
    fn direct(coords: &[f64], qx: f64, qy: f64, exclude: Option<u32>) -> ([f64; 2], f64) {
        let mut force = [0f64; 2];
        let mut z = 0f64;
        for (j, pair) in coords.chunks_exact(2).enumerate() {
            if Some(j as u32) == exclude {
                continue;
            }
            let dx = qx - pair[0];
            let dy = qy - pair[1];
            let d2 = dx * dx + dy * dy;
            let w = 1.0 / (1.0 + d2);
            force[0] += w * w * dx;
            force[1] += w * w * dy;
            z += w;
        }
        (force, z)
    }

    fn random_coords(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::stream_rng(seed, 777);
        (0..2 * n).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect()
    }

    /// Recursively collects the ids under each node to check structural
    /// invariants.
    fn subtree_ids(tree: &QuadTree, node: u32, out: &mut Vec<u32>) {
        let n = &tree.nodes[node as usize];
        if n.is_leaf() {
            for &(id, _, _) in &tree.arena[n.start as usize..(n.start + n.len) as usize] {
                out.push(id);
            }
        } else {
            for &c in n.children.iter().filter(|&&c| c != NO_CHILD) {
                subtree_ids(tree, c, out);
            }
        }
    }

    #[test]
    fn four_quadrant_points_make_four_one_point_children() {
        let coords = [1.0f64, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
        let tree = QuadTree::build(&coords).unwrap();
        let root = &tree.nodes[tree.root as usize];
        assert_eq!(root.count, 4);
        assert_relative_eq!(root.com[0], 0.0);
        assert_relative_eq!(root.com[1], 0.0);
        assert!(root.children.iter().all(|&c| c != NO_CHILD));
        for &c in &root.children {
            assert_eq!(tree.nodes[c as usize].count, 1);
        }
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn counts_and_centers_hold_everywhere() {
        let coords = random_coords(200, 1);
        let tree = QuadTree::build(&coords).unwrap();
        assert_eq!(tree.nodes[tree.root as usize].count as usize, 200);

        for (idx, node) in tree.nodes.iter().enumerate() {
            let mut ids = Vec::new();
            subtree_ids(&tree, idx as u32, &mut ids);
            assert_eq!(ids.len(), node.count as usize, "node {idx} count");

            let mut mean = [0f64; 2];
            for &id in &ids {
                mean[0] += coords[2 * id as usize];
                mean[1] += coords[2 * id as usize + 1];
            }
            mean[0] /= ids.len() as f64;
            mean[1] /= ids.len() as f64;
            assert_relative_eq!(node.com[0], mean[0], max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(node.com[1], mean[1], max_relative = 1e-12, epsilon = 1e-12);

            if !node.is_leaf() {
                for &c in node.children.iter().filter(|&&c| c != NO_CHILD) {
                    // Cells quarter: the child half-side is half the parent's.
                    assert_relative_eq!(tree.nodes[c as usize].r2, node.r2 / 4.0);
                }
            }
        }

        // Every id appears exactly once across the leaves.
        let mut all = Vec::new();
        subtree_ids(&tree, tree.root, &mut all);
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<u32>>());
    }

    #[test]
    fn zero_theta_is_exact() {
        for seed in 0..3 {
            let coords = random_coords(150, seed);
            let tree = QuadTree::build(&coords).unwrap();
            for i in 0..150usize {
                let (qx, qy) = (coords[2 * i], coords[2 * i + 1]);
                let (bh, z_bh) = tree.traverse(qx, qy, Some(i as u32), 0.0);
                let (gold, z_gold) = direct(&coords, qx, qy, Some(i as u32));
                assert_relative_eq!(bh[0], gold[0], max_relative = 1e-12, epsilon = 1e-12);
                assert_relative_eq!(bh[1], gold[1], max_relative = 1e-12, epsilon = 1e-12);
                assert_relative_eq!(z_bh, z_gold, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn approximation_converges_as_theta_shrinks() {
        // Force errors are normalized by the mean exact force norm: a point
        // near the field's neutral spot has a tiny net force, so per-point
        // relative error is meaningless there.
        let coords = random_coords(400, 9);
        let tree = QuadTree::build(&coords).unwrap();
        let queries: Vec<usize> = (0..400usize).step_by(7).collect();

        let mut z_errors = Vec::new();
        let mut force_errors = Vec::new();
        for theta in [0.8, 0.5, 0.2, 0.1] {
            let mut worst_z = 0f64;
            let mut errs = Vec::new();
            let mut norms = Vec::new();
            for &i in &queries {
                let (qx, qy) = (coords[2 * i], coords[2 * i + 1]);
                let (bh, z_bh) = tree.traverse(qx, qy, Some(i as u32), theta);
                let (gold, z_gold) = direct(&coords, qx, qy, Some(i as u32));
                worst_z = worst_z.max((z_bh - z_gold).abs() / z_gold);
                errs.push(((bh[0] - gold[0]).powi(2) + (bh[1] - gold[1]).powi(2)).sqrt());
                norms.push((gold[0].powi(2) + gold[1].powi(2)).sqrt());
            }
            let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
            z_errors.push(worst_z);
            force_errors.push(errs.iter().cloned().fold(0.0, f64::max) / mean_norm);
        }

        assert!(
            z_errors.windows(2).all(|w| w[1] < w[0]),
            "z error should shrink with theta: {z_errors:?}"
        );
        assert!(
            force_errors.windows(2).all(|w| w[1] < w[0]),
            "force error should shrink with theta: {force_errors:?}"
        );
        assert!(z_errors.last().unwrap() < &0.01, "{z_errors:?}");
        assert!(force_errors.last().unwrap() < &0.01, "{force_errors:?}");
    }

    #[test]
    fn symmetric_square_cancels_at_center() {
        let coords = [1.0f64, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0];
        let tree = QuadTree::build(&coords).unwrap();
        let (force, z) = tree.traverse(0.0, 0.0, None, 0.0);
        assert_relative_eq!(force[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(force[1], 0.0, epsilon = 1e-15);
        // Four points at distance 1: z = 4 * (1 / 2).
        assert_relative_eq!(z, 2.0);
    }

    #[test]
    fn coincident_points_bucket_without_splitting_forever() {
        let mut coords = vec![3.25f64; 40]; // 20 identical points
        coords.extend([10.0, 10.0]);
        let tree = QuadTree::build(&coords).unwrap();
        assert!(tree.depth() <= MAX_DEPTH);
        assert_eq!(tree.nodes[tree.root as usize].count, 21);

        // Query at the pile, excluding one member: 19 coincident partners
        // contribute w = 1 and zero force; the far point contributes its
        // kernel.
        let (force, z) = tree.traverse(3.25, 3.25, Some(0), 0.0);
        let d2 = 2.0 * 6.75f64 * 6.75;
        let far_w = 1.0 / (1.0 + d2);
        assert_relative_eq!(z, 19.0 + far_w, max_relative = 1e-12);
        let expected = far_w * far_w * -6.75;
        assert_relative_eq!(force[0], expected, max_relative = 1e-12);
        assert_relative_eq!(force[1], expected, max_relative = 1e-12);
    }

    #[test]
    fn permuting_input_does_not_change_forces() {
        let coords = random_coords(64, 4);
        let tree = QuadTree::build(&coords).unwrap();

        let n = coords.len() / 2;
        let mut permuted = Vec::with_capacity(coords.len());
        for i in (0..n).rev() {
            permuted.extend([coords[2 * i], coords[2 * i + 1]]);
        }
        let tree_p = QuadTree::build(&permuted).unwrap();

        for i in 0..n {
            let (qx, qy) = (coords[2 * i], coords[2 * i + 1]);
            let (f_a, z_a) = tree.traverse(qx, qy, Some(i as u32), 0.8);
            let (f_b, z_b) = tree_p.traverse(qx, qy, Some((n - 1 - i) as u32), 0.8);
            assert_relative_eq!(f_a[0], f_b[0], max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(f_a[1], f_b[1], max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(z_a, z_b, max_relative = 1e-9);
        }
    }

    #[test]
    fn morton_ordering_preserves_results() {
        let coords = random_coords(500, 12);
        let plain = QuadTree::build_with_ordering(&coords, false).unwrap();
        let sorted = QuadTree::build_with_ordering(&coords, true).unwrap();
        for i in (0..500usize).step_by(11) {
            let (qx, qy) = (coords[2 * i], coords[2 * i + 1]);
            let (f_a, z_a) = plain.traverse(qx, qy, Some(i as u32), 0.5);
            let (f_b, z_b) = sorted.traverse(qx, qy, Some(i as u32), 0.5);
            assert_relative_eq!(f_a[0], f_b[0], max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(f_a[1], f_b[1], max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(z_a, z_b, max_relative = 1e-9);
        }
    }

    #[test]
    fn zorder_interleaves_bits() {
        // x = 0b101, y = 0b011 -> y2x2 y1x1 y0x0 = 0b 01 10 11.
        assert_eq!(zorder(0b101, 0b011), 0b011011);
        assert_eq!(zorder(0, 0), 0);
        assert_eq!(zorder(0xFFFF, 0), 0x5555_5555);
        assert_eq!(zorder(0, 0xFFFF), 0xAAAA_AAAA);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(QuadTree::build(&[1.0f64]).is_err());
        assert!(QuadTree::build(&[1.0f64, f64::NAN]).is_err());
        let empty: [f64; 0] = [];
        assert!(QuadTree::build(&empty).is_err());
    }
}

