//! Uniform box cluster trees (octrees whose boxes on one level are translates).
//!
//! A node is subdivided into its eight octants whenever it holds more than
//! `n_max` points; only nonempty octants become children. Boxes are half-open
//! `(a, b]` and live on a dyadic lattice of the root box, so every node is
//! identified by a [`GridCoord`].
//!
//! Points are reordered internally so that every node owns a contiguous range
//! of the permuted point list.

use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_diameter, AxisBox, Point3};
use crate::scalar::Real;

pub const DEFAULT_DEPTH_CAP: u32 = 30;

/// Relative padding applied to the lower faces of the root box.
pub const ROOT_PADDING: f64 = 1e-12;

pub type NodeId = usize;

/// Level and integer lattice position of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCoord {
    pub level: u32,
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl GridCoord {
    pub const ROOT: GridCoord = GridCoord { level: 0, i: 0, j: 0, k: 0 };

    pub fn new(level: u32, i: u32, j: u32, k: u32) -> Self {
        Self { level, i, j, k }
    }

    #[inline]
    pub fn ijk(&self) -> [u32; 3] {
        [self.i, self.j, self.k]
    }

    /// Lattice coordinate of octant `octant` (bits x, y, z from high to low).
    pub fn child(&self, octant: usize) -> GridCoord {
        GridCoord {
            level: self.level + 1,
            i: 2 * self.i + ((octant >> 2) & 1) as u32,
            j: 2 * self.j + ((octant >> 1) & 1) as u32,
            k: 2 * self.k + (octant & 1) as u32,
        }
    }

    /// Octant index of this box inside its parent.
    pub fn octant(&self) -> usize {
        (((self.i & 1) << 2) | ((self.j & 1) << 1) | (self.k & 1)) as usize
    }

    /// Lattice difference `self - other` (both on the same level).
    pub fn offset_from(&self, other: &GridCoord) -> [i64; 3] {
        [
            self.i as i64 - other.i as i64,
            self.j as i64 - other.j as i64,
            self.k as i64 - other.k as i64,
        ]
    }

    fn lattice_key(&self) -> (u32, u32, u32) {
        (self.i, self.j, self.k)
    }
}

#[derive(Debug, Clone)]
pub struct ClusterNode<T> {
    pub bbox: AxisBox<T>,
    pub coord: GridCoord,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    range: Range<usize>,
}

impl<T: Real> ClusterNode<T> {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    #[inline]
    pub fn level(&self) -> usize {
        self.coord.level as usize
    }

    /// Range of this node in the tree's permuted point order.
    #[inline]
    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.range.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    #[inline]
    pub fn midpoint(&self) -> Point3<T> {
        self.bbox.center()
    }
}

#[derive(Debug, Clone)]
pub struct ClusterTree<T> {
    root_box: AxisBox<T>,
    nodes: Vec<ClusterNode<T>>,
    levels: Vec<Range<NodeId>>,
    leaves: Vec<NodeId>,
    perm: Vec<usize>,
    points: Vec<Point3<T>>,
    n_max: usize,
    depth_cap: u32,
    oversized_leaves: usize,
}

impl<T: Real> ClusterTree<T> {
    /// Builds the tree with the default depth cap.
    pub fn build(points: &[Point3<T>], root: AxisBox<T>, n_max: usize) -> Result<Self> {
        Self::build_with_cap(points, root, n_max, DEFAULT_DEPTH_CAP)
    }

    pub fn build_with_cap(
        points: &[Point3<T>],
        root: AxisBox<T>,
        n_max: usize,
        depth_cap: u32,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if depth_cap == 0 || depth_cap > 31 {
            return Err(Error::InvalidParameter(format!(
                "depth cap must lie in 1..=31, got {depth_cap}"
            )));
        }
        let pad = root.sides().scale(T::lit(ROOT_PADDING));
        let root_box = AxisBox::new(root.lower - pad, root.upper)?;
        for (index, p) in points.iter().enumerate() {
            if !p.is_finite() || !root_box.contains(*p) {
                return Err(Error::PointOutsideRoot {
                    index,
                    x: p.x.to_f64_lossy(),
                    y: p.y.to_f64_lossy(),
                    z: p.z.to_f64_lossy(),
                });
            }
        }

        let mut tree = ClusterTree {
            root_box,
            nodes: vec![ClusterNode {
                bbox: root_box,
                coord: GridCoord::ROOT,
                parent: None,
                children: Vec::new(),
                range: 0..points.len(),
            }],
            levels: vec![0..1],
            leaves: Vec::new(),
            perm: (0..points.len()).collect(),
            points: Vec::new(),
            n_max,
            depth_cap,
            oversized_leaves: 0,
        };
        tree.refine(points);
        tree.points = tree.perm.iter().map(|&i| points[i]).collect();
        tree.leaves = (0..tree.nodes.len()).filter(|&id| tree.nodes[id].is_leaf()).collect();
        tree.oversized_leaves = tree
            .leaves
            .iter()
            .filter(|&&id| tree.nodes[id].len() > n_max)
            .count();
        Ok(tree)
    }

    fn refine(&mut self, points: &[Point3<T>]) {
        let mut scratch = Vec::new();
        loop {
            let current = self.levels.last().unwrap().clone();
            let level = self.nodes[current.start].coord.level;
            if level >= self.depth_cap {
                break;
            }
            let mut pending: Vec<(GridCoord, NodeId, Range<usize>)> = Vec::new();
            for id in current {
                let node = &self.nodes[id];
                if node.len() <= self.n_max {
                    continue;
                }
                let coord = node.coord;
                let range = node.range();
                let split = self.split_planes(&coord);
                let slice = &mut self.perm[range.clone()];
                let mut counts = [0usize; 8];
                let octant_of = |p: &Point3<T>| {
                    (usize::from(p.x > split[0]) << 2)
                        | (usize::from(p.y > split[1]) << 1)
                        | usize::from(p.z > split[2])
                };
                for &pi in slice.iter() {
                    counts[octant_of(&points[pi])] += 1;
                }
                let mut starts = [0usize; 8];
                for o in 1..8 {
                    starts[o] = starts[o - 1] + counts[o - 1];
                }
                scratch.clear();
                scratch.resize(slice.len(), 0);
                let mut cursor = starts;
                for &pi in slice.iter() {
                    let o = octant_of(&points[pi]);
                    scratch[cursor[o]] = pi;
                    cursor[o] += 1;
                }
                slice.copy_from_slice(&scratch);
                for o in 0..8 {
                    if counts[o] > 0 {
                        let lo = range.start + starts[o];
                        pending.push((coord.child(o), id, lo..lo + counts[o]));
                    }
                }
            }
            if pending.is_empty() {
                break;
            }
            pending.sort_by(|a, b| a.0.lattice_key().cmp(&b.0.lattice_key()));
            let first = self.nodes.len();
            for (coord, parent, range) in pending {
                let id = self.nodes.len();
                let bbox = self.lattice_box(&coord);
                self.nodes.push(ClusterNode { bbox, coord, parent: Some(parent), children: Vec::new(), range });
                self.nodes[parent].children.push(id);
            }
            self.levels.push(first..self.nodes.len());
        }
    }

    /// Side lengths of every box on `level`.
    pub fn level_sides(&self, level: usize) -> Point3<T> {
        self.root_box.sides().scale(T::one() / T::lit(2f64.powi(level as i32)))
    }

    /// Lattice plane `root.lower + index * side(level)` on each axis.
    fn lattice_plane(&self, level: u32, index: [u32; 3]) -> Point3<T> {
        let side = self.level_sides(level as usize);
        let lo = self.root_box.lower;
        Point3::new(
            lo.x + T::from_usize_lossy(index[0] as usize) * side.x,
            lo.y + T::from_usize_lossy(index[1] as usize) * side.y,
            lo.z + T::from_usize_lossy(index[2] as usize) * side.z,
        )
    }

    fn split_planes(&self, coord: &GridCoord) -> [T; 3] {
        let [i, j, k] = coord.ijk();
        self.lattice_plane(coord.level + 1, [2 * i + 1, 2 * j + 1, 2 * k + 1]).to_array()
    }

    /// Box of lattice coordinate `coord`, whether or not a node exists there.
    pub fn lattice_box(&self, coord: &GridCoord) -> AxisBox<T> {
        if coord.level == 0 {
            return self.root_box;
        }
        let [i, j, k] = coord.ijk();
        AxisBox {
            lower: self.lattice_plane(coord.level, [i, j, k]),
            upper: self.lattice_plane(coord.level, [i + 1, j + 1, k + 1]),
        }
    }

    #[inline]
    pub fn root(&self) -> &ClusterNode<T> {
        &self.nodes[0]
    }

    #[inline]
    pub fn root_id(&self) -> NodeId {
        0
    }

    /// Root box after lower-face padding.
    #[inline]
    pub fn root_box(&self) -> &AxisBox<T> {
        &self.root_box
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &ClusterNode<T> {
        &self.nodes[id]
    }

    #[inline]
    pub fn nodes(&self) -> &[ClusterNode<T>] {
        &self.nodes
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node ids on `level`, in lattice-lexicographic order.
    pub fn level_ids(&self, level: usize) -> Range<NodeId> {
        self.levels.get(level).cloned().unwrap_or(0..0)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Maximum level of any node.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Box diameter `q_l` shared by all boxes on `level`.
    pub fn diameter(&self, level: usize) -> T {
        box_diameter(&self.root_box) / T::lit(2f64.powi(level as i32))
    }

    pub fn num_points(&self) -> usize {
        self.perm.len()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    /// Number of leaves holding more than `n_max` points (depth cap reached).
    pub fn oversized_leaves(&self) -> usize {
        self.oversized_leaves
    }

    /// Original point indices of node `id` (the index set of the box).
    pub fn index_set(&self, id: NodeId) -> &[usize] {
        &self.perm[self.nodes[id].range()]
    }

    /// Points of node `id` in tree order.
    pub fn node_points(&self, id: NodeId) -> &[Point3<T>] {
        &self.points[self.nodes[id].range()]
    }

    /// All points in tree order.
    pub fn tree_points(&self) -> &[Point3<T>] {
        &self.points
    }

    /// Tree position -> original index.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn node_id_at(&self, coord: &GridCoord) -> Option<NodeId> {
        let range = self.levels.get(coord.level as usize)?.clone();
        let slice = &self.nodes[range.clone()];
        slice
            .binary_search_by(|n| match n.coord.lattice_key().cmp(&coord.lattice_key()) {
                Ordering::Equal => Ordering::Equal,
                o => o,
            })
            .ok()
            .map(|pos| range.start + pos)
    }

    pub fn node_at(&self, coord: &GridCoord) -> Option<&ClusterNode<T>> {
        self.node_id_at(coord).map(|id| &self.nodes[id])
    }

    /// Reorders a vector given in original point order into tree order.
    pub fn gather<V: Copy>(&self, v: &[V]) -> Vec<V> {
        self.perm.iter().map(|&i| v[i]).collect()
    }

    /// Adds a tree-ordered vector into `out`, which is in original order.
    pub fn scatter_add<V: Copy + std::ops::AddAssign>(&self, tree_ordered: &[V], out: &mut [V]) {
        for (pos, &orig) in self.perm.iter().enumerate() {
            out[orig] += tree_ordered[pos];
        }
    }
}
