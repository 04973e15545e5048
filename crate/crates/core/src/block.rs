//! Block tree over a target and a source cluster tree.
//!
//! Pairs of boxes on the same level are refined into all pairs of children
//! until either box is a cluster leaf or the pair satisfies the separation
//! criterion `max diam <= eta2 dist` and the parabolic criterion
//! `kappa max diam^2 <= eta2 dist`. Leaves satisfying both are admissible and
//! are evaluated through the directional expansion; the rest are nearfield.
//!
//! The per-box active and inherited direction sets that drive the matvec are
//! computed here as well.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterNode, ClusterTree, NodeId};
use crate::directions::{DirectionId, DirectionTable};
use crate::error::{Error, Result};
use crate::geometry::{box_diameter, box_distance, Point3, WaveNumber};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockStatus {
    Internal,
    AdmissibleLeaf,
    InadmissibleLeaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub t: NodeId,
    pub s: NodeId,
    pub level: usize,
    pub status: BlockStatus,
    /// Set for admissible leaves.
    pub direction: Option<DirectionId>,
}

impl Block {
    pub fn is_admissible(&self) -> bool {
        self.status == BlockStatus::AdmissibleLeaf
    }

    pub fn is_leaf(&self) -> bool {
        self.status != BlockStatus::Internal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityParams<T> {
    pub eta2: T,
    pub kappa: WaveNumber<T>,
}

impl<T: Real> AdmissibilityParams<T> {
    pub fn new(eta2: T, kappa: WaveNumber<T>) -> Result<Self> {
        if eta2 > T::zero() && eta2.is_finite() {
            Ok(Self { eta2, kappa })
        } else {
            Err(Error::InvalidParameter(format!("eta2 must be positive, got {eta2}")))
        }
    }
}

/// `(separation, parabolic)` margins `rhs - lhs`; admissible iff both are >= 0.
fn margins<T: Real>(t: &ClusterNode<T>, s: &ClusterNode<T>, p: &AdmissibilityParams<T>) -> (T, T, T) {
    let diam = box_diameter(&t.bbox).max(box_diameter(&s.bbox));
    let rhs = p.eta2 * box_distance(&t.bbox, &s.bbox);
    (rhs - diam, rhs - p.kappa.get() * diam * diam, rhs.max(diam))
}

/// Both admissibility criteria, with inclusive comparisons.
pub fn is_admissible<T: Real>(t: &ClusterNode<T>, s: &ClusterNode<T>, p: &AdmissibilityParams<T>) -> bool {
    let (a1, a3, _) = margins(t, s, p);
    a1 >= T::zero() && a3 >= T::zero()
}

/// Active and inherited direction ordinals for every node of one cluster tree.
#[derive(Debug, Clone, Default)]
pub struct DirectionSets {
    active: Vec<Vec<u32>>,
    inherited: Vec<Vec<u32>>,
}

impl DirectionSets {
    /// Directions of admissible leaf partners of the box on its level.
    pub fn active(&self, id: NodeId) -> &[u32] {
        &self.active[id]
    }

    /// Directions inherited from the parent through the direction map.
    pub fn inherited(&self, id: NodeId) -> &[u32] {
        &self.inherited[id]
    }

    /// Sorted union of active and inherited ordinals.
    pub fn needed(&self, id: NodeId) -> Vec<u32> {
        let set: BTreeSet<u32> = self.active[id].iter().chain(&self.inherited[id]).copied().collect();
        set.into_iter().collect()
    }

    /// `sum_t #(D(t) u D^(t))`.
    pub fn total(&self) -> usize {
        (0..self.active.len()).map(|id| self.needed(id).len()).sum()
    }

    fn compute<T: Real>(
        tree: &ClusterTree<T>,
        table: &DirectionTable<T>,
        partners: impl Iterator<Item = (NodeId, DirectionId)>,
    ) -> Self {
        let mut active: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); tree.num_nodes()];
        for (id, dir) in partners {
            active[id].insert(dir.ordinal() as u32);
        }
        let mut inherited: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); tree.num_nodes()];
        // ids are level-ordered, so parents are final before their children
        for id in 0..tree.num_nodes() {
            let node = tree.node(id);
            let Some(parent) = node.parent else { continue };
            let level = node.level();
            let from: BTreeSet<u32> = active[parent].union(&inherited[parent]).copied().collect();
            inherited[id] = from
                .into_iter()
                .map(|ord| {
                    let c = table.id(level - 1, ord as usize);
                    table.parent_direction(level, c).ordinal() as u32
                })
                .collect();
        }
        Self {
            active: active.into_iter().map(|s| s.into_iter().collect()).collect(),
            inherited: inherited.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockTree {
    blocks: Vec<Block>,
    levels: Vec<Range<usize>>,
    admissible: Vec<usize>,
    inadmissible: Vec<usize>,
    target_dirs: DirectionSets,
    source_dirs: DirectionSets,
    near_ties: usize,
    max_a2_residual: f64,
}

impl BlockTree {
    pub fn build<T: Real>(
        target: &ClusterTree<T>,
        source: &ClusterTree<T>,
        params: &AdmissibilityParams<T>,
        table: &DirectionTable<T>,
    ) -> Result<Self> {
        let depth = target.num_levels().max(source.num_levels());
        if table.num_levels() < depth {
            return Err(Error::InvalidParameter(format!(
                "direction table covers {} levels, trees need {depth}",
                table.num_levels()
            )));
        }
        let kappa = params.kappa.get();
        let mut blocks = Vec::new();
        let mut levels = Vec::new();
        let mut near_ties = 0usize;
        let mut max_a2 = 0f64;
        let tie_tol = T::lit(1e-12);
        let mut current = vec![(target.root_id(), source.root_id())];
        let mut level = 0usize;
        while !current.is_empty() {
            let first = blocks.len();
            let mut next = Vec::new();
            for (t_id, s_id) in current {
                let t = target.node(t_id);
                let s = source.node(s_id);
                let (a1, a3, scale) = margins(t, s, params);
                if a1.abs() <= tie_tol * scale || a3.abs() <= tie_tol * scale {
                    near_ties += 1;
                }
                let admissible = a1 >= T::zero() && a3 >= T::zero();
                let status = if t.is_leaf() || s.is_leaf() {
                    if admissible {
                        BlockStatus::AdmissibleLeaf
                    } else {
                        BlockStatus::InadmissibleLeaf
                    }
                } else if admissible {
                    BlockStatus::AdmissibleLeaf
                } else {
                    for &tc in &t.children {
                        for &sc in &s.children {
                            next.push((tc, sc));
                        }
                    }
                    BlockStatus::Internal
                };
                let direction = if status == BlockStatus::AdmissibleLeaf {
                    let diff = midpoint_difference(target, source, t, s);
                    let dir = table.direction_of_offset(level, direction_input(target, source, t, s, diff))?;
                    let unit = diff.normalized().ok_or(Error::CoincidentMidpoints)?;
                    let diam = box_diameter(&t.bbox).max(box_diameter(&s.bbox));
                    let a2 = (kappa * (unit - table.vector(dir)).norm() * diam).to_f64_lossy();
                    max_a2 = max_a2.max(a2);
                    Some(dir)
                } else {
                    None
                };
                blocks.push(Block { t: t_id, s: s_id, level, status, direction });
            }
            levels.push(first..blocks.len());
            next.sort_unstable();
            current = next;
            level += 1;
        }

        let admissible: Vec<usize> = (0..blocks.len()).filter(|&b| blocks[b].is_admissible()).collect();
        let inadmissible: Vec<usize> = (0..blocks.len())
            .filter(|&b| blocks[b].status == BlockStatus::InadmissibleLeaf)
            .collect();
        let target_dirs = DirectionSets::compute(
            target,
            table,
            admissible.iter().map(|&b| (blocks[b].t, blocks[b].direction.unwrap())),
        );
        let source_dirs = DirectionSets::compute(
            source,
            table,
            admissible.iter().map(|&b| (blocks[b].s, blocks[b].direction.unwrap())),
        );
        Ok(Self {
            blocks,
            levels,
            admissible,
            inadmissible,
            target_dirs,
            source_dirs,
            near_ties,
            max_a2_residual: max_a2,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> &Block {
        &self.blocks[index]
    }

    pub fn root(&self) -> &Block {
        &self.blocks[0]
    }

    /// Block indices on `level`, ordered by (target id, source id).
    pub fn level_blocks(&self, level: usize) -> Range<usize> {
        self.levels.get(level).cloned().unwrap_or(0..0)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Indices of admissible leaves.
    pub fn admissible(&self) -> &[usize] {
        &self.admissible
    }

    /// Indices of inadmissible leaves.
    pub fn inadmissible(&self) -> &[usize] {
        &self.inadmissible
    }

    pub fn target_directions(&self) -> &DirectionSets {
        &self.target_dirs
    }

    pub fn source_directions(&self) -> &DirectionSets {
        &self.source_dirs
    }

    /// Number of block pairs whose admissibility margin was within 1e-12 of zero.
    pub fn near_ties(&self) -> usize {
        self.near_ties
    }

    /// `max kappa |m_hat - c| max diam` over admissible leaves.
    pub fn max_a2_residual(&self) -> f64 {
        self.max_a2_residual
    }

    /// Number of nearfield matrix entries `sum #t * #s` over inadmissible leaves.
    pub fn nearfield_entries<T: Real>(&self, target: &ClusterTree<T>, source: &ClusterTree<T>) -> u64 {
        self.inadmissible
            .iter()
            .map(|&b| {
                let blk = &self.blocks[b];
                (target.node(blk.t).len() * source.node(blk.s).len()) as u64
            })
            .sum()
    }
}

/// Vector fed to the direction map. On a shared cubic lattice the integer
/// offset itself is used, so the projection onto the cube surface is exact.
fn direction_input<T: Real>(
    target: &ClusterTree<T>,
    source: &ClusterTree<T>,
    t: &ClusterNode<T>,
    s: &ClusterNode<T>,
    diff: Point3<T>,
) -> Point3<T> {
    let sides = target.root_box().sides();
    let cubic = sides.x == sides.y && sides.y == sides.z;
    if cubic && target.root_box() == source.root_box() {
        let off = t.coord.offset_from(&s.coord);
        Point3::new(T::from_i64_lossy(off[0]), T::from_i64_lossy(off[1]), T::from_i64_lossy(off[2]))
    } else {
        diff
    }
}

/// `m_t - m_s`, from lattice offsets when both trees share box sizes, so that
/// equal offsets yield bitwise equal differences.
pub fn midpoint_difference<T: Real>(
    target: &ClusterTree<T>,
    source: &ClusterTree<T>,
    t: &ClusterNode<T>,
    s: &ClusterNode<T>,
) -> Point3<T> {
    if target.root_box().sides() != source.root_box().sides() {
        return t.midpoint() - s.midpoint();
    }
    let side = target.level_sides(t.level()).to_array();
    let shift = (target.root_box().lower - source.root_box().lower).to_array();
    let off = t.coord.offset_from(&s.coord);
    Point3::new(
        shift[0] + T::from_i64_lossy(off[0]) * side[0],
        shift[1] + T::from_i64_lossy(off[1]) * side[1],
        shift[2] + T::from_i64_lossy(off[2]) * side[2],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::GridCoord;
    use crate::geometry::AxisBox;

    fn params(eta2: f64, kappa: f64) -> AdmissibilityParams<f64> {
        AdmissibilityParams::new(eta2, WaveNumber::new(kappa).unwrap()).unwrap()
    }

    #[test]
    fn identical_boxes_never_admissible() {
        let pts = vec![Point3::new(0.5, 0.5, 0.5)];
        let t = ClusterTree::build(&pts, AxisBox::cube(Point3::zero(), 1.0).unwrap(), 1).unwrap();
        assert!(!is_admissible(t.root(), t.root(), &params(5.0, 0.1)));
    }

    #[test]
    fn admissibility_plug_in() {
        // level-2 boxes of a (0,4]^3 root are unit cubes
        let root = AxisBox::new(Point3::new(0.0, 0.0, 0.0), Point3::new(4.0, 4.0, 4.0)).unwrap();
        let pts: Vec<_> = [0.5, 1.5, 2.5, 3.5].iter().map(|&x| Point3::new(x, 0.5, 0.5)).collect();
        let tree = ClusterTree::build(&pts, root, 1).unwrap();
        let a = tree.node_at(&GridCoord::new(2, 0, 0, 0)).unwrap();
        let b = tree.node_at(&GridCoord::new(2, 2, 0, 0)).unwrap();
        let dist = box_distance(&a.bbox, &b.bbox);
        assert!((dist - 1.0f64).abs() < 1e-11);
        assert!((box_diameter(&a.bbox) - 3f64.sqrt()).abs() < 1e-11);
        assert!(is_admissible(a, b, &params(5.0, 0.1)));
        assert!(!is_admissible(a, b, &params(5.0, 10.0)));
    }

    #[test]
    fn single_leaf_trees_give_one_nearfield_block() {
        let pts = vec![Point3::new(0.1, 0.2, 0.3), Point3::new(-0.4, 0.1, 0.0)];
        let tree = ClusterTree::build(&pts, AxisBox::cube(Point3::zero(), 1.0).unwrap(), 8).unwrap();
        let table = DirectionTable::build(-1, 0).unwrap();
        let bt = BlockTree::build(&tree, &tree, &params(5.0, 1.0), &table).unwrap();
        assert_eq!(bt.blocks().len(), 1);
        assert_eq!(bt.inadmissible(), &[0]);
        assert_eq!(bt.nearfield_entries(&tree, &tree), 4);
        assert!(bt.target_directions().needed(0).is_empty());
    }
}
