//! Per-level direction sets and the direction map onto them.
//!
//! Directions live on the surface of the cube `[-1, 1]^3`. On the largest high
//! frequency level the six face midpoints are used; every coarser level splits
//! each face cell of the next finer level into four and uses the normalized
//! cell midpoints. Levels above the high frequency range only carry the zero
//! direction.
//!
//! Face cells at subdivision depth `d` have dyadic bounds `-1 + 2 i / 2^d`,
//! which are exactly representable, so cell membership of the projected
//! vector is decided without rounding in the comparisons.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterNode;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scalar::Real;

/// Direction assigned on a given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DirectionId {
    Zero { level: u32 },
    Face { level: u32, index: u32 },
}

impl DirectionId {
    pub fn level(&self) -> usize {
        match *self {
            DirectionId::Zero { level } | DirectionId::Face { level, .. } => level as usize,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DirectionId::Zero { .. })
    }

    /// Position in the level's direction list; the zero direction is slot 0 of
    /// a low frequency level.
    pub fn ordinal(&self) -> usize {
        match *self {
            DirectionId::Zero { .. } => 0,
            DirectionId::Face { index, .. } => index as usize,
        }
    }
}

/// A face cell of the cube surface: face `0..6` in the order
/// x=-1, x=+1, y=-1, y=+1, z=-1, z=+1, with lattice position `(iu, iv)` on
/// the two remaining axes (ascending axis order) at subdivision depth `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaceCell {
    pub face: u8,
    pub depth: u32,
    pub iu: u32,
    pub iv: u32,
}

impl FaceCell {
    fn axes(face: u8) -> (usize, usize, usize) {
        match face / 2 {
            0 => (0, 1, 2),
            1 => (1, 0, 2),
            _ => (2, 0, 1),
        }
    }

    fn sign(face: u8) -> i32 {
        if face % 2 == 0 {
            -1
        } else {
            1
        }
    }

    /// Index in the level's face list. Children of a cell occupy four
    /// consecutive slots `4 j .. 4 j + 3`, ordered (u low, v low), (u low, v high),
    /// (u high, v low), (u high, v high).
    pub fn index(&self) -> u32 {
        let mut idx = self.face as u32;
        for b in (0..self.depth).rev() {
            idx = idx * 4 + 2 * ((self.iu >> b) & 1) + ((self.iv >> b) & 1);
        }
        idx
    }

    pub fn from_index(depth: u32, index: u32) -> FaceCell {
        let mut rest = index;
        let (mut iu, mut iv) = (0u32, 0u32);
        for b in 0..depth {
            let q = rest % 4;
            rest /= 4;
            iu |= (q >> 1) << b;
            iv |= (q & 1) << b;
        }
        FaceCell { face: rest as u8, depth, iu, iv }
    }

    /// The cell this one was split from.
    pub fn parent(&self) -> Option<FaceCell> {
        (self.depth > 0).then(|| FaceCell {
            face: self.face,
            depth: self.depth - 1,
            iu: self.iu / 2,
            iv: self.iv / 2,
        })
    }

    /// Cell midpoint on the cube surface (not normalized).
    pub fn midpoint<T: Real>(&self) -> Point3<T> {
        let (a, ua, va) = Self::axes(self.face);
        let mut p = [T::zero(); 3];
        p[a] = T::lit(Self::sign(self.face) as f64);
        p[ua] = dyadic::<T>(2 * self.iu + 1, self.depth + 1);
        p[va] = dyadic::<T>(2 * self.iv + 1, self.depth + 1);
        Point3::from_array(p)
    }

    pub fn area(&self) -> f64 {
        let w = 2.0 / (1u64 << self.depth) as f64;
        w * w
    }
}

/// `-1 + 2 num / 2^depth`, exact for the depths used here.
fn dyadic<T: Real>(num: u32, depth: u32) -> T {
    -T::one() + T::lit(2.0 * num as f64 / (1u64 << depth) as f64)
}

/// Closed cells along one face axis that contain `u in [-1, 1]`.
fn cells_containing<T: Real>(u: T, depth: u32) -> impl Iterator<Item = u32> {
    let n = 1u32 << depth;
    let guess = ((u + T::one()) * T::lit(n as f64 / 2.0)).floor().to_f64_lossy();
    let guess = guess.clamp(0.0, (n - 1) as f64) as i64;
    (guess - 1..=guess + 1)
        .filter(move |&i| i >= 0 && i < n as i64)
        .map(|i| i as u32)
        .filter(move |&i| dyadic::<T>(i, depth) <= u && u <= dyadic::<T>(i + 1, depth))
}

#[derive(Debug, Clone)]
struct LevelDirections<T> {
    /// Subdivision depth `l_hf - level` on high frequency levels.
    depth: Option<u32>,
    vectors: Vec<Point3<T>>,
    /// Index of the coarser-cell direction on `level + 1` for each entry.
    parent: Vec<Option<u32>>,
}

#[derive(Debug, Clone)]
pub struct DirectionTable<T> {
    l_hf: i32,
    levels: Vec<LevelDirections<T>>,
}

impl<T: Real> DirectionTable<T> {
    /// Builds the direction sets for levels `0..=max(max_level, l_hf)`.
    pub fn build(l_hf: i32, max_level: usize) -> Result<Self> {
        if l_hf < -1 {
            return Err(Error::InvalidParameter(format!(
                "largest high frequency level must be >= -1, got {l_hf}"
            )));
        }
        let top = max_level.max(l_hf.max(0) as usize);
        let levels = (0..=top)
            .map(|level| {
                if level as i32 > l_hf {
                    LevelDirections { depth: None, vectors: vec![Point3::zero()], parent: vec![None] }
                } else {
                    let depth = (l_hf - level as i32) as u32;
                    let count = 6 * 4usize.pow(depth);
                    let cells: Vec<FaceCell> =
                        (0..count as u32).map(|i| FaceCell::from_index(depth, i)).collect();
                    LevelDirections {
                        depth: Some(depth),
                        vectors: cells
                            .iter()
                            .map(|c| c.midpoint::<T>().normalized().expect("nonzero midpoint"))
                            .collect(),
                        parent: cells.iter().map(|c| c.parent().map(|p| p.index())).collect(),
                    }
                }
            })
            .collect();
        Ok(Self { l_hf, levels })
    }

    pub fn l_hf(&self) -> i32 {
        self.l_hf
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn is_high_frequency(&self, level: usize) -> bool {
        (level as i32) <= self.l_hf
    }

    /// Number of directions `#D^(level)`.
    pub fn count(&self, level: usize) -> usize {
        self.levels.get(level).map_or(1, |l| l.vectors.len())
    }

    /// Directions of `level` in table order.
    pub fn directions(&self, level: usize) -> &[Point3<T>] {
        self.levels.get(level).map_or(&[][..], |l| &l.vectors[..])
    }

    pub fn id(&self, level: usize, ordinal: usize) -> DirectionId {
        if self.is_high_frequency(level) {
            DirectionId::Face { level: level as u32, index: ordinal as u32 }
        } else {
            DirectionId::Zero { level: level as u32 }
        }
    }

    pub fn vector(&self, id: DirectionId) -> Point3<T> {
        match id {
            DirectionId::Zero { .. } => Point3::zero(),
            DirectionId::Face { level, index } => self.levels[level as usize].vectors[index as usize],
        }
    }

    /// Face cell of a high frequency direction.
    pub fn cell(&self, id: DirectionId) -> Option<FaceCell> {
        match id {
            DirectionId::Face { level, index } => {
                self.levels.get(level as usize)?.depth.map(|d| FaceCell::from_index(d, index))
            }
            DirectionId::Zero { .. } => None,
        }
    }

    /// Maps `v` to the direction of the first face cell (in table order) whose
    /// closure contains the central projection of `v` onto the cube surface.
    pub fn dir_map(&self, level: usize, v: Point3<T>) -> DirectionId {
        let zero = DirectionId::Zero { level: level as u32 };
        if !self.is_high_frequency(level) {
            return zero;
        }
        let m = v.max_abs();
        if !(m > T::zero()) {
            return zero;
        }
        let depth = (self.l_hf - level as i32) as u32;
        let p = [v.x / m, v.y / m, v.z / m];
        for face in 0..6u8 {
            let (a, ua, va) = FaceCell::axes(face);
            if p[a] != T::lit(FaceCell::sign(face) as f64) {
                continue;
            }
            let best = cells_containing(p[ua], depth)
                .flat_map(|iu| cells_containing(p[va], depth).map(move |iv| (iu, iv)))
                .map(|(iu, iv)| FaceCell { face, depth, iu, iv }.index())
                .min();
            if let Some(index) = best {
                return DirectionId::Face { level: level as u32, index };
            }
        }
        unreachable!("projection onto the cube surface lies on some face")
    }

    /// Direction assigned to the block `(t, s)` from the difference of the box midpoints.
    pub fn block_direction(
        &self,
        level: usize,
        t: &ClusterNode<T>,
        s: &ClusterNode<T>,
    ) -> Result<DirectionId> {
        self.direction_of_offset(level, t.midpoint() - s.midpoint())
    }

    /// Direction for a nonzero midpoint difference `m_t - m_s`.
    pub fn direction_of_offset(&self, level: usize, diff: Point3<T>) -> Result<DirectionId> {
        if !(diff.max_abs() > T::zero()) {
            return Err(Error::CoincidentMidpoints);
        }
        Ok(self.dir_map(level, diff))
    }

    /// `dir_(child_level)(c)` for a direction `c` of level `child_level - 1`.
    pub fn parent_direction(&self, child_level: usize, c: DirectionId) -> DirectionId {
        debug_assert_eq!(c.level() + 1, child_level);
        if !self.is_high_frequency(child_level) {
            return DirectionId::Zero { level: child_level as u32 };
        }
        match c {
            DirectionId::Zero { .. } => DirectionId::Zero { level: child_level as u32 },
            DirectionId::Face { .. } => self.dir_map(child_level, self.vector(c)),
        }
    }

    /// Nesting bookkeeping: the coarse cell a direction's cell was split from.
    pub fn construction_parent(&self, id: DirectionId) -> Option<DirectionId> {
        match id {
            DirectionId::Face { level, index } => self.levels[level as usize].parent[index as usize]
                .map(|p| DirectionId::Face { level: level + 1, index: p }),
            DirectionId::Zero { .. } => None,
        }
    }
}
