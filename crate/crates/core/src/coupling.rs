//! Coupling matrices between the interpolation nodes of admissible block pairs.
//!
//! For boxes of equal size the node geometry of a pair depends only on the
//! lattice offset between the boxes, and the direction is a function of that
//! offset, so one matrix per `(level, offset)` serves every translated copy.
//! Matrices can optionally be compressed with partially pivoted ACA.

use std::collections::HashMap;

use num_complex::Complex;

use crate::block::{midpoint_difference, Block, BlockTree};
use crate::cluster::ClusterTree;
use crate::directions::DirectionTable;
use crate::error::{Error, Result};
use crate::geometry::{directional_from_difference, Point3};
use crate::interpolation::{reference_nodes, InterpOrder};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CouplingKey {
    pub level: usize,
    pub offset: [i64; 3],
}

/// Key of an admissible block; the root boxes must agree up to translation.
pub fn coupling_key<T: Real>(
    target: &ClusterTree<T>,
    source: &ClusterTree<T>,
    block: &Block,
) -> Result<CouplingKey> {
    if target.root_box().sides() != source.root_box().sides() {
        return Err(Error::IncompatibleRoots);
    }
    let t = target.node(block.t);
    let s = source.node(block.s);
    Ok(CouplingKey { level: block.level, offset: t.coord.offset_from(&s.coord) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcaParams<T> {
    pub eps: T,
    pub max_rank: usize,
}

impl<T: Real> AcaParams<T> {
    pub fn new(eps: T) -> Result<Self> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(Error::InvalidParameter(format!("ACA tolerance must lie in (0, 1), got {eps}")));
        }
        Ok(Self { eps, max_rank: usize::MAX })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingMatrix<T> {
    /// Row-major `rows x cols`.
    Dense { rows: usize, cols: usize, data: Vec<Complex<T>> },
    /// `U V*`; `u[l]` has length `rows`, `v[l]` length `cols`.
    LowRank { rows: usize, cols: usize, u: Vec<Vec<Complex<T>>>, v: Vec<Vec<Complex<T>>> },
}

impl<T: Real> CouplingMatrix<T> {
    pub fn rows(&self) -> usize {
        match self {
            Self::Dense { rows, .. } | Self::LowRank { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Dense { cols, .. } | Self::LowRank { cols, .. } => *cols,
        }
    }

    /// `None` for dense storage.
    pub fn rank(&self) -> Option<usize> {
        match self {
            Self::Dense { .. } => None,
            Self::LowRank { u, .. } => Some(u.len()),
        }
    }

    /// `y += A x`.
    pub fn apply(&self, x: &[Complex<T>], y: &mut [Complex<T>]) {
        let zero = Complex::new(T::zero(), T::zero());
        match self {
            Self::Dense { cols, data, .. } => {
                for (yr, row) in y.iter_mut().zip(data.chunks_exact(*cols)) {
                    let mut acc = zero;
                    for (a, xv) in row.iter().zip(x) {
                        acc += *a * *xv;
                    }
                    *yr += acc;
                }
            }
            Self::LowRank { u, v, .. } => {
                for (ul, vl) in u.iter().zip(v) {
                    let mut w = zero;
                    for (a, xv) in vl.iter().zip(x) {
                        w += a.conj() * *xv;
                    }
                    for (yr, a) in y.iter_mut().zip(ul) {
                        *yr += *a * w;
                    }
                }
            }
        }
    }

    /// Dense row-major entries.
    pub fn to_dense(&self) -> Vec<Complex<T>> {
        match self {
            Self::Dense { data, .. } => data.clone(),
            Self::LowRank { rows, cols, u, v } => {
                let mut out = vec![Complex::new(T::zero(), T::zero()); rows * cols];
                for (ul, vl) in u.iter().zip(v) {
                    for (i, a) in ul.iter().enumerate() {
                        for (j, b) in vl.iter().enumerate() {
                            out[i * cols + j] += *a * b.conj();
                        }
                    }
                }
                out
            }
        }
    }

    pub fn bytes(&self) -> usize {
        let entries = match self {
            Self::Dense { data, .. } => data.len(),
            Self::LowRank { rows, cols, u, .. } => u.len() * (rows + cols),
        };
        entries * std::mem::size_of::<Complex<T>>()
    }
}

/// Dense coupling matrix `A[j, k] = f_c(xi_t_j, xi_s_k)` for a pair whose
/// midpoints differ by `diff` and whose boxes have half sides `half_t`, `half_s`.
///
/// Node differences are formed as `diff + xhat_j * half_t - xhat_k * half_s`
/// per axis, so translated pairs give bitwise identical matrices.
pub fn build_coupling_matrix<T: Real>(
    diff: Point3<T>,
    half_t: Point3<T>,
    half_s: Point3<T>,
    c: Point3<T>,
    kappa: T,
    m: InterpOrder,
) -> Result<CouplingMatrix<T>> {
    let reference = reference_nodes::<T>(m);
    let diff = diff.to_array();
    let (ht, hs) = (half_t.to_array(), half_s.to_array());
    // axis-wise difference tables: d[axis][j * p + k]
    let p = m.points_1d();
    let d: [Vec<T>; 3] = std::array::from_fn(|axis| {
        let mut tab = Vec::with_capacity(p * p);
        for &xj in &reference {
            for &xk in &reference {
                tab.push(diff[axis] + xj * ht[axis] - xk * hs[axis]);
            }
        }
        tab
    });
    let n = m.node_count();
    let mut data = Vec::with_capacity(n * n);
    for row in 0..n {
        let [ja, jb, jc] = m.unflat(row);
        for col in 0..n {
            let [ka, kb, kc] = m.unflat(col);
            let dv = Point3::new(d[0][ja * p + ka], d[1][jb * p + kb], d[2][jc * p + kc]);
            data.push(directional_from_difference(dv, c, kappa)?);
        }
    }
    Ok(CouplingMatrix::Dense { rows: n, cols: n, data })
}

/// Partially pivoted adaptive cross approximation of a dense matrix.
///
/// Returns the input unchanged when the rank needed reaches the break-even
/// point `2 k (rows + cols) >= 2 rows cols` or `params.max_rank`.
pub fn aca_compress<T: Real>(matrix: &CouplingMatrix<T>, params: &AcaParams<T>) -> CouplingMatrix<T> {
    let CouplingMatrix::Dense { rows, cols, data } = matrix else {
        return matrix.clone();
    };
    let (rows, cols) = (*rows, *cols);
    let zero = Complex::new(T::zero(), T::zero());
    let break_even = rows * cols / (rows + cols);
    let max_rank = params.max_rank.min(break_even);
    let mut u: Vec<Vec<Complex<T>>> = Vec::new();
    let mut v: Vec<Vec<Complex<T>>> = Vec::new();
    let mut used_rows = vec![false; rows];
    let mut norm2 = T::zero();
    let mut row = 0usize;
    loop {
        used_rows[row] = true;
        let mut r: Vec<Complex<T>> = data[row * cols..(row + 1) * cols].to_vec();
        for (ul, vl) in u.iter().zip(&v) {
            let a = ul[row];
            for (rj, b) in r.iter_mut().zip(vl) {
                *rj -= a * *b;
            }
        }
        let (pivot_col, pivot) = r
            .iter()
            .enumerate()
            .fold((0, T::zero()), |best, (j, z)| if z.norm() > best.1 { (j, z.norm()) } else { best });
        // rows whose residual is already below the target accuracy add nothing
        let negligible = params.eps * norm2.sqrt() / T::from_usize_lossy(rows * cols).sqrt();
        if pivot > negligible {
            if u.len() >= max_rank {
                return matrix.clone();
            }
            let inv = Complex::new(T::one(), T::zero()) / r[pivot_col];
            let vnew: Vec<Complex<T>> = r.iter().map(|z| *z * inv).collect();
            let mut unew: Vec<Complex<T>> = (0..rows).map(|i| data[i * cols + pivot_col]).collect();
            for (ul, vl) in u.iter().zip(&v) {
                let b = vl[pivot_col];
                for (ui, a) in unew.iter_mut().zip(ul) {
                    *ui -= *a * b;
                }
            }
            let nu = unew.iter().map(|z| z.norm_sqr()).sum::<T>();
            let nv = vnew.iter().map(|z| z.norm_sqr()).sum::<T>();
            let mut cross = zero;
            for (ul, vl) in u.iter().zip(&v) {
                let cu: Complex<T> = ul.iter().zip(&unew).map(|(a, b)| a.conj() * *b).sum();
                let cv: Complex<T> = vl.iter().zip(&vnew).map(|(a, b)| a.conj() * *b).sum();
                cross += cu * cv;
            }
            norm2 = norm2 + nu * nv + T::lit(2.0) * cross.re;
            u.push(unew);
            v.push(vnew);
            if (nu * nv).sqrt() <= params.eps * norm2.abs().sqrt() {
                break;
            }
        }
        let last = u.last();
        let next = (0..rows).filter(|&i| !used_rows[i]).fold(None, |best: Option<(usize, T)>, i| {
            let w = last.map_or(T::zero(), |ul| ul[i].norm());
            match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((i, w)),
            }
        });
        match next {
            Some((i, _)) => row = i,
            None => break,
        }
    }
    let v = v.into_iter().map(|vl| vl.into_iter().map(|z| z.conj()).collect()).collect();
    CouplingMatrix::LowRank { rows, cols, u, v }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions<T> {
    /// Share one matrix between translated copies of a block.
    pub dedup: bool,
    pub aca: Option<AcaParams<T>>,
}

impl<T> Default for CouplingOptions<T> {
    fn default() -> Self {
        Self { dedup: true, aca: None }
    }
}

/// Coupling matrices of all admissible leaves.
#[derive(Debug, Clone)]
pub struct CouplingCache<T> {
    matrices: Vec<CouplingMatrix<T>>,
    keys: HashMap<CouplingKey, usize>,
    /// Matrix index for each entry of `BlockTree::admissible`.
    assignment: Vec<usize>,
}

impl<T: Real> CouplingCache<T> {
    pub fn build(
        target: &ClusterTree<T>,
        source: &ClusterTree<T>,
        blocks: &BlockTree,
        table: &DirectionTable<T>,
        kappa: T,
        m: InterpOrder,
        options: &CouplingOptions<T>,
    ) -> Result<Self> {
        let half = T::lit(0.5);
        let mut matrices = Vec::new();
        let mut keys = HashMap::new();
        let mut assignment = Vec::with_capacity(blocks.admissible().len());
        for &b in blocks.admissible() {
            let blk = blocks.block(b);
            let key = if options.dedup { Some(coupling_key(target, source, blk)?) } else { None };
            if let Some(&idx) = key.as_ref().and_then(|k| keys.get(k)) {
                assignment.push(idx);
                continue;
            }
            let t = target.node(blk.t);
            let s = source.node(blk.s);
            let c = table.vector(blk.direction.expect("admissible blocks carry a direction"));
            let dense = build_coupling_matrix(
                midpoint_difference(target, source, t, s),
                target.level_sides(blk.level).scale(half),
                source.level_sides(blk.level).scale(half),
                c,
                kappa,
                m,
            )?;
            let matrix = match &options.aca {
                Some(p) => aca_compress(&dense, p),
                None => dense,
            };
            let idx = matrices.len();
            matrices.push(matrix);
            if let Some(k) = key {
                keys.insert(k, idx);
            }
            assignment.push(idx);
        }
        Ok(Self { matrices, keys, assignment })
    }

    /// Stored matrices `N_SC`.
    pub fn num_stored(&self) -> usize {
        self.matrices.len()
    }

    /// Block assignments `N_C`.
    pub fn num_assigned(&self) -> usize {
        self.assignment.len()
    }

    pub fn matrices(&self) -> &[CouplingMatrix<T>] {
        &self.matrices
    }

    /// Matrix of the `i`-th admissible leaf.
    pub fn for_admissible(&self, i: usize) -> &CouplingMatrix<T> {
        &self.matrices[self.assignment[i]]
    }

    pub fn get(&self, key: &CouplingKey) -> Option<&CouplingMatrix<T>> {
        self.keys.get(key).map(|&i| &self.matrices[i])
    }

    pub fn bytes(&self) -> usize {
        self.matrices.iter().map(|a| a.bytes()).sum()
    }
}
