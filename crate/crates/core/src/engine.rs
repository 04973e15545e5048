//! Fast directional matrix-vector multiplication.
//!
//! The farfield is evaluated in five phases: leaf moments (S2M), upward
//! transfers (M2M), coupling (M2L), downward transfers (L2L) and leaf
//! evaluation (L2T). Inadmissible leaves are evaluated directly.
//!
//! Accumulation order is fixed: boxes in tree order, directions in table
//! order, coupling blocks in block-tree order. Two runs on the same input
//! produce bitwise identical output.

use std::sync::Mutex;
use std::time::Instant;

use num_complex::Complex;
use serde::Serialize;

use crate::block::BlockTree;
use crate::cluster::{ClusterTree, NodeId};
use crate::coupling::{CouplingCache, CouplingOptions};
use crate::directions::{DirectionId, DirectionTable};
use crate::error::{Error, Result};
use crate::geometry::{kernel_from_distance, Point3, WaveNumber};
use crate::interpolation::{build_directional_diag, BasisEvaluator, InterpOrder, TensorNodes, TransferRef};
use crate::scalar::{unit_phase, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConfig<T> {
    pub order: InterpOrder,
    pub coupling: CouplingOptions<T>,
    /// Skip pairs whose original source and target indices coincide. Meant
    /// for target and source sets that are the same point set.
    pub zero_diagonal: bool,
    /// Store nearfield entries at setup instead of evaluating them per matvec.
    pub cache_nearfield: bool,
}

impl<T> OperatorConfig<T> {
    pub fn new(order: InterpOrder) -> Self {
        Self { order, coupling: CouplingOptions::default(), zero_diagonal: false, cache_nearfield: false }
    }
}

/// Wall times of the last matvec, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub s2m: f64,
    pub m2m: f64,
    pub m2l: f64,
    pub l2l: f64,
    pub l2t: f64,
    pub nearfield: f64,
}

impl PhaseTimings {
    pub fn farfield(&self) -> f64 {
        self.s2m + self.m2m + self.m2l + self.l2l + self.l2t
    }

    pub fn total(&self) -> f64 {
        self.farfield() + self.nearfield
    }
}

/// Operations performed by one matvec, counted while it runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AppliedCounts {
    pub s2m: u64,
    pub m2m: u64,
    pub m2l: u64,
    pub l2l: u64,
    pub l2t: u64,
    pub nearfield_blocks: u64,
    pub nearfield_entries: u64,
}

impl AppliedCounts {
    /// Transfer and interpolation applications.
    pub fn n_le(&self) -> u64 {
        self.s2m + self.m2m + self.l2l + self.l2t
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub n_le: u64,
    pub n_c: u64,
    pub n_sc: u64,
    pub m_d: u64,
    pub nf_percent: f64,
    pub bytes_stored: u64,
    pub max_a2_residual: f64,
    pub near_ties: u64,
    pub setup_seconds: f64,
    pub timings: Option<PhaseTimings>,
}

/// Per-box vectors of length `(m+1)^3`, one per needed direction.
#[derive(Debug, Clone)]
pub struct MomentStore<T> {
    n: usize,
    /// Sorted direction ordinals of each box.
    dirs: Vec<Vec<u32>>,
    offsets: Vec<usize>,
    data: Vec<Complex<T>>,
}

impl<T: Real> MomentStore<T> {
    fn new(dirs: Vec<Vec<u32>>, n: usize) -> Self {
        let mut offsets = Vec::with_capacity(dirs.len() + 1);
        let mut total = 0;
        for d in &dirs {
            offsets.push(total);
            total += d.len() * n;
        }
        offsets.push(total);
        Self { n, dirs, offsets, data: vec![Complex::new(T::zero(), T::zero()); total] }
    }

    fn zeroed(&self) -> Self {
        Self {
            n: self.n,
            dirs: self.dirs.clone(),
            offsets: self.offsets.clone(),
            data: vec![Complex::new(T::zero(), T::zero()); self.data.len()],
        }
    }

    fn slot(&self, node: NodeId, ordinal: u32) -> Option<usize> {
        let pos = self.dirs[node].binary_search(&ordinal).ok()?;
        Some(self.offsets[node] + pos * self.n)
    }

    /// Directions stored for `node`.
    pub fn directions(&self, node: NodeId) -> &[u32] {
        &self.dirs[node]
    }

    pub fn get(&self, node: NodeId, ordinal: u32) -> Option<&[Complex<T>]> {
        self.slot(node, ordinal).map(|o| &self.data[o..o + self.n])
    }

    fn get_mut(&mut self, node: NodeId, ordinal: u32) -> Option<&mut [Complex<T>]> {
        let n = self.n;
        self.slot(node, ordinal).map(move |o| &mut self.data[o..o + n])
    }

    /// Copies out the slot so that another slot of the same store can be written.
    fn read(&self, node: NodeId, ordinal: u32) -> Vec<Complex<T>> {
        self.get(node, ordinal).expect("direction stored for box").to_vec()
    }

    pub fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<Complex<T>>()
    }
}

/// Precomputed operator for `g = A v` with `A[i, j] = f(x_i, y_j)`.
#[derive(Debug)]
pub struct Operator<T> {
    target: ClusterTree<T>,
    source: ClusterTree<T>,
    table: DirectionTable<T>,
    blocks: BlockTree,
    kappa: T,
    config: OperatorConfig<T>,
    transfer: TransferRef<T>,
    coupling: CouplingCache<T>,
    moments: MomentStore<T>,
    locals: MomentStore<T>,
    near_cache: Option<Vec<Vec<Complex<T>>>>,
    stats: RunStats,
    timings: Mutex<Option<PhaseTimings>>,
    last_counts: Mutex<Option<AppliedCounts>>,
}

impl<T: Real> Operator<T> {
    pub fn setup(
        target: ClusterTree<T>,
        source: ClusterTree<T>,
        blocks: BlockTree,
        table: DirectionTable<T>,
        kappa: WaveNumber<T>,
        config: OperatorConfig<T>,
    ) -> Result<Self> {
        let start = Instant::now();
        let kappa = kappa.get();
        let m = config.order;
        let n = m.node_count();
        let transfer = TransferRef::build(m);
        let coupling = CouplingCache::build(&target, &source, &blocks, &table, kappa, m, &config.coupling)?;
        let source_dirs: Vec<Vec<u32>> =
            (0..source.num_nodes()).map(|id| blocks.source_directions().needed(id)).collect();
        let target_dirs: Vec<Vec<u32>> =
            (0..target.num_nodes()).map(|id| blocks.target_directions().needed(id)).collect();
        let moments = MomentStore::new(source_dirs, n);
        let locals = MomentStore::new(target_dirs, n);

        let mut op = Self {
            target,
            source,
            table,
            blocks,
            kappa,
            config,
            transfer,
            coupling,
            moments,
            locals,
            near_cache: None,
            stats: RunStats::default(),
            timings: Mutex::new(None),
            last_counts: Mutex::new(None),
        };
        if config.cache_nearfield {
            op.near_cache = Some(op.build_near_cache()?);
        }
        let expected = op.expected_counts();
        let m_d = op.blocks.nearfield_entries(&op.target, &op.source);
        let total = (op.target.num_points() * op.source.num_points()) as f64;
        let near_bytes = op.near_cache.as_ref().map_or(0, |c| {
            c.iter().map(|b| b.len() * std::mem::size_of::<Complex<T>>()).sum::<usize>()
        });
        op.stats = RunStats {
            n_le: expected.n_le(),
            n_c: op.coupling.num_assigned() as u64,
            n_sc: op.coupling.num_stored() as u64,
            m_d,
            nf_percent: 100.0 * m_d as f64 / total,
            bytes_stored: (op.coupling.bytes()
                + op.transfer.bytes()
                + op.moments.bytes()
                + op.locals.bytes()
                + near_bytes) as u64,
            max_a2_residual: op.blocks.max_a2_residual(),
            near_ties: op.blocks.near_ties() as u64,
            setup_seconds: start.elapsed().as_secs_f64(),
            timings: None,
        };
        Ok(op)
    }

    pub fn target(&self) -> &ClusterTree<T> {
        &self.target
    }

    pub fn source(&self) -> &ClusterTree<T> {
        &self.source
    }

    pub fn block_tree(&self) -> &BlockTree {
        &self.blocks
    }

    pub fn directions(&self) -> &DirectionTable<T> {
        &self.table
    }

    pub fn coupling(&self) -> &CouplingCache<T> {
        &self.coupling
    }

    pub fn transfer(&self) -> &TransferRef<T> {
        &self.transfer
    }

    pub fn config(&self) -> &OperatorConfig<T> {
        &self.config
    }

    /// Counters; timings are those of the last matvec, if any.
    pub fn stats(&self) -> RunStats {
        RunStats { timings: self.last_timings(), ..self.stats.clone() }
    }

    /// Operation counts recorded by the last matvec.
    pub fn last_counts(&self) -> Option<AppliedCounts> {
        *self.last_counts.lock().expect("counter lock")
    }

    /// Counts implied by the block tree and the direction sets.
    pub fn expected_counts(&self) -> AppliedCounts {
        let count = |tree: &ClusterTree<T>, store: &MomentStore<T>| {
            let leaf = tree.leaves().iter().map(|&id| store.directions(id).len() as u64).sum::<u64>();
            let transfer = (0..tree.num_nodes())
                .filter_map(|id| tree.node(id).parent.map(|p| store.directions(p).len() as u64))
                .sum::<u64>();
            (leaf, transfer)
        };
        let (s2m, m2m) = count(&self.source, &self.moments);
        let (l2t, l2l) = count(&self.target, &self.locals);
        AppliedCounts {
            s2m,
            m2m,
            m2l: self.coupling.num_assigned() as u64,
            l2l,
            l2t,
            nearfield_blocks: self.blocks.inadmissible().len() as u64,
            nearfield_entries: self.blocks.nearfield_entries(&self.target, &self.source),
        }
    }

    fn check_len(&self, v: &[Complex<T>]) -> Result<()> {
        if v.len() != self.source.num_points() {
            return Err(Error::DimensionMismatch { expected: self.source.num_points(), got: v.len() });
        }
        Ok(())
    }

    /// `g ~ A v`; `v` and the result are in original point order.
    pub fn matvec(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.run(v, true, true)
    }

    /// Farfield part only.
    pub fn farfield(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.run(v, true, false)
    }

    /// Nearfield part only.
    pub fn nearfield(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.run(v, false, true)
    }

    /// Timings of the last call to [`Self::matvec`], [`Self::farfield`] or [`Self::nearfield`].
    pub fn last_timings(&self) -> Option<PhaseTimings> {
        *self.timings.lock().expect("timing lock")
    }

    fn run(&self, v: &[Complex<T>], far: bool, near: bool) -> Result<Vec<Complex<T>>> {
        self.check_len(v)?;
        let mut counts = AppliedCounts::default();
        let mut timings = PhaseTimings::default();
        let v_tree = self.source.gather(v);
        let zero = Complex::new(T::zero(), T::zero());
        let mut g_tree = vec![zero; self.target.num_points()];
        if far && !self.blocks.admissible().is_empty() {
            let mut clock = Instant::now();
            let mut lap = |slot: &mut f64| {
                *slot = clock.elapsed().as_secs_f64();
                clock = Instant::now();
            };
            let mut moments = self.moments.zeroed();
            self.s2m(&v_tree, &mut moments, &mut counts);
            lap(&mut timings.s2m);
            self.m2m(&mut moments, &mut counts)?;
            lap(&mut timings.m2m);
            let mut locals = self.locals.zeroed();
            self.m2l(&moments, &mut locals, &mut counts);
            lap(&mut timings.m2l);
            self.l2l(&mut locals, &mut counts)?;
            lap(&mut timings.l2l);
            self.l2t(&locals, &mut g_tree, &mut counts);
            lap(&mut timings.l2t);
        }
        if near {
            let clock = Instant::now();
            self.near(&v_tree, &mut g_tree, &mut counts)?;
            timings.nearfield = clock.elapsed().as_secs_f64();
        }
        let mut g = vec![zero; self.target.num_points()];
        self.target.scatter_add(&g_tree, &mut g);
        *self.timings.lock().expect("timing lock") = Some(timings);
        *self.last_counts.lock().expect("counter lock") = Some(counts);
        Ok(g)
    }

    fn direction_vector(&self, level: usize, ordinal: u32) -> (DirectionId, Point3<T>) {
        let id = self.table.id(level, ordinal as usize);
        (id, self.table.vector(id))
    }

    /// Per-point 1D basis factors of `node`'s box, `3 (m+1)` values per point.
    fn leaf_factors(&self, tree: &ClusterTree<T>, node: NodeId) -> Vec<T> {
        let p = self.config.order.points_1d();
        let nd = tree.node(node);
        let eval = BasisEvaluator::new(&nd.bbox, self.config.order);
        let mut out = vec![T::zero(); 3 * p * nd.len()];
        for (x, f) in tree.node_points(node).iter().zip(out.chunks_exact_mut(3 * p)) {
            let (lx, rest) = f.split_at_mut(p);
            let (ly, lz) = rest.split_at_mut(p);
            eval.factors(*x, lx, ly, lz);
        }
        out
    }

    /// `out += L*_{node,c} v|node` with `v` in tree order.
    fn accumulate_moment(
        &self,
        node: NodeId,
        c: Point3<T>,
        factors: &[T],
        v_tree: &[Complex<T>],
        out: &mut [Complex<T>],
    ) {
        let p = self.config.order.points_1d();
        let nd = self.source.node(node);
        let points = self.source.node_points(node);
        for ((y, f), vj) in points.iter().zip(factors.chunks_exact(3 * p)).zip(&v_tree[nd.range()]) {
            let w = *vj * unit_phase(-(self.kappa * y.dot(c)));
            let (lx, rest) = f.split_at(p);
            let (ly, lz) = rest.split_at(p);
            let mut idx = 0;
            for &a in lx {
                let wa = w * a;
                for &b in ly {
                    let wab = wa * b;
                    for &cz in lz {
                        out[idx] += wab * cz;
                        idx += 1;
                    }
                }
            }
        }
    }

    fn s2m(&self, v_tree: &[Complex<T>], moments: &mut MomentStore<T>, counts: &mut AppliedCounts) {
        for &leaf in self.source.leaves() {
            if moments.directions(leaf).is_empty() {
                continue;
            }
            let factors = self.leaf_factors(&self.source, leaf);
            let level = self.source.node(leaf).level();
            for ord in moments.directions(leaf).to_vec() {
                let (_, c) = self.direction_vector(level, ord);
                let out = moments.get_mut(leaf, ord).expect("stored direction");
                self.accumulate_moment(leaf, c, &factors, v_tree, out);
                counts.s2m += 1;
            }
        }
    }

    /// Child direction and the diagonal `exp(i kappa <xi_child, c - c_child>)`,
    /// or `None` for the diagonal when it is the identity.
    fn child_transfer(
        &self,
        tree: &ClusterTree<T>,
        child: NodeId,
        c: Point3<T>,
        c_id: DirectionId,
    ) -> Result<(u32, Option<Vec<Complex<T>>>)> {
        let level = tree.node(child).level();
        let cc_id = self.table.parent_direction(level, c_id);
        let cc = self.table.vector(cc_id);
        if cc == c {
            return Ok((cc_id.ordinal() as u32, None));
        }
        let nodes = TensorNodes::for_box(&tree.node(child).bbox, self.config.order)?;
        Ok((cc_id.ordinal() as u32, Some(build_directional_diag(&nodes.points, c, cc, self.kappa))))
    }

    fn m2m(&self, moments: &mut MomentStore<T>, counts: &mut AppliedCounts) -> Result<()> {
        let tree = &self.source;
        for level in (0..tree.num_levels().saturating_sub(1)).rev() {
            for id in tree.level_ids(level) {
                let node = tree.node(id);
                for ord in moments.directions(id).to_vec() {
                    let (c_id, c) = self.direction_vector(level, ord);
                    for &child in &node.children {
                        let (child_ord, diag) = self.child_transfer(tree, child, c, c_id)?;
                        let mut q = moments.read(child, child_ord);
                        if let Some(d) = diag {
                            for (qi, di) in q.iter_mut().zip(&d) {
                                *qi *= di.conj();
                            }
                        }
                        let out = moments.get_mut(id, ord).expect("stored direction");
                        self.transfer.apply_transpose_factored(tree.node(child).coord.octant(), &q, out);
                        counts.m2m += 1;
                    }
                }
            }
        }
        Ok(())
    }

    fn m2l(&self, moments: &MomentStore<T>, locals: &mut MomentStore<T>, counts: &mut AppliedCounts) {
        for (i, &b) in self.blocks.admissible().iter().enumerate() {
            let blk = self.blocks.block(b);
            let ord = blk.direction.expect("admissible blocks carry a direction").ordinal() as u32;
            let q = moments.get(blk.s, ord).expect("stored direction");
            let g = locals.get_mut(blk.t, ord).expect("stored direction");
            self.coupling.for_admissible(i).apply(q, g);
            counts.m2l += 1;
        }
    }

    fn l2l(&self, locals: &mut MomentStore<T>, counts: &mut AppliedCounts) -> Result<()> {
        let tree = &self.target;
        let zero = Complex::new(T::zero(), T::zero());
        for level in 0..tree.num_levels().saturating_sub(1) {
            for id in tree.level_ids(level) {
                let node = tree.node(id);
                for ord in locals.directions(id).to_vec() {
                    let (c_id, c) = self.direction_vector(level, ord);
                    let g = locals.read(id, ord);
                    for &child in &node.children {
                        let (child_ord, diag) = self.child_transfer(tree, child, c, c_id)?;
                        let mut tmp = vec![zero; g.len()];
                        self.transfer.apply_factored(tree.node(child).coord.octant(), &g, &mut tmp);
                        if let Some(d) = diag {
                            for (ti, di) in tmp.iter_mut().zip(&d) {
                                *ti *= *di;
                            }
                        }
                        let out = locals.get_mut(child, child_ord).expect("stored direction");
                        for (o, t) in out.iter_mut().zip(&tmp) {
                            *o += *t;
                        }
                        counts.l2l += 1;
                    }
                }
            }
        }
        Ok(())
    }

    fn l2t(&self, locals: &MomentStore<T>, g_tree: &mut [Complex<T>], counts: &mut AppliedCounts) {
        let p = self.config.order.points_1d();
        let zero = Complex::new(T::zero(), T::zero());
        for &leaf in self.target.leaves() {
            if locals.directions(leaf).is_empty() {
                continue;
            }
            let factors = self.leaf_factors(&self.target, leaf);
            let node = self.target.node(leaf);
            let points = self.target.node_points(leaf);
            let out = &mut g_tree[node.range()];
            for &ord in locals.directions(leaf) {
                let (_, c) = self.direction_vector(node.level(), ord);
                let g = locals.get(leaf, ord).expect("stored direction");
                for ((x, f), o) in points.iter().zip(factors.chunks_exact(3 * p)).zip(out.iter_mut()) {
                    let (lx, rest) = f.split_at(p);
                    let (ly, lz) = rest.split_at(p);
                    let mut acc = zero;
                    let mut idx = 0;
                    for &a in lx {
                        let mut acc_a = zero;
                        for &b in ly {
                            let mut acc_b = zero;
                            for &cz in lz {
                                acc_b += g[idx] * cz;
                                idx += 1;
                            }
                            acc_a += acc_b * b;
                        }
                        acc += acc_a * a;
                    }
                    *o += acc * unit_phase(self.kappa * x.dot(c));
                }
                counts.l2t += 1;
            }
        }
    }

    fn near(&self, v_tree: &[Complex<T>], g_tree: &mut [Complex<T>], counts: &mut AppliedCounts) -> Result<()> {
        let zero = Complex::new(T::zero(), T::zero());
        for (k, &b) in self.blocks.inadmissible().iter().enumerate() {
            let blk = self.blocks.block(b);
            let (t, s) = (self.target.node(blk.t), self.source.node(blk.s));
            let vs = &v_tree[s.range()];
            if let Some(cache) = &self.near_cache {
                for (row, gi) in cache[k].chunks_exact(s.len()).zip(&mut g_tree[t.range()]) {
                    let mut acc = zero;
                    for (a, vj) in row.iter().zip(vs) {
                        acc += *a * *vj;
                    }
                    *gi += acc;
                }
            } else {
                let ys = self.source.node_points(blk.s);
                let ps = &self.source.permutation()[s.range()];
                let xs = self.target.node_points(blk.t);
                let pt = &self.target.permutation()[t.range()];
                for ((x, &ix), gi) in xs.iter().zip(pt).zip(&mut g_tree[t.range()]) {
                    let mut acc = zero;
                    for ((y, &iy), vj) in ys.iter().zip(ps).zip(vs) {
                        if self.config.zero_diagonal && ix == iy {
                            continue;
                        }
                        let r = (*x - *y).norm();
                        if r == T::zero() {
                            return Err(Error::SingularPoint);
                        }
                        acc += kernel_from_distance(r, self.kappa) * *vj;
                    }
                    *gi += acc;
                }
            }
            counts.nearfield_blocks += 1;
            counts.nearfield_entries += (t.len() * s.len()) as u64;
        }
        Ok(())
    }

    fn build_near_cache(&self) -> Result<Vec<Vec<Complex<T>>>> {
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = Vec::with_capacity(self.blocks.inadmissible().len());
        for &b in self.blocks.inadmissible() {
            let blk = self.blocks.block(b);
            let ys = self.source.node_points(blk.s);
            let ps = &self.source.permutation()[self.source.node(blk.s).range()];
            let xs = self.target.node_points(blk.t);
            let pt = &self.target.permutation()[self.target.node(blk.t).range()];
            let mut entries = Vec::with_capacity(xs.len() * ys.len());
            for (x, &ix) in xs.iter().zip(pt) {
                for (y, &iy) in ys.iter().zip(ps) {
                    if self.config.zero_diagonal && ix == iy {
                        entries.push(zero);
                        continue;
                    }
                    let r = (*x - *y).norm();
                    if r == T::zero() {
                        return Err(Error::SingularPoint);
                    }
                    entries.push(kernel_from_distance(r, self.kappa));
                }
            }
            out.push(entries);
        }
        Ok(out)
    }

    /// Source moments after S2M and M2M, for inspection.
    pub fn compute_moments(&self, v: &[Complex<T>]) -> Result<MomentStore<T>> {
        self.check_len(v)?;
        let v_tree = self.source.gather(v);
        let mut moments = self.moments.zeroed();
        let mut counts = AppliedCounts::default();
        self.s2m(&v_tree, &mut moments, &mut counts);
        self.m2m(&mut moments, &mut counts)?;
        Ok(moments)
    }

    /// Moment of `node` for direction `ordinal` computed directly from the
    /// points it contains, bypassing the transfers.
    pub fn direct_moment(&self, node: NodeId, ordinal: u32, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.check_len(v)?;
        let v_tree = self.source.gather(v);
        let (_, c) = self.direction_vector(self.source.node(node).level(), ordinal);
        let factors = self.leaf_factors(&self.source, node);
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.config.order.node_count()];
        self.accumulate_moment(node, c, &factors, &v_tree, &mut out);
        Ok(out)
    }
}
