//! Tensor Chebyshev interpolation on boxes.
//!
//! Multi-indices `(a, b, c)` over `{0..=m}^3` are flattened lexicographically
//! with the last index fastest: `(a * (m + 1) + b) * (m + 1) + c`. The same
//! order is used for node lists, interpolation matrix columns, transfer
//! matrices, directional diagonals and coupling matrix axes.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Point3};
use crate::scalar::{unit_phase, Real};

/// Interpolation degree `m`; `(m + 1)^3` tensor nodes per box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InterpOrder(usize);

impl InterpOrder {
    pub fn new(m: usize) -> Self {
        Self(m)
    }

    #[inline]
    pub fn degree(self) -> usize {
        self.0
    }

    /// Nodes per axis.
    #[inline]
    pub fn points_1d(self) -> usize {
        self.0 + 1
    }

    #[inline]
    pub fn node_count(self) -> usize {
        let p = self.0 + 1;
        p * p * p
    }

    #[inline]
    pub fn flat(self, a: usize, b: usize, c: usize) -> usize {
        let p = self.0 + 1;
        (a * p + b) * p + c
    }

    #[inline]
    pub fn unflat(self, idx: usize) -> [usize; 3] {
        let p = self.0 + 1;
        [idx / (p * p), (idx / p) % p, idx % p]
    }
}

/// Chebyshev nodes of `[-1, 1]`: `cos((2 nu - 1) pi / (2 (m + 1)))`, `nu = 1..=m+1`.
pub fn reference_nodes<T: Real>(m: InterpOrder) -> Vec<T> {
    let p = m.points_1d();
    (1..=p)
        .map(|nu| {
            let arg = T::from_usize_lossy(2 * nu - 1) * T::PI() / T::from_usize_lossy(2 * p);
            arg.cos()
        })
        .collect()
}

/// Chebyshev nodes mapped affinely onto `[a, b]`.
pub fn chebyshev_nodes<T: Real>(a: T, b: T, m: InterpOrder) -> Result<Vec<T>> {
    if !(a < b) {
        return Err(Error::DegenerateInterval { a: a.to_f64_lossy(), b: b.to_f64_lossy() });
    }
    let mid = (a + b) * T::lit(0.5);
    let half = (b - a) * T::lit(0.5);
    Ok(reference_nodes(m).into_iter().map(|x| mid + half * x).collect())
}

/// Lagrange basis polynomial `idx` of `nodes`, evaluated at `x` by the product formula.
pub fn lagrange_eval<T: Real>(nodes: &[T], idx: usize, x: T) -> T {
    let xi = nodes[idx];
    nodes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != idx)
        .fold(T::one(), |acc, (_, &xj)| acc * (x - xj) / (xi - xj))
}

/// All Lagrange basis values of `nodes` at `x`.
#[inline]
pub fn lagrange_all<T: Real>(nodes: &[T], x: T, out: &mut [T]) {
    for (idx, o) in out.iter_mut().enumerate() {
        *o = lagrange_eval(nodes, idx, x);
    }
}

/// Maps `x` from `[lo, hi]` to `[-1, 1]`.
#[inline]
pub fn to_reference<T: Real>(x: T, lo: T, hi: T) -> T {
    (x + x - (lo + hi)) / (hi - lo)
}

/// Tensor Chebyshev nodes of one box.
#[derive(Debug, Clone)]
pub struct TensorNodes<T> {
    pub axes: [Vec<T>; 3],
    pub points: Vec<Point3<T>>,
}

impl<T: Real> TensorNodes<T> {
    pub fn for_box(b: &AxisBox<T>, m: InterpOrder) -> Result<Self> {
        let axes = [
            chebyshev_nodes(b.lower.x, b.upper.x, m)?,
            chebyshev_nodes(b.lower.y, b.upper.y, m)?,
            chebyshev_nodes(b.lower.z, b.upper.z, m)?,
        ];
        let mut points = Vec::with_capacity(m.node_count());
        for &x in &axes[0] {
            for &y in &axes[1] {
                for &z in &axes[2] {
                    points.push(Point3::new(x, y, z));
                }
            }
        }
        Ok(Self { axes, points })
    }
}

/// Evaluates the three 1D Lagrange factors of the box basis at `x`.
pub struct BasisEvaluator<T> {
    reference: Vec<T>,
    lower: Point3<T>,
    upper: Point3<T>,
}

impl<T: Real> BasisEvaluator<T> {
    pub fn new(b: &AxisBox<T>, m: InterpOrder) -> Self {
        Self { reference: reference_nodes(m), lower: b.lower, upper: b.upper }
    }

    /// Writes the per-axis factors into `lx`, `ly`, `lz` (each of length `m + 1`).
    #[inline]
    pub fn factors(&self, p: Point3<T>, lx: &mut [T], ly: &mut [T], lz: &mut [T]) {
        lagrange_all(&self.reference, to_reference(p.x, self.lower.x, self.upper.x), lx);
        lagrange_all(&self.reference, to_reference(p.y, self.lower.y, self.upper.y), ly);
        lagrange_all(&self.reference, to_reference(p.z, self.lower.z, self.upper.z), lz);
    }

    /// Tensor basis values in flattened order.
    pub fn values(&self, p: Point3<T>, out: &mut [T]) {
        let n = self.reference.len();
        let (mut lx, mut ly, mut lz) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
        self.factors(p, &mut lx, &mut ly, &mut lz);
        let mut idx = 0;
        for &a in &lx {
            for &b in &ly {
                let ab = a * b;
                for &c in &lz {
                    out[idx] = ab * c;
                    idx += 1;
                }
            }
        }
    }
}

/// Dense row-major matrix of directional basis values at a point set:
/// `entry[j, k] = L_k(x_j) exp(i kappa <x_j, c>)`.
#[derive(Debug, Clone)]
pub struct InterpMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> InterpMatrix<T> {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.cols + col]
    }
}

pub fn build_interp_matrix<T: Real>(
    points: &[Point3<T>],
    b: &AxisBox<T>,
    c: Point3<T>,
    kappa: T,
    m: InterpOrder,
) -> InterpMatrix<T> {
    let n = m.node_count();
    let eval = BasisEvaluator::new(b, m);
    let mut basis = vec![T::zero(); n];
    let mut data = Vec::with_capacity(points.len() * n);
    for &x in points {
        eval.values(x, &mut basis);
        let phase = unit_phase(kappa * x.dot(c));
        data.extend(basis.iter().map(|&l| phase * l));
    }
    InterpMatrix { rows: points.len(), cols: n, data }
}

/// Non-directional transfer matrices for the eight children of a reference
/// box: `E[o][j, k] = L_parent_k(xi_child_o_j)`.
///
/// These depend on the degree only, so one instance serves every level and
/// both cluster trees.
#[derive(Debug, Clone)]
pub struct TransferRef<T> {
    order: InterpOrder,
    /// `factors[o][axis][j * (m+1) + k]`: 1D parent basis `k` at child node `j`.
    factors: [[Vec<T>; 3]; 8],
    matrices: Vec<Vec<T>>,
}

impl<T: Real> TransferRef<T> {
    pub fn build(m: InterpOrder) -> Self {
        let p = m.points_1d();
        let nodes = reference_nodes::<T>(m);
        let half = T::lit(0.5);
        // 1D factor for the lower (0) and upper (1) half of [-1, 1]
        let one_d: [Vec<T>; 2] = [0, 1].map(|upper| {
            let shift = if upper == 1 { T::one() } else { -T::one() };
            let mut f = vec![T::zero(); p * p];
            for j in 0..p {
                let x = (nodes[j] + shift) * half;
                for k in 0..p {
                    f[j * p + k] = lagrange_eval(&nodes, k, x);
                }
            }
            f
        });
        let factors: [[Vec<T>; 3]; 8] = std::array::from_fn(|o| {
            [
                one_d[(o >> 2) & 1].clone(),
                one_d[(o >> 1) & 1].clone(),
                one_d[o & 1].clone(),
            ]
        });
        let n = m.node_count();
        let matrices = factors
            .iter()
            .map(|[fx, fy, fz]| {
                let mut e = vec![T::zero(); n * n];
                for row in 0..n {
                    let [ja, jb, jc] = m.unflat(row);
                    for col in 0..n {
                        let [ka, kb, kc] = m.unflat(col);
                        e[row * n + col] = fx[ja * p + ka] * fy[jb * p + kb] * fz[jc * p + kc];
                    }
                }
                e
            })
            .collect();
        Self { order: m, factors, matrices }
    }

    pub fn order(&self) -> InterpOrder {
        self.order
    }

    /// Dense `(m+1)^3 x (m+1)^3` matrix of child octant `octant`, row-major.
    pub fn matrix(&self, octant: usize) -> &[T] {
        &self.matrices[octant]
    }

    /// 1D factor of `octant` along `axis`, row-major `(m+1) x (m+1)`.
    pub fn factor(&self, octant: usize, axis: usize) -> &[T] {
        &self.factors[octant][axis]
    }

    /// `y += E[octant] x` (parent coefficients to child nodes).
    pub fn apply(&self, octant: usize, x: &[Complex<T>], y: &mut [Complex<T>]) {
        let e = &self.matrices[octant];
        let n = x.len();
        for (row, yr) in y.iter_mut().enumerate() {
            let er = &e[row * n..(row + 1) * n];
            let mut acc = Complex::new(T::zero(), T::zero());
            for (w, xv) in er.iter().zip(x) {
                acc += *xv * *w;
            }
            *yr += acc;
        }
    }

    /// `y += E[octant]^T x` (child coefficients back to the parent).
    pub fn apply_transpose(&self, octant: usize, x: &[Complex<T>], y: &mut [Complex<T>]) {
        let e = &self.matrices[octant];
        let n = y.len();
        for (row, xv) in x.iter().enumerate() {
            let er = &e[row * n..(row + 1) * n];
            for (yc, w) in y.iter_mut().zip(er) {
                *yc += *xv * *w;
            }
        }
    }

    /// [`Self::apply`] through the tensor factors, in `O(n (m + 1))`.
    pub fn apply_factored(&self, octant: usize, x: &[Complex<T>], y: &mut [Complex<T>]) {
        self.tensor(octant, false, x, y);
    }

    /// [`Self::apply_transpose`] through the tensor factors.
    pub fn apply_transpose_factored(&self, octant: usize, x: &[Complex<T>], y: &mut [Complex<T>]) {
        self.tensor(octant, true, x, y);
    }

    fn tensor(&self, octant: usize, transpose: bool, x: &[Complex<T>], y: &mut [Complex<T>]) {
        let p = self.order.points_1d();
        let zero = Complex::new(T::zero(), T::zero());
        let f = &self.factors[octant];
        let w = |axis: usize, out: usize, inp: usize| {
            if transpose {
                f[axis][inp * p + out]
            } else {
                f[axis][out * p + inp]
            }
        };
        let mut t1 = vec![zero; p * p * p];
        for a in 0..p {
            for b in 0..p {
                let base = (a * p + b) * p;
                for jc in 0..p {
                    let mut acc = zero;
                    for kc in 0..p {
                        acc += x[base + kc] * w(2, jc, kc);
                    }
                    t1[base + jc] = acc;
                }
            }
        }
        let mut t2 = vec![zero; p * p * p];
        for a in 0..p {
            for jb in 0..p {
                for c in 0..p {
                    let mut acc = zero;
                    for kb in 0..p {
                        acc += t1[(a * p + kb) * p + c] * w(1, jb, kb);
                    }
                    t2[(a * p + jb) * p + c] = acc;
                }
            }
        }
        for ja in 0..p {
            for bc in 0..p * p {
                let mut acc = zero;
                for ka in 0..p {
                    acc += t2[ka * p * p + bc] * w(0, ja, ka);
                }
                y[ja * p * p + bc] += acc;
            }
        }
    }

    /// Bytes held by the reference matrices.
    pub fn bytes(&self) -> usize {
        self.matrices.iter().map(|m| m.len() * std::mem::size_of::<T>()).sum()
    }
}

/// Diagonal `exp(i kappa <xi_child_nu, c - c_child>)` of a directional transfer.
pub fn build_directional_diag<T: Real>(
    child_nodes: &[Point3<T>],
    c: Point3<T>,
    c_child: Point3<T>,
    kappa: T,
) -> Vec<Complex<T>> {
    let d = c - c_child;
    child_nodes.iter().map(|&xi| unit_phase(kappa * xi.dot(d))).collect()
}

/// Directly assembled transfer matrix
/// `E[j, k] = exp(i kappa <xi_child_j, c - c_child>) L_parent_k(xi_child_j)`.
pub fn assemble_transfer<T: Real>(
    parent: &AxisBox<T>,
    child: &AxisBox<T>,
    c: Point3<T>,
    c_child: Point3<T>,
    kappa: T,
    m: InterpOrder,
) -> Result<Vec<Complex<T>>> {
    let child_nodes = TensorNodes::for_box(child, m)?;
    Ok(build_interp_matrix(&child_nodes.points, parent, c - c_child, kappa, m).data)
}
