//! Direct evaluation of the kernel matrix for reference results.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{kernel_from_distance, Point3, WaveNumber};
use crate::scalar::Real;

/// Row `i` of `A v`; with `zero_diagonal` the term `j == i` is skipped.
pub fn dense_row<T: Real>(
    x: Point3<T>,
    row: usize,
    sources: &[Point3<T>],
    kappa: WaveNumber<T>,
    v: &[Complex<T>],
    zero_diagonal: bool,
) -> Result<Complex<T>> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (j, (y, vj)) in sources.iter().zip(v).enumerate() {
        if zero_diagonal && j == row {
            continue;
        }
        let r = (x - *y).norm();
        if r == T::zero() {
            return Err(Error::SingularPoint);
        }
        acc += kernel_from_distance(r, kappa.get()) * *vj;
    }
    Ok(acc)
}

/// `A v` with `A[i, j] = f(x_i, y_j)`. `zero_diagonal` drops the `i == j`
/// entries and is meant for targets and sources being the same set.
pub fn dense_matvec<T: Real>(
    targets: &[Point3<T>],
    sources: &[Point3<T>],
    kappa: WaveNumber<T>,
    v: &[Complex<T>],
    zero_diagonal: bool,
) -> Result<Vec<Complex<T>>> {
    if v.len() != sources.len() {
        return Err(Error::DimensionMismatch { expected: sources.len(), got: v.len() });
    }
    targets
        .iter()
        .enumerate()
        .map(|(i, &x)| dense_row(x, i, sources, kappa, v, zero_diagonal))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rows: Vec<usize>,
    /// `sqrt(sum |g - g_exact|^2 / sum |g_exact|^2)` over the sampled rows.
    pub relative_l2: f64,
    pub max_relative: f64,
}

/// `count` distinct row indices out of `0..n`, sorted, from a seeded generator.
pub fn sample_rows(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = rand::seq::index::sample(&mut rng, n, count.min(n)).into_vec();
    rows.sort_unstable();
    rows
}

/// Compares `fast_g` against exact rows of `A v` on the given rows.
pub fn sampled_error<T: Real>(
    fast_g: &[Complex<T>],
    targets: &[Point3<T>],
    sources: &[Point3<T>],
    kappa: WaveNumber<T>,
    v: &[Complex<T>],
    rows: &[usize],
    zero_diagonal: bool,
) -> Result<ErrorReport> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("error sample must not be empty".into()));
    }
    if fast_g.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: targets.len(), got: fast_g.len() });
    }
    let (mut num, mut den, mut max_rel) = (0f64, 0f64, 0f64);
    for &i in rows {
        let exact = dense_row(targets[i], i, sources, kappa, v, zero_diagonal)?;
        let e = (fast_g[i] - exact).norm().to_f64_lossy();
        let a = exact.norm().to_f64_lossy();
        num += e * e;
        den += a * a;
        if a > 0.0 {
            max_rel = max_rel.max(e / a);
        }
    }
    let relative_l2 = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(ErrorReport { rows: rows.to_vec(), relative_l2, max_relative: max_rel })
}
