//! Benchmark driver: uniform grid test problem, one fast matvec, counters,
//! timings and a sampled error against direct evaluation.

use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::block::{AdmissibilityParams, BlockTree};
use crate::cluster::ClusterTree;
use crate::coupling::{AcaParams, CouplingOptions};
use crate::directions::DirectionTable;
use crate::engine::{Operator, OperatorConfig, PhaseTimings, RunStats};
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Point3, WaveNumber};
use crate::interpolation::InterpOrder;
use crate::io::read_points;
use crate::oracle::{sample_rows, sampled_error};

/// Benchmark parameters; unset options fall back to the grid defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Grid exponent, `N = 8^k`.
    pub k: Option<u32>,
    pub kappa: Option<f64>,
    pub n_max: usize,
    pub eta2: f64,
    pub l_hf: Option<i32>,
    pub degree: usize,
    /// ACA tolerance; `None` stores dense coupling matrices.
    pub aca_eps: Option<f64>,
    pub zero_diagonal: bool,
    pub seed: u64,
    pub sample_rows: usize,
    pub points: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            k: None,
            kappa: None,
            n_max: 512,
            eta2: 5.0,
            l_hf: None,
            degree: 4,
            aca_eps: Some(1e-6),
            zero_diagonal: true,
            seed: 1,
            sample_rows: 1024,
            points: None,
        }
    }
}

impl BenchConfig {
    pub fn grid(k: u32) -> Self {
        Self { k: Some(k), ..Self::default() }
    }

    /// Resolves defaults that depend on `k` and checks ranges.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        if self.points.is_none() {
            match self.k {
                None => return invalid("either k or a points file is required".into()),
                Some(k) if !(3..=10).contains(&k) => return invalid(format!("k must lie in 3..=10, got {k}")),
                _ => {}
            }
        }
        let kappa = match (self.kappa, self.k) {
            (Some(kappa), _) => kappa,
            (None, Some(k)) => 0.1 * 2f64.powi(k as i32),
            (None, None) => return invalid("kappa is required without k".into()),
        };
        if !(kappa > 0.0 && kappa.is_finite()) {
            return invalid(format!("kappa must be positive, got {kappa}"));
        }
        let l_hf = match (self.l_hf, self.k) {
            (Some(l), _) => l,
            (None, Some(k)) => k as i32 - 4,
            (None, None) => return invalid("l_hf is required without k".into()),
        };
        if l_hf < -1 {
            return invalid(format!("l_hf must be >= -1, got {l_hf}"));
        }
        if self.n_max == 0 {
            return invalid("n_max must be positive".into());
        }
        if !(self.eta2 > 0.0 && self.eta2.is_finite()) {
            return invalid(format!("eta2 must be positive, got {}", self.eta2));
        }
        let aca = self.aca_eps.map(AcaParams::new).transpose()?;
        Ok(ResolvedConfig { kappa, l_hf, aca })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedConfig {
    pub kappa: f64,
    pub l_hf: i32,
    pub aca: Option<AcaParams<f64>>,
}

/// Grid points `(2n - 1) 2^-k - 1`, `n = 1..=2^k`, per axis; `8^k` points in `(-1, 1)^3`.
pub fn generate_grid_points(k: u32) -> Vec<Point3<f64>> {
    let n = 1usize << k;
    let h = 2f64.powi(-(k as i32));
    let axis: Vec<f64> = (1..=n).map(|i| (2 * i - 1) as f64 * h - 1.0).collect();
    let mut pts = Vec::with_capacity(n * n * n);
    for &x in &axis {
        for &y in &axis {
            for &z in &axis {
                pts.push(Point3::new(x, y, z));
            }
        }
    }
    pts
}

/// Smallest axis-aligned cube around the points, centered on their bounding box.
pub fn bounding_cube(points: &[Point3<f64>]) -> Result<AxisBox<f64>> {
    let first = *points.first().ok_or(Error::EmptyInput)?;
    let (lo, hi) = points.iter().fold((first, first), |(lo, hi), p| {
        (
            Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
            Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
        )
    });
    let half = 0.5 * (hi - lo).max_abs();
    let half = if half > 0.0 { half } else { 1.0 };
    AxisBox::cube((lo + hi).scale(0.5), half)
}

/// Seeded test vector with real and imaginary parts uniform in `[-1, 1]`.
pub fn random_vector(n: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Complex::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect()
}

/// One benchmark row. Field names follow the usual table columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub k: Option<u32>,
    #[serde(rename = "N")]
    pub n: usize,
    pub kappa: f64,
    pub n_max: usize,
    pub eta2: f64,
    pub l_hf: i32,
    pub m: usize,
    pub aca_eps: Option<f64>,
    pub zero_diagonal: bool,
    pub seed: u64,
    pub depth: usize,
    pub t_tot: f64,
    pub t_s: f64,
    pub t_nf: f64,
    pub t_ff: f64,
    pub nf_percent: f64,
    #[serde(rename = "N_SC")]
    pub n_sc: u64,
    #[serde(rename = "N_C")]
    pub n_c: u64,
    #[serde(rename = "N_LE")]
    pub n_le: u64,
    #[serde(rename = "M_D")]
    pub m_d: u64,
    pub bytes_stored: u64,
    pub max_a2_residual: f64,
    pub near_ties: u64,
    pub sample_rows: usize,
    pub rel_error: Option<f64>,
}

/// Report plus the raw data behind it.
#[derive(Debug)]
pub struct BenchRun {
    pub report: Report,
    pub stats: RunStats,
    pub timings: PhaseTimings,
    pub operator: Operator<f64>,
    pub points: Vec<Point3<f64>>,
    pub v: Vec<Complex<f64>>,
    pub g: Vec<Complex<f64>>,
}

fn round_ms(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchRun> {
    let resolved = cfg.resolve()?;
    let points = match &cfg.points {
        Some(path) => read_points(path)?,
        None => generate_grid_points(cfg.k.expect("checked by resolve")),
    };
    let root = match cfg.points {
        Some(_) => bounding_cube(&points)?,
        None => AxisBox::cube(Point3::zero(), 1.0)?,
    };
    let kappa = WaveNumber::new(resolved.kappa)?;

    let setup_clock = Instant::now();
    let tree = ClusterTree::build(&points, root, cfg.n_max)?;
    let table = DirectionTable::build(resolved.l_hf, tree.depth())?;
    let params = AdmissibilityParams::new(cfg.eta2, kappa)?;
    let blocks = BlockTree::build(&tree, &tree, &params, &table)?;
    let depth = tree.depth();
    let config = OperatorConfig {
        order: InterpOrder::new(cfg.degree),
        coupling: CouplingOptions { dedup: true, aca: resolved.aca },
        zero_diagonal: cfg.zero_diagonal,
        cache_nearfield: false,
    };
    let operator = Operator::setup(tree.clone(), tree, blocks, table, kappa, config)?;
    let t_s = setup_clock.elapsed().as_secs_f64();

    let v = random_vector(points.len(), cfg.seed);
    let g = operator.matvec(&v)?;
    let timings = operator.last_timings().expect("timings recorded by matvec");
    let stats = operator.stats();

    let rel_error = if cfg.sample_rows > 0 {
        let rows = sample_rows(points.len(), cfg.sample_rows, cfg.seed.wrapping_add(1));
        Some(sampled_error(&g, &points, &points, kappa, &v, &rows, cfg.zero_diagonal)?.relative_l2)
    } else {
        None
    };

    let report = Report {
        k: cfg.k,
        n: points.len(),
        kappa: resolved.kappa,
        n_max: cfg.n_max,
        eta2: cfg.eta2,
        l_hf: resolved.l_hf,
        m: cfg.degree,
        aca_eps: resolved.aca.map(|a| a.eps),
        zero_diagonal: cfg.zero_diagonal,
        seed: cfg.seed,
        depth,
        t_tot: round_ms(t_s + timings.total()),
        t_s: round_ms(t_s),
        t_nf: round_ms(timings.nearfield),
        t_ff: round_ms(timings.farfield()),
        nf_percent: stats.nf_percent,
        n_sc: stats.n_sc,
        n_c: stats.n_c,
        n_le: stats.n_le,
        m_d: stats.m_d,
        bytes_stored: stats.bytes_stored,
        max_a2_residual: stats.max_a2_residual,
        near_ties: stats.near_ties,
        sample_rows: cfg.sample_rows.min(points.len()),
        rel_error,
    };
    Ok(BenchRun { report, stats, timings, operator, points, v, g })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_k3_coordinates() {
        let pts = generate_grid_points(3);
        assert_eq!(pts.len(), 512);
        assert_eq!(pts[0], Point3::new(-0.875, -0.875, -0.875));
        assert_eq!(pts[511], Point3::new(0.875, 0.875, 0.875));
        assert!(pts.iter().all(|p| p.max_abs() < 1.0));
        // x_(2^k + 1 - n) = -x_n
        let axis: Vec<f64> = pts.iter().step_by(64).map(|p| p.x).collect();
        for n in 0..8 {
            assert_eq!(axis[7 - n], -axis[n]);
        }
    }

    #[test]
    fn defaults_follow_k() {
        let r = BenchConfig::grid(5).resolve().unwrap();
        assert_eq!(r.kappa, 3.2);
        assert_eq!(r.l_hf, 1);
        assert!(BenchConfig::default().resolve().is_err());
        assert!(BenchConfig { l_hf: Some(-2), ..BenchConfig::grid(4) }.resolve().is_err());
        assert!(BenchConfig { aca_eps: Some(2.0), ..BenchConfig::grid(4) }.resolve().is_err());
    }

    #[test]
    fn bounding_cube_is_cubic() {
        let pts = [Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 1.0, 0.5)];
        let c = bounding_cube(&pts).unwrap();
        assert_eq!(c.sides(), Point3::new(2.0, 2.0, 2.0));
        assert!(pts.iter().all(|p| c.contains_closed(*p)));
    }
}
