//! Acceptance run on the uniform grid benchmark. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails. Build with optimizations; the
//! k = 6 run takes a couple of minutes single-threaded.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use dirfmm::bench::{generate_grid_points, random_vector, run_benchmark, BenchConfig, BenchRun, Report};
use dirfmm::block::{midpoint_difference, AdmissibilityParams, BlockTree};
use dirfmm::cluster::ClusterTree;
use dirfmm::coupling::{aca_compress, build_coupling_matrix, coupling_key, AcaParams, CouplingKey};
use dirfmm::directions::DirectionTable;
use dirfmm::engine::{Operator, OperatorConfig};
use dirfmm::geometry::{AxisBox, Point3, WaveNumber};
use dirfmm::interpolation::{
    assemble_transfer, build_directional_diag, chebyshev_nodes, lagrange_eval, InterpOrder, TensorNodes,
    TransferRef,
};
use dirfmm::oracle::dense_matvec;
use dirfmm::{Point3d, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COUNTER_NF_TOL: f64 = 0.01;
const ERR_K5: f64 = 1e-3;
const ERR_K6: f64 = 5e-4;
const ORACLE_TOL: f64 = 1e-13;
const TFF_RATIO: f64 = 2.0;
const BYTES_RATIO: f64 = 9.0;
const SPLIT_TOL: f64 = 1e-13;
const M2M_TOL: f64 = 1e-12;
const LINEARITY_TOL: f64 = 1e-12;
const ACA_TOL: f64 = 1e-5;

struct Outcome {
    failed: usize,
}

impl Outcome {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.failed += !pass as usize;
    }
}

fn rel_l2(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3d> {
    (0..n).map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn operator(targets: &[Point3d], sources: &[Point3d], n_max: usize, kappa: f64, l_hf: i32, m: usize, zero_diag: bool) -> Operator<f64> {
    let root = AxisBox::cube(Point3::zero(), 1.0).unwrap();
    let kappa = WaveNumber::new(kappa).unwrap();
    let tt = ClusterTree::build(targets, root, n_max).unwrap();
    let ts = ClusterTree::build(sources, root, n_max).unwrap();
    let table = DirectionTable::build(l_hf, tt.depth().max(ts.depth())).unwrap();
    let blocks = BlockTree::build(&tt, &ts, &AdmissibilityParams::new(5.0, kappa).unwrap(), &table).unwrap();
    let mut config = OperatorConfig::new(InterpOrder::new(m));
    config.zero_diagonal = zero_diag;
    Operator::setup(tt, ts, blocks, table, kappa, config).unwrap()
}

fn grid_run(k: u32) -> BenchRun {
    let clock = Instant::now();
    let run = run_benchmark(&BenchConfig::grid(k)).expect("benchmark run");
    let r = &run.report;
    println!(
        "     k={k} N={} N_C={} N_SC={} nf={:.4}% t_s={:.3}s t_nf={:.3}s t_ff={:.3}s bytes={} err={:.3e} wall={:.1}s",
        r.n,
        r.n_c,
        r.n_sc,
        r.nf_percent,
        r.t_s,
        r.t_nf,
        r.t_ff,
        r.bytes_stored,
        r.rel_error.unwrap_or(f64::NAN),
        clock.elapsed().as_secs_f64()
    );
    run
}

fn counters(out: &mut Outcome, r: &Report, n_c: u64, n_sc: u64, nf: f64) {
    let pass = r.n_c == n_c && r.n_sc == n_sc && (r.nf_percent - nf).abs() <= COUNTER_NF_TOL;
    let detail = format!("N_C={} N_SC={} nf={:.4}% (want {n_c}, {n_sc}, {nf}%)", r.n_c, r.n_sc, r.nf_percent);
    out.check(&format!("counters k={}", r.k.unwrap()), pass, detail);
}

fn oracle_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut farfield = 0;
    for case in 0..20 {
        let n = rng.gen_range(50..=2000);
        let same = case % 2 == 0;
        let sources = random_points(n, &mut rng);
        let targets = if same { sources.clone() } else { random_points(rng.gen_range(50..=2000), &mut rng) };
        let op = operator(&targets, &sources, rng.gen_range(n / 8 + 1..=n), 100.0, 1, 4, same);
        farfield += op.block_tree().admissible().len();
        let v = random_vector(n, case);
        let dense = dense_matvec(&targets, &sources, WaveNumber::new(100.0).unwrap(), &v, same).unwrap();
        worst = worst.max(rel_l2(&op.matvec(&v).unwrap(), &dense));
    }
    (farfield == 0 && worst <= ORACLE_TOL, format!("20 sets, max relative error {worst:.2e}"))
}

fn lagrange_invariants() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..200).all(|_| {
        let (a, w, m) = (rng.gen_range(-10.0..10.0), rng.gen_range(0.01..5.0), rng.gen_range(0..7));
        let nodes = chebyshev_nodes(a, a + w, InterpOrder::new(m)).unwrap();
        let y = a + rng.gen_range(0.0..1.0) * w;
        let unity = ((0..=m).map(|i| lagrange_eval(&nodes, i, y)).sum::<f64>() - 1.0).abs() < 1e-12;
        let cardinal = (0..=m).all(|i| {
            (0..=m).all(|j| (lagrange_eval(&nodes, i, nodes[j]) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12)
        });
        unity && cardinal
    })
}

fn transfer_split_error() -> f64 {
    let parent = AxisBox::new(Point3::new(-0.5, 0.25, 1.0), Point3::new(0.5, 1.25, 2.0)).unwrap();
    let (c, c_child) = (Point3::new(1.0, 0.5, 0.5).normalized().unwrap(), Point3::new(1.0, 0.0, 0.0));
    let m = InterpOrder::new(4);
    let n = m.node_count();
    let reference = TransferRef::<f64>::build(m);
    let mut worst: f64 = 0.0;
    for octant in 0..8 {
        let lo = parent.lower.to_array();
        let mid = parent.center().to_array();
        let mut l = [0.0; 3];
        for axis in 0..3 {
            l[axis] = if (octant >> (2 - axis)) & 1 == 1 { mid[axis] } else { lo[axis] };
        }
        let child = AxisBox::cube(Point3::from_array(l) + Point3::new(0.25, 0.25, 0.25), 0.25).unwrap();
        let direct = assemble_transfer(&parent, &child, c, c_child, 6.4, m).unwrap();
        let nodes = TensorNodes::for_box(&child, m).unwrap();
        let diag = build_directional_diag(&nodes.points, c, c_child, 6.4);
        let e = reference.matrix(octant);
        for row in 0..n {
            for col in 0..n {
                worst = worst.max((diag[row] * e[row * n + col] - direct[row * n + col]).norm());
            }
        }
    }
    worst
}

fn m2m_exactness_error() -> f64 {
    let pts = generate_grid_points(5);
    let op = operator(&pts, &pts, 64, 0.5, -1, 4, true);
    let v = random_vector(pts.len(), 8);
    let moments = op.compute_moments(&v).unwrap();
    let mut worst: f64 = 0.0;
    for id in (0..op.source().num_nodes()).filter(|&id| !op.source().node(id).is_leaf()) {
        for &ord in moments.directions(id) {
            let direct = op.direct_moment(id, ord, &v).unwrap();
            worst = worst.max(rel_l2(moments.get(id, ord).unwrap(), &direct));
        }
    }
    worst
}

fn partition_identity(op: &Operator<f64>) -> bool {
    let (t, s) = (op.target(), op.source());
    let total: u64 = op
        .block_tree()
        .blocks()
        .iter()
        .filter(|b| b.is_leaf())
        .map(|b| (t.node(b.t).len() * s.node(b.s).len()) as u64)
        .sum();
    total == (t.num_points() * s.num_points()) as u64
}

fn direction_counts(op: &Operator<f64>, l_hf: i32) -> bool {
    let table = op.directions();
    (0..op.target().num_levels()).all(|level| {
        let want = if level as i32 <= l_hf { 6 * 4usize.pow((l_hf - level as i32) as u32) } else { 1 };
        table.count(level) == want
    })
}

/// Rebuilds every coupling matrix of the k = 5 grid and compares matrices
/// sharing a key bitwise; returns the number of comparisons.
fn dedup_collisions(op: &Operator<f64>, kappa: f64) -> Option<usize> {
    let (tree, blocks, table) = (op.target(), op.block_tree(), op.directions());
    let m = InterpOrder::new(4);
    let mut groups: BTreeMap<CouplingKey, Vec<usize>> = BTreeMap::new();
    for &b in blocks.admissible() {
        groups.entry(coupling_key(tree, tree, blocks.block(b)).unwrap()).or_default().push(b);
    }
    let mut compared = 0;
    for members in groups.values() {
        let build = |b: usize| {
            let blk = blocks.block(b);
            let half = tree.level_sides(blk.level).scale(0.5);
            let diff = midpoint_difference(tree, tree, tree.node(blk.t), tree.node(blk.s));
            build_coupling_matrix(diff, half, half, table.vector(blk.direction.unwrap()), kappa, m).unwrap()
        };
        let first = build(members[0]);
        for &b in &members[1..] {
            if build(b) != first {
                return None;
            }
            compared += 1;
        }
    }
    Some(compared)
}

fn linearity_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts = random_points(2000, &mut rng);
    let op = operator(&pts, &pts, 32, 6.0, 1, 4, true);
    assert!(!op.block_tree().admissible().is_empty());
    let (v1, v2) = (random_vector(pts.len(), 1), random_vector(pts.len(), 2));
    let alpha = C64::new(0.3, -1.7);
    let combo: Vec<C64> = v1.iter().zip(&v2).map(|(a, b)| alpha * a + b).collect();
    let (g1, g2) = (op.matvec(&v1).unwrap(), op.matvec(&v2).unwrap());
    let rhs: Vec<C64> = g1.iter().zip(&g2).map(|(a, b)| alpha * a + b).collect();
    rel_l2(&op.matvec(&combo).unwrap(), &rhs)
}

/// Worst relative residual over sampled matrices that ACA compressed, and their count.
fn aca_residual(op: &Operator<f64>, kappa: f64) -> (f64, usize) {
    let (tree, blocks, table) = (op.target(), op.block_tree(), op.directions());
    let params = AcaParams::new(1e-6).unwrap();
    let m = InterpOrder::new(4);
    let adm = blocks.admissible();
    let (mut worst, mut compressed): (f64, usize) = (0.0, 0);
    for &b in adm.iter().step_by(adm.len() / 40) {
        let blk = blocks.block(b);
        let half = tree.level_sides(blk.level).scale(0.5);
        let diff = midpoint_difference(tree, tree, tree.node(blk.t), tree.node(blk.s));
        let a = build_coupling_matrix(diff, half, half, table.vector(blk.direction.unwrap()), kappa, m).unwrap();
        let c = aca_compress(&a, &params);
        if c.rank().is_none() {
            continue;
        }
        compressed += 1;
        let (ad, cd) = (a.to_dense(), c.to_dense());
        worst = worst.max(rel_l2(&cd, &ad));
    }
    (worst, compressed)
}

fn main() -> ExitCode {
    let mut out = Outcome { failed: 0 };
    let mut props: Vec<(&str, bool, String)> = Vec::new();

    let r4 = grid_run(4).report;

    let run5 = grid_run(5);
    let r5 = run5.report.clone();
    counters(&mut out, &r5, 3096, 316, 24.41);
    props.push(("partition k=5", partition_identity(&run5.operator), String::new()));
    match dedup_collisions(&run5.operator, r5.kappa) {
        Some(n) => props.push(("dedup", n > 0, format!("{n} bitwise comparisons"))),
        None => props.push(("dedup", false, "colliding matrices differ".into())),
    }
    let aca5 = aca_residual(&run5.operator, r5.kappa);
    drop(run5);

    let run6 = grid_run(6);
    let r6 = run6.report.clone();
    counters(&mut out, &r6, 166320, 1522, 4.06);
    props.push(("partition k=6", partition_identity(&run6.operator), String::new()));
    props.push(("direction counts", direction_counts(&run6.operator, r6.l_hf), String::new()));
    let aca6 = aca_residual(&run6.operator, r6.kappa);
    drop(run6);

    let (e5, e6) = (r5.rel_error.unwrap(), r6.rel_error.unwrap());
    out.check(
        "accuracy",
        e6 <= ERR_K6 && e5 <= ERR_K5,
        format!("k=6 {e6:.3e} (<= {ERR_K6:e}), k=5 {e5:.3e} (<= {ERR_K5:e}), {} rows", r6.sample_rows),
    );

    let (pass, detail) = oracle_equivalence();
    out.check("oracle equivalence", pass, detail);

    let mut scaling = true;
    let mut detail = Vec::new();
    for (a, b) in [(&r4, &r5), (&r5, &r6)] {
        let per_point = |r: &Report| r.t_ff / r.n as f64;
        let t_ratio = per_point(b) / per_point(a);
        let bytes_ratio = b.bytes_stored as f64 / a.bytes_stored as f64;
        scaling &= t_ratio.is_finite() && t_ratio <= TFF_RATIO && bytes_ratio <= BYTES_RATIO;
        detail.push(format!(
            "k={}->{}: t_ff/N x{t_ratio:.2} (<= {TFF_RATIO}), bytes x{bytes_ratio:.2} (<= {BYTES_RATIO})",
            a.k.unwrap(),
            b.k.unwrap()
        ));
    }
    out.check("scaling", scaling, detail.join("; "));

    props.push(("lagrange invariants", lagrange_invariants(), String::new()));
    let split = transfer_split_error();
    props.push(("transfer split", split <= SPLIT_TOL, format!("{split:.1e}")));
    let m2m = m2m_exactness_error();
    props.push(("m2m exactness", m2m <= M2M_TOL, format!("{m2m:.1e}")));
    let lin = linearity_error();
    props.push(("linearity", lin <= LINEARITY_TOL, format!("{lin:.1e}")));
    let (aca, compressed) = (aca5.0.max(aca6.0), aca5.1 + aca6.1);
    props.push(("aca residual", compressed > 0 && aca <= ACA_TOL, format!("{aca:.1e} over {compressed} low-rank matrices")));
    let failing: Vec<&str> = props.iter().filter(|p| !p.1).map(|p| p.0).collect();
    let summary: Vec<String> =
        props.iter().map(|(n, ok, d)| format!("{n} {}{}", if *ok { "ok" } else { "FAILED" }, if d.is_empty() { String::new() } else { format!(" {d}") })).collect();
    out.check("property suites", failing.is_empty(), summary.join(", "));

    if out.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", out.failed);
        ExitCode::FAILURE
    }
}
