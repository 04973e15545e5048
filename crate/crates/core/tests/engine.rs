use dirfmm::bench::{generate_grid_points, random_vector};
use dirfmm::block::{AdmissibilityParams, BlockTree};
use dirfmm::cluster::ClusterTree;
use dirfmm::coupling::{AcaParams, CouplingOptions};
use dirfmm::directions::DirectionTable;
use dirfmm::engine::{Operator, OperatorConfig};
use dirfmm::geometry::{AxisBox, Point3, WaveNumber};
use dirfmm::interpolation::InterpOrder;
use dirfmm::oracle::{dense_matvec, sample_rows, sampled_error};
use dirfmm::{Error, Point3d, Real, C64};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Problem {
    n_max: usize,
    kappa: f64,
    eta2: f64,
    l_hf: i32,
    config: OperatorConfig<f64>,
}

impl Problem {
    fn new(n_max: usize, kappa: f64, l_hf: i32, m: usize) -> Self {
        let mut config = OperatorConfig::new(InterpOrder::new(m));
        config.zero_diagonal = true;
        Self { n_max, kappa, eta2: 5.0, l_hf, config }
    }

    fn build_generic<T: Real>(&self, targets: &[Point3<T>], sources: &[Point3<T>], config: OperatorConfig<T>) -> Operator<T> {
        let root = AxisBox::cube(Point3::zero(), T::one()).unwrap();
        let kappa = WaveNumber::new(T::lit(self.kappa)).unwrap();
        let tt = ClusterTree::build(targets, root, self.n_max).unwrap();
        let ts = ClusterTree::build(sources, root, self.n_max).unwrap();
        let table = DirectionTable::build(self.l_hf, tt.depth().max(ts.depth())).unwrap();
        let params = AdmissibilityParams::new(T::lit(self.eta2), kappa).unwrap();
        let blocks = BlockTree::build(&tt, &ts, &params, &table).unwrap();
        Operator::setup(tt, ts, blocks, table, kappa, config).unwrap()
    }

    fn build(&self, targets: &[Point3d], sources: &[Point3d]) -> Operator<f64> {
        self.build_generic(targets, sources, self.config)
    }
}

fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3d> {
    (0..n).map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn rel_l2(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn pure_nearfield_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let n = rng.gen_range(50..=2000);
        let same = case % 2 == 0;
        let sources = random_points(n, &mut rng);
        let targets = if same { sources.clone() } else { random_points(rng.gen_range(50..=2000), &mut rng) };
        let mut p = Problem::new(rng.gen_range(n / 8 + 1..=n), 100.0, 1, 2);
        p.config.zero_diagonal = same;
        let op = p.build(&targets, &sources);
        assert!(op.block_tree().admissible().is_empty());
        let v = random_vector(n, case);
        let fast = op.matvec(&v).unwrap();
        let dense = dense_matvec(&targets, &sources, WaveNumber::new(100.0).unwrap(), &v, same).unwrap();
        assert!(rel_l2(&fast, &dense) <= 1e-13, "case {case}");
    }
}

#[test]
fn single_leaf_trees_are_one_nearfield_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts = random_points(40, &mut rng);
    let op = Problem::new(64, 3.0, 2, 4).build(&pts, &pts);
    let stats = op.stats();
    assert_eq!((stats.n_le, stats.n_c, stats.n_sc), (0, 0, 0));
    assert_eq!(stats.m_d, 1600);
    assert_eq!(stats.nf_percent, 100.0);
    op.matvec(&random_vector(40, 1)).unwrap();
    assert_eq!(op.last_counts().unwrap(), op.expected_counts());
}

fn farfield_problem() -> (Vec<Point3d>, Problem) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (random_points(2000, &mut rng), Problem::new(32, 6.0, 1, 2))
}

#[test]
fn matvec_is_linear() {
    let (pts, p) = farfield_problem();
    let op = p.build(&pts, &pts);
    assert!(!op.block_tree().admissible().is_empty());
    let (v1, v2) = (random_vector(pts.len(), 1), random_vector(pts.len(), 2));
    let alpha = C64::new(0.3, -1.7);
    let combo: Vec<C64> = v1.iter().zip(&v2).map(|(a, b)| alpha * a + b).collect();
    let lhs = op.matvec(&combo).unwrap();
    let (g1, g2) = (op.matvec(&v1).unwrap(), op.matvec(&v2).unwrap());
    let rhs: Vec<C64> = g1.iter().zip(&g2).map(|(a, b)| alpha * a + b).collect();
    assert!(rel_l2(&lhs, &rhs) <= 1e-12);
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let (pts, p) = farfield_problem();
    let v = random_vector(pts.len(), 9);
    let op = p.build(&pts, &pts);
    let first = op.matvec(&v).unwrap();
    assert_eq!(op.matvec(&v).unwrap(), first);
    assert_eq!(p.build(&pts, &pts).matvec(&v).unwrap(), first);
}

#[test]
fn dedup_does_not_change_results() {
    let (pts, mut p) = farfield_problem();
    let v = random_vector(pts.len(), 4);
    let on = p.build(&pts, &pts);
    p.config.coupling = CouplingOptions { dedup: false, aca: None };
    let off = p.build(&pts, &pts);
    assert!(on.stats().n_sc < off.stats().n_sc);
    assert_eq!(off.stats().n_sc, off.stats().n_c);
    assert_eq!(on.matvec(&v).unwrap(), off.matvec(&v).unwrap());
}

#[test]
fn aca_changes_results_only_slightly() {
    // at low degree the coupling matrices are too small for low rank to pay off
    let (pts, mut p) = farfield_problem();
    p.config.order = InterpOrder::new(4);
    let v = random_vector(pts.len(), 4);
    let dense = p.build(&pts, &pts).matvec(&v).unwrap();
    p.config.coupling.aca = Some(AcaParams::new(1e-8).unwrap());
    let op = p.build(&pts, &pts);
    assert!(op.coupling().matrices().iter().any(|a| a.rank().is_some()));
    assert!(rel_l2(&op.matvec(&v).unwrap(), &dense) <= 1e-6);
}

#[test]
fn nearfield_cache_and_split_phases_agree() {
    let (pts, mut p) = farfield_problem();
    let v = random_vector(pts.len(), 6);
    let op = p.build(&pts, &pts);
    let full = op.matvec(&v).unwrap();
    let parts: Vec<C64> =
        op.farfield(&v).unwrap().iter().zip(&op.nearfield(&v).unwrap()).map(|(a, b)| a + b).collect();
    assert!(rel_l2(&parts, &full) <= 1e-14);
    p.config.cache_nearfield = true;
    let cached = p.build(&pts, &pts);
    assert_eq!(cached.matvec(&v).unwrap(), full);
    assert!(cached.stats().bytes_stored > op.stats().bytes_stored);
}

#[test]
fn every_operation_is_applied_once() {
    let (pts, p) = farfield_problem();
    let op = p.build(&pts, &pts);
    op.matvec(&random_vector(pts.len(), 1)).unwrap();
    let counts = op.last_counts().unwrap();
    // independent count from the block tree and direction sets
    let (src, tgt) = (op.source(), op.target());
    let b = op.block_tree();
    let leaf_dirs = |tree: &ClusterTree<f64>, sets: &dirfmm::block::DirectionSets| -> u64 {
        tree.leaves().iter().map(|&l| sets.needed(l).len() as u64).sum()
    };
    let child_dirs = |tree: &ClusterTree<f64>, sets: &dirfmm::block::DirectionSets| -> u64 {
        (0..tree.num_nodes()).map(|id| (tree.node(id).children.len() * sets.needed(id).len()) as u64).sum()
    };
    assert_eq!(counts.s2m, leaf_dirs(src, b.source_directions()));
    assert_eq!(counts.l2t, leaf_dirs(tgt, b.target_directions()));
    assert_eq!(counts.m2m, child_dirs(src, b.source_directions()));
    assert_eq!(counts.l2l, child_dirs(tgt, b.target_directions()));
    assert_eq!(counts.m2l, b.admissible().len() as u64);
    assert_eq!(counts.nearfield_blocks, b.inadmissible().len() as u64);
    assert_eq!(counts.n_le(), op.stats().n_le);
    assert_eq!(counts.nearfield_entries, op.stats().m_d);
    assert!(counts.m2m > 0 && counts.l2l > 0);
}

#[test]
fn upward_pass_is_exact_at_low_frequency() {
    // l_hf = -1: every direction is zero and the transfers reproduce the
    // parent's interpolation polynomials exactly
    let pts = generate_grid_points(5);
    let p = Problem::new(64, 0.5, -1, 3);
    let op = p.build(&pts, &pts);
    let v = random_vector(pts.len(), 8);
    let moments = op.compute_moments(&v).unwrap();
    let mut checked = 0;
    for id in 0..op.source().num_nodes() {
        let node = op.source().node(id);
        if node.is_leaf() {
            continue;
        }
        for &ord in moments.directions(id) {
            let via_m2m = moments.get(id, ord).unwrap();
            let direct = op.direct_moment(id, ord, &v).unwrap();
            assert!(rel_l2(via_m2m, &direct) <= 1e-12);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn sampled_error_is_small_and_improves_with_degree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pts = random_points(6000, &mut rng);
    let kappa = WaveNumber::new(6.0).unwrap();
    let rows = sample_rows(pts.len(), 300, 1);
    let mut mean = [0.0; 3];
    for seed in 0..3 {
        let v = random_vector(pts.len(), seed);
        for (slot, m) in [2, 3, 4].into_iter().enumerate() {
            let op = Problem::new(32, 6.0, 1, m).build(&pts, &pts);
            let g = op.matvec(&v).unwrap();
            mean[slot] += sampled_error(&g, &pts, &pts, kappa, &v, &rows, true).unwrap().relative_l2 / 3.0;
        }
    }
    assert!(mean[0] > mean[1] && mean[1] > mean[2], "{mean:?}");
    assert!(mean[2] < 1e-3, "{mean:?}");
}

#[test]
fn coincident_points_need_zero_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = random_points(100, &mut rng);
    let mut p = Problem::new(16, 1.0, 0, 2);
    p.config.zero_diagonal = false;
    let op = p.build(&pts, &pts);
    assert!(matches!(op.matvec(&random_vector(100, 1)), Err(Error::SingularPoint)));
    assert!(matches!(op.matvec(&random_vector(99, 1)), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn single_precision_runs() {
    let (pts, p) = farfield_problem();
    let v = random_vector(pts.len(), 3);
    let g64 = p.build(&pts, &pts).matvec(&v).unwrap();
    let pts32: Vec<Point3<f32>> = pts.iter().map(|q| Point3::new(q.x as f32, q.y as f32, q.z as f32)).collect();
    let v32: Vec<Complex<f32>> = v.iter().map(|z| Complex::new(z.re as f32, z.im as f32)).collect();
    let mut config = OperatorConfig::new(p.config.order);
    config.zero_diagonal = true;
    let g32 = p.build_generic(&pts32, &pts32, config).matvec(&v32).unwrap();
    let g32: Vec<C64> = g32.iter().map(|z| C64::new(z.re as f64, z.im as f64)).collect();
    assert!(rel_l2(&g32, &g64) <= 1e-4);
}
