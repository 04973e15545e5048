use dirfmm::geometry::{AxisBox, Point3};
use dirfmm::interpolation::{
    assemble_transfer, build_directional_diag, build_interp_matrix, chebyshev_nodes, lagrange_eval, InterpOrder,
    TensorNodes, TransferRef,
};
use dirfmm::{C64, Point3d};
use proptest::prelude::*;

fn boxed(lo: [f64; 3], hi: [f64; 3]) -> AxisBox<f64> {
    AxisBox::new(Point3::from_array(lo), Point3::from_array(hi)).unwrap()
}

/// Child `octant` of `b`, split at the midpoint.
fn child(b: &AxisBox<f64>, octant: usize) -> AxisBox<f64> {
    let c = b.center().to_array();
    let (lo, hi) = (b.lower.to_array(), b.upper.to_array());
    let mut l = [0.0; 3];
    let mut h = [0.0; 3];
    for axis in 0..3 {
        let upper = (octant >> (2 - axis)) & 1 == 1;
        (l[axis], h[axis]) = if upper { (c[axis], hi[axis]) } else { (lo[axis], c[axis]) };
    }
    boxed(l, h)
}

#[test]
fn split_transfer_matches_direct_assembly() {
    let parent = boxed([-0.5, 0.25, 1.0], [0.5, 1.25, 2.0]);
    let kappa = 6.4;
    let c = Point3::new(1.0, 0.5, 0.5).normalized().unwrap();
    let c_child = Point3::new(1.0, 0.0, 0.0);
    for m in [2, 4] {
        let m = InterpOrder::new(m);
        let n = m.node_count();
        let reference = TransferRef::<f64>::build(m);
        for octant in 0..8 {
            let ch = child(&parent, octant);
            let direct = assemble_transfer(&parent, &ch, c, c_child, kappa, m).unwrap();
            let nodes = TensorNodes::for_box(&ch, m).unwrap();
            let diag = build_directional_diag(&nodes.points, c, c_child, kappa);
            let e = reference.matrix(octant);
            for row in 0..n {
                for col in 0..n {
                    let split = diag[row] * e[row * n + col];
                    let want = direct[row * n + col];
                    assert!((split - want).norm() <= 1e-13, "octant {octant} ({row},{col})");
                }
            }
        }
    }
}

#[test]
fn interpolation_reproduces_polynomials() {
    // p(x) = (1 + x)^m (2 - y)^m z^m has coordinate degree m
    let b = boxed([0.0, -1.0, 0.5], [1.0, 0.0, 2.0]);
    for m in 1..=5 {
        let order = InterpOrder::new(m);
        let p = |q: Point3d| (1.0 + q.x).powi(m as i32) * (2.0 - q.y).powi(m as i32) * q.z.powi(m as i32);
        let nodes = TensorNodes::for_box(&b, order).unwrap();
        let samples: Vec<Point3d> =
            (0..20).map(|i| Point3::new(0.05 * i as f64, -0.03 * i as f64, 0.5 + 0.07 * i as f64)).collect();
        let l = build_interp_matrix(&samples, &b, Point3::zero(), 1.0, order);
        for (r, q) in samples.iter().enumerate() {
            let approx: f64 = nodes.points.iter().enumerate().map(|(k, xi)| l.get(r, k).re * p(*xi)).sum();
            assert!((approx - p(*q)).abs() <= 1e-12 * p(*q).abs().max(1.0), "m={m}");
        }
    }
}

#[test]
fn interpolation_error_decreases_with_degree() {
    let b = boxed([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
    let f = |q: Point3d| {
        let r = (q - Point3::new(2.5, 0.5, 0.5)).norm();
        C64::new((3.0 * r).cos(), (3.0 * r).sin()) / r
    };
    let samples: Vec<Point3d> = (0..50)
        .map(|i| {
            let t = i as f64 / 49.0;
            Point3::new(t, (7.0 * t).fract(), (13.0 * t).fract())
        })
        .collect();
    let mut last = f64::INFINITY;
    for m in 2..=5 {
        let order = InterpOrder::new(m);
        let nodes = TensorNodes::for_box(&b, order).unwrap();
        let l = build_interp_matrix(&samples, &b, Point3::zero(), 1.0, order);
        let err = samples
            .iter()
            .enumerate()
            .map(|(r, q)| {
                let approx: C64 = nodes.points.iter().enumerate().map(|(k, xi)| l.get(r, k) * f(*xi)).sum();
                (approx - f(*q)).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < last, "m={m}: {err} !< {last}");
        last = err;
    }
}

proptest! {
    #[test]
    fn cardinal_and_partition_of_unity(a in -10.0f64..10.0, w in 0.01f64..5.0, m in 0usize..7, x in 0.0f64..1.0) {
        let nodes = chebyshev_nodes(a, a + w, InterpOrder::new(m)).unwrap();
        for i in 0..=m {
            for j in 0..=m {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((lagrange_eval(&nodes, i, nodes[j]) - want).abs() < 1e-12);
            }
        }
        let y = a + x * w;
        let s: f64 = (0..=m).map(|i| lagrange_eval(&nodes, i, y)).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }
}
