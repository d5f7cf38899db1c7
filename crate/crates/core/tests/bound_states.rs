use dotscatter_core::eigensolve::{
    exchange_defect, lowest_eigenpairs, window_operator_2p, SymmetricOperator,
};
use dotscatter_core::oracle::dense_eigensolve_small;
use dotscatter_core::*;

/// Roots of the even/odd finite-square-well conditions, by bisection.
fn analytic_levels(depth: f64, width: f64, kin: f64) -> Vec<f64> {
    let f = |e: f64, odd: bool| {
        let k = ((e + depth) / kin).sqrt();
        let kappa = (-e / kin).sqrt();
        let (s, c) = (k * width / 2.0).sin_cos();
        if odd {
            -k * c - kappa * s
        } else {
            k * s - kappa * c
        }
    };
    let mut out = Vec::new();
    let steps = 200_000;
    for odd in [false, true] {
        let mut prev = (-depth + 1e-9, f(-depth + 1e-9, odd));
        for i in 1..=steps {
            let e = -depth + depth * i as f64 / steps as f64 - 1e-9;
            let v = f(e, odd);
            if v.signum() != prev.1.signum() {
                let (mut lo, mut hi) = (prev.0, e);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid, odd).signum() == f(lo, odd).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
            prev = (e, v);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn single_dot(h: f64, lo: f64, hi: f64, length: f64, levels: usize) -> BoundStateSet {
    let grid = Grid1D::new(length, h).unwrap().with_dot_window(lo, hi).unwrap();
    let pot = build_potential(DotKind::SingleDot, &grid, 110.0, 30.0, 0.0).unwrap();
    let opts = EigenOptions { max_levels: levels, ..EigenOptions::default() };
    solve_bound_states_1d(&pot, &grid, &MaterialParams::gaas(), &opts).unwrap()
}

#[test]
fn single_well_against_transcendental_equation() {
    let kin = MaterialParams::gaas().kinetic_prefactor();
    let exact = analytic_levels(110.0, 30.0, kin);
    assert_eq!(exact.len(), 5);
    let coarse = single_dot(1.0, 100.0, 700.0, 800.0, 8);
    let fine = single_dot(0.5, 100.0, 700.0, 800.0, 8);
    assert_eq!(coarse.count(), exact.len());
    assert_eq!(fine.count(), exact.len());
    for n in 0..exact.len() {
        let e1 = (coarse.energies()[n] - exact[n]).abs();
        let e2 = (fine.energies()[n] - exact[n]).abs();
        assert!(e1 < 2.0, "level {n}: {} vs {}", coarse.energies()[n], exact[n]);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "level {n}: convergence ratio {ratio}");
    }
}

#[test]
fn deep_well_approaches_box_spacings() {
    let mat = MaterialParams::gaas();
    let grid = Grid1D::new(400.0, 0.25).unwrap().with_dot_window(180.0, 220.0).unwrap();
    let depth = 1e6;
    let pot = build_potential(DotKind::SingleDot, &grid, depth, 30.0, 0.0).unwrap();
    let opts = EigenOptions { max_levels: 3, ..EigenOptions::default() };
    let set = solve_bound_states_1d(&pot, &grid, &mat, &opts).unwrap();
    let unit = std::f64::consts::PI.powi(2) * mat.kinetic_prefactor() / 900.0;
    let e = set.energies();
    for (n, m) in [(1usize, 0usize), (2, 0), (2, 1)] {
        let expect = (((n + 1) * (n + 1)) as f64 - ((m + 1) * (m + 1)) as f64) * unit;
        let got = e[n] - e[m];
        assert!((got / expect - 1.0).abs() < 0.01, "E{n}-E{m} = {got}, box {expect}");
    }
}

#[test]
fn sparse_matches_dense_on_small_grid() {
    let t = MaterialParams::gaas().hopping(1.0);
    let n = 200;
    let diag: Vec<f64> = (0..n)
        .map(|i| 2.0 * t + if (85..115).contains(&i) { -110.0 } else { 0.0 })
        .collect();
    let upper = (0..n - 1).map(|i| (i, i + 1, -t)).collect();
    let op = SymmetricOperator::new(diag, upper);
    let dense = dense_eigensolve_small(&op).unwrap();
    let (sparse, _, res) = lowest_eigenpairs(&op, 5, 1e-10, 2000).unwrap();
    for k in 0..5 {
        assert!((dense[k] - sparse[k]).abs() < 1e-10, "{k}: {} vs {}", dense[k], sparse[k]);
        assert!(res[k] < 1e-8);
    }
}

#[test]
fn longer_domain_leaves_levels_unchanged() {
    let a = single_dot(1.0, 215.0, 385.0, 600.0, 4);
    let b = single_dot(1.0, 515.0, 685.0, 1200.0, 4);
    for (x, y) in a.energies().iter().zip(b.energies()) {
        assert!((x - y).abs() < 1e-3);
    }
}

fn double_dot(h: f64, lo: f64, hi: f64) -> (PotentialProfile, Grid1D, MaterialParams) {
    let grid = Grid1D::new(600.0, h).unwrap().with_dot_window(lo, hi).unwrap();
    let pot = build_potential(DotKind::DoubleDot, &grid, 110.0, 30.0, 20.0).unwrap();
    (pot, grid, MaterialParams::gaas())
}

#[test]
fn non_interacting_double_dot() {
    let (pot, grid, mat) = double_dot(2.0, 235.0, 365.0);
    let loose = EigenOptions { decay_tolerance: 1e-3, ..EigenOptions::default() };
    let one = solve_bound_states_1d(&pot, &grid, &mat, &EigenOptions { max_levels: 2, ..loose }).unwrap();
    let (e0, e0p) = (one.energies()[0], one.energies()[1]);
    let split = e0p - e0;
    assert!(split > 0.0 && split < 0.01, "tunnel splitting {split}");
    let opts = EigenOptions { max_levels: 4, delta_deg: 0.01, ..loose };
    let two = solve_bound_states_2p(&pot, &grid, &mat, &Interaction::off(&mat), &opts).unwrap();
    assert!((two.energies()[0] - 2.0 * e0).abs() < 1e-6);
    // 2E₀, E₀+E₀' twice and 2E₀' form one multiplet
    assert_eq!(two.degeneracy_groups()[0], vec![0, 1, 2, 3]);
    assert!((two.energies()[3] - 2.0 * e0p).abs() < 1e-6);
}

#[test]
fn interacting_double_dot_separates_charge() {
    let (pot, grid, mat) = double_dot(4.0, 240.0, 360.0);
    let inter = Interaction::bare(&mat);
    let opts = EigenOptions { max_levels: 4, decay_tolerance: 1e-2, ..EigenOptions::default() };
    let set = solve_bound_states_2p(&pot, &grid, &mat, &inter, &opts).unwrap();
    let op = window_operator_2p(&pot, &grid, &mat, &inter);
    let dense = dense_eigensolve_small(&op).unwrap();
    for k in 0..set.count() {
        assert!((dense[k] - set.energies()[k]).abs() < 1e-8);
    }
    let xs = grid.window_positions();
    let nw = xs.len();
    let h = grid.spacing();
    let g = set.state(0);
    let apart: f64 = (0..nw * nw)
        .filter(|&j| (xs[j / nw] < 300.0) != (xs[j % nw] < 300.0))
        .map(|j| g[j] * g[j] * h * h)
        .sum();
    assert!(apart > 0.9, "probability of one electron per well {apart}");
    for (k, s) in set.wavefunctions().iter().enumerate() {
        assert!(exchange_defect(s, nw, set.parities()[k]) < 1e-6);
    }
    assert_eq!(set.parities()[set.lowest_with(ExchangeSymmetry::Symmetric).unwrap()], ExchangeSymmetry::Symmetric);
}
