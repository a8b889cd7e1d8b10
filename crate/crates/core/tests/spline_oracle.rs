mod common;

use common::{naive_basis, naive_derivative};
use fase::{make_basis, SplineBasis};
use proptest::prelude::*;

#[test]
fn design_matrix_matches_recursive_evaluation() {
    let basis = SplineBasis::new(3, vec![0.1, 0.35, 0.35, 0.8], 0.0, 1.0).unwrap();
    let xs: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    let b = basis.design_matrix(&xs).unwrap();
    for (row, &x) in xs.iter().enumerate() {
        for j in 0..basis.q() {
            let expect = naive_basis(basis.knots(), j, 3, x);
            assert!((b[(row, j)] - expect).abs() < 1e-13, "x = {x}, j = {j}");
        }
    }
}

#[test]
fn derivatives_match_difference_formula() {
    let basis = SplineBasis::new(4, vec![0.2, 0.45, 0.7], -1.0, 2.0).unwrap();
    for step in 0..57 {
        let x = -1.0 + 3.0 * (step as f64 + 0.31) / 57.0;
        for k in 0..=3 {
            let d = basis.eval_derivative(x, k).unwrap();
            for j in 0..basis.q() {
                let expect = naive_derivative(basis.knots(), j, 4, k, x);
                assert!((d[j] - expect).abs() < 1e-9 * (1.0 + expect.abs()), "x = {x}, k = {k}, j = {j}");
            }
        }
    }
}

/// Trapezoid rule on every knot span, with curvature from the recursive oracle.
fn trapezoid_penalty(basis: &SplineBasis<f64>, pieces: usize) -> nalgebra::DMatrix<f64> {
    let p = basis.order();
    let q = basis.q();
    let knots = basis.knots();
    let mut omega = nalgebra::DMatrix::zeros(q, q);
    for s in p..q {
        let (a, b) = (knots[s], knots[s + 1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / pieces as f64;
        for t in 0..=pieces {
            // stay inside the span so one-sided limits are used at the knots
            let x = (a + h * t as f64).clamp(a + 1e-13, b - 1e-13);
            let w = if t == 0 || t == pieces { 0.5 * h } else { h };
            let second: Vec<f64> = (0..q).map(|j| naive_derivative(knots, j, p, 2, x)).collect();
            for i in 0..q {
                for j in 0..q {
                    omega[(i, j)] += w * second[i] * second[j];
                }
            }
        }
    }
    omega
}

#[test]
fn penalty_matches_trapezoid_oracle() {
    let indices: Vec<f64> = (0..40).map(|k| (k as f64 / 39.0).powf(1.5)).collect();
    for (q, order) in [(10, 3), (7, 2), (8, 4)] {
        let basis = make_basis(q, &indices, order).unwrap();
        let exact = basis.penalty_matrix().unwrap();
        let approx = trapezoid_penalty(&basis, 2000);
        let scale = exact.amax();
        assert!((&exact - &approx).amax() < 1e-6 * scale, "q = {q}, order = {order}");
        assert!((&exact - exact.transpose()).amax() < 1e-12 * scale);
    }
}

#[test]
fn penalty_null_space_and_psd() {
    let basis = SplineBasis::uniform(9, 3, 0.0, 1.0).unwrap();
    let omega = basis.penalty_matrix().unwrap();
    let ones = nalgebra::DVector::from_element(9, 1.0);
    assert!((&omega * &ones).amax() < 1e-10 * omega.amax());
    let eig = omega.clone().symmetric_eigen();
    assert!(eig.eigenvalues.iter().all(|&l| l > -1e-9 * omega.amax()));
}

#[test]
fn quantile_knots_for_uniform_indices() {
    let idx: Vec<f64> = (1..=80).map(|k| k as f64 / 80.0).collect();
    let basis = make_basis(10, &idx, 3).unwrap();
    // type-7 quantile at level j/7 of 80 sorted points
    for (j, &t) in basis.interior_knots().iter().enumerate() {
        let h = 79.0 * (j + 1) as f64 / 7.0;
        let lo = h.floor();
        let expect = (lo + 1.0 + (h - lo)) / 80.0;
        assert!((t - expect).abs() < 1e-14);
    }
}

fn basis_strategy() -> impl Strategy<Value = SplineBasis<f64>> {
    (0usize..5, prop::collection::vec(0.001f64..0.999, 0..8)).prop_map(|(order, mut knots)| {
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        SplineBasis::new(order, knots, 0.0, 1.0).unwrap()
    })
}

proptest! {
    #[test]
    fn partition_of_unity(basis in basis_strategy(), x in 0.0f64..=1.0) {
        let b = basis.eval(x).unwrap();
        prop_assert!((b.sum() - 1.0).abs() < 1e-12);
        prop_assert!(b.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn local_support(basis in basis_strategy(), x in 0.0f64..=1.0) {
        let b = basis.eval(x).unwrap();
        let nonzero: Vec<usize> = (0..basis.q()).filter(|&j| b[j] != 0.0).collect();
        prop_assert!(nonzero.len() <= basis.order() + 1);
        prop_assert!(nonzero.windows(2).all(|w| w[1] == w[0] + 1));
        let (start, vals) = basis.eval_local(x).unwrap();
        prop_assert_eq!(vals.len(), basis.order() + 1);
        for &j in &nonzero {
            prop_assert!(j >= start && j <= start + basis.order());
        }
    }
}
