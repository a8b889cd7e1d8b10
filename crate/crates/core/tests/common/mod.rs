#![allow(dead_code)]

use fase::{CoordinateTensor, SnapshotSeries, SplineBasis, TrajectoryStack};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    (&a + a.transpose()) * 0.5
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let qr = random_matrix(rng, d, d).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn random_coords(rng: &mut ChaCha8Rng, n: usize, q: usize, d: usize) -> CoordinateTensor<f64> {
    CoordinateTensor::from_fn(n, q, d, |_, _, _| normal(rng))
}

pub fn random_stack(rng: &mut ChaCha8Rng, n: usize, m: usize, d: usize) -> TrajectoryStack<f64> {
    TrajectoryStack::new((0..m).map(|_| random_matrix(rng, n, d)).collect()).unwrap()
}

pub fn rotate_each(stack: &TrajectoryStack<f64>, rng: &mut ChaCha8Rng) -> TrajectoryStack<f64> {
    let d = stack.d();
    TrajectoryStack::new(stack.slices().iter().map(|z| z * random_orthogonal(rng, d)).collect()).unwrap()
}

/// Sorted uniform indices on [0, 1] with both endpoints included.
pub fn random_indices(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..m.saturating_sub(2)).map(|_| rng.random::<f64>()).collect();
    x.push(0.0);
    x.push(1.0);
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    x.dedup();
    x
}

pub fn noisy_series(
    rng: &mut ChaCha8Rng,
    coords: &CoordinateTensor<f64>,
    basis: &SplineBasis<f64>,
    indices: &[f64],
    sigma: f64,
) -> SnapshotSeries<f64> {
    let stack = fase::evaluate_stack(coords, basis, indices).unwrap();
    let snaps = stack
        .expected_adjacencies()
        .into_iter()
        .map(|theta| theta + random_symmetric(rng, coords.n()) * sigma)
        .collect();
    SnapshotSeries::new(indices.to_vec(), snaps).unwrap()
}

/// Recursive Cox–de Boor evaluation of `B_{j,p}(x)` on a clamped knot vector.
/// The right boundary belongs to the last nonempty span.
pub fn naive_basis(knots: &[f64], j: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        let (a, b) = (knots[j], knots[j + 1]);
        let last = *knots.last().unwrap();
        let in_span = (a <= x && x < b) || (x == last && b == last && a < b);
        return if in_span { 1.0 } else { 0.0 };
    }
    let mut out = 0.0;
    let left = knots[j + p] - knots[j];
    if left > 0.0 {
        out += (x - knots[j]) / left * naive_basis(knots, j, p - 1, x);
    }
    let right = knots[j + p + 1] - knots[j + 1];
    if right > 0.0 {
        out += (knots[j + p + 1] - x) / right * naive_basis(knots, j + 1, p - 1, x);
    }
    out
}

/// `k`-th derivative of `B_{j,p}` from the lower-order difference formula.
pub fn naive_derivative(knots: &[f64], j: usize, p: usize, k: usize, x: f64) -> f64 {
    if k == 0 {
        return naive_basis(knots, j, p, x);
    }
    if p == 0 {
        return 0.0;
    }
    let pf = p as f64;
    let mut out = 0.0;
    let left = knots[j + p] - knots[j];
    if left > 0.0 {
        out += pf / left * naive_derivative(knots, j, p - 1, k - 1, x);
    }
    let right = knots[j + p + 1] - knots[j + 1];
    if right > 0.0 {
        out -= pf / right * naive_derivative(knots, j + 1, p - 1, k - 1, x);
    }
    out
}
