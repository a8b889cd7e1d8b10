//! Orthogonal Procrustes alignment and rotation-aware error metrics.

use crate::error::{FaseError, Result};
use crate::model::{expected_adjacency, TrajectoryStack};
use crate::scalar::Real;
use nalgebra::DMatrix;

/// Rotations chosen by [`sequential_procrustes_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport<T: Real> {
    /// One `d × d` orthogonal matrix per slice; the first is the identity.
    pub rotations: Vec<DMatrix<T>>,
    /// `Σ_k ‖Z̃_k − Z̃_{k−1}‖²_F` after alignment.
    pub total_error: T,
}

/// Orthogonal `Q` minimizing `‖X Q − Y‖_F`.
pub fn procrustes<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x.shape() != y.shape() {
        return Err(FaseError::DimensionMismatch(format!(
            "procrustes operands are {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(procrustes_from_cross(&(x.transpose() * y)))
}

/// Procrustes solution from the cross product `M = Xᵀ Y`: `U Vᵀ` where
/// `M = U Σ Vᵀ`. Each left singular vector is signed so that its largest
/// magnitude entry is positive.
pub fn procrustes_from_cross<T: Real>(cross: &DMatrix<T>) -> DMatrix<T> {
    let d = cross.nrows();
    if d == 1 {
        return DMatrix::from_element(1, 1, if cross[(0, 0)] >= T::zero() { T::one() } else { -T::one() });
    }
    let svd = cross.clone().svd(true, true);
    let mut u = svd.u.expect("requested U");
    let mut v_t = svd.v_t.expect("requested V^T");
    for i in 0..u.ncols() {
        if leading_entry_negative(u.column(i).iter().copied()) {
            u.column_mut(i).neg_mut();
            v_t.row_mut(i).neg_mut();
        }
    }
    u * v_t
}

/// True when the first entry of largest magnitude is negative.
pub(crate) fn leading_entry_negative<T: Real>(values: impl Iterator<Item = T>) -> bool {
    let mut best = T::zero();
    let mut best_abs = T::zero();
    for v in values {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = v;
        }
    }
    best < T::zero()
}

/// Aligns each slice to its already aligned predecessor, starting from the
/// identity on the first slice.
pub fn sequential_procrustes<T: Real>(stack: &TrajectoryStack<T>) -> TrajectoryStack<T> {
    sequential_procrustes_report(stack).0
}

pub fn sequential_procrustes_report<T: Real>(
    stack: &TrajectoryStack<T>,
) -> (TrajectoryStack<T>, AlignmentReport<T>) {
    let d = stack.d();
    let mut aligned: Vec<DMatrix<T>> = Vec::with_capacity(stack.m());
    let mut rotations = Vec::with_capacity(stack.m());
    let mut total_error = T::zero();
    for z in stack.slices() {
        match aligned.last() {
            None => {
                rotations.push(DMatrix::identity(d, d));
                aligned.push(z.clone());
            }
            Some(prev) => {
                let q = procrustes_from_cross(&(z.transpose() * prev));
                let next = z * &q;
                total_error += (&next - prev).norm_squared();
                rotations.push(q);
                aligned.push(next);
            }
        }
    }
    let out = TrajectoryStack::new(aligned).expect("alignment preserves shape and finiteness");
    (out, AlignmentReport { rotations, total_error })
}

fn check_pair<T: Real>(est: &TrajectoryStack<T>, truth: &TrajectoryStack<T>) -> Result<usize> {
    if est.n() != truth.n() || est.m() != truth.m() {
        return Err(FaseError::DimensionMismatch(format!(
            "estimate is {}x{} (n x m), truth is {}x{}",
            est.n(),
            est.m(),
            truth.n(),
            truth.m()
        )));
    }
    Ok(est.d().max(truth.d()))
}

/// Root mean squared error after the best rotation for each snapshot
/// separately. Stacks of different latent dimension are padded with zero
/// columns.
pub fn err_z<T: Real>(est: &TrajectoryStack<T>, truth: &TrajectoryStack<T>) -> Result<T> {
    let d = check_pair(est, truth)?;
    let (est, truth) = (est.padded(d), truth.padded(d));
    let mut total = T::zero();
    for (zh, z) in est.slices().iter().zip(truth.slices()) {
        let q = procrustes_from_cross(&(z.transpose() * zh));
        total += (zh - z * q).norm_squared();
    }
    Ok((total / T::from_count(est.n() * d * est.m())).sqrt())
}

/// Error after sequentially aligning both stacks and then applying one
/// global rotation to the aligned truth.
pub fn err_z_star<T: Real>(est: &TrajectoryStack<T>, truth: &TrajectoryStack<T>) -> Result<T> {
    let d = check_pair(est, truth)?;
    let est = sequential_procrustes(&est.padded(d));
    let truth = sequential_procrustes(&truth.padded(d));
    let mut cross = DMatrix::zeros(d, d);
    for (zh, z) in est.slices().iter().zip(truth.slices()) {
        cross += z.transpose() * zh;
    }
    let q = procrustes_from_cross(&cross);
    let mut total = T::zero();
    for (zh, z) in est.slices().iter().zip(truth.slices()) {
        total += (zh - z * &q).norm_squared();
    }
    Ok((total / T::from_count(est.n() * d * est.m())).sqrt())
}

/// `‖Ẑ Ẑᵀ − Θ‖_F / n`.
pub fn err_theta_mid<T: Real>(est: &DMatrix<T>, theta: &DMatrix<T>) -> Result<T> {
    let n = est.nrows();
    if theta.shape() != (n, n) {
        return Err(FaseError::DimensionMismatch(format!(
            "estimate has {n} rows, expected adjacency is {:?}",
            theta.shape()
        )));
    }
    Ok((expected_adjacency(est) - theta).norm() / T::from_count(n))
}
