//! Snapshot data, basis-coordinate tensors and the least-squares objective.
//!
//! The expected adjacency at index `x` is `Θ(x) = Z(x) Z(x)ᵀ`, where row `i` of
//! the `n × d` matrix `Z(x)` is node `i`'s latent position and each component
//! is expanded in a shared spline basis: `z_{i,r}(x) = w_{i,r}ᵀ B(x)`.

use crate::error::{FaseError, Result};
use crate::scalar::Real;
use crate::spline::SplineBasis;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Largest entrywise asymmetry accepted without symmetrizing.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Indexed sequence of symmetric adjacency matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries<T: Real> {
    indices: Vec<T>,
    snapshots: Vec<DMatrix<T>>,
    masks: Option<Vec<DMatrix<bool>>>,
}

impl<T: Real> SnapshotSeries<T> {
    /// Validates and stores a series. Snapshots that are asymmetric beyond
    /// [`SYMMETRY_TOLERANCE`] are replaced by `(A + Aᵀ)/2`.
    pub fn new(indices: Vec<T>, snapshots: Vec<DMatrix<T>>) -> Result<Self> {
        if indices.len() != snapshots.len() {
            return Err(FaseError::InvalidSeries(format!(
                "{} indices for {} snapshots",
                indices.len(),
                snapshots.len()
            )));
        }
        if snapshots.is_empty() {
            return Err(FaseError::InvalidSeries("no snapshots".into()));
        }
        if indices.iter().any(|x| !x.is_finite()) {
            return Err(FaseError::InvalidSeries("non-finite snapshot index".into()));
        }
        if indices.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(FaseError::InvalidSeries(
                "snapshot indices must be strictly increasing".into(),
            ));
        }
        let n = snapshots[0].nrows();
        if n == 0 {
            return Err(FaseError::InvalidSeries("empty adjacency matrices".into()));
        }
        let tol = T::lit(SYMMETRY_TOLERANCE);
        let mut snapshots = snapshots;
        for (k, a) in snapshots.iter_mut().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(FaseError::InvalidSeries(format!(
                    "snapshot {k} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(FaseError::InvalidSeries(format!(
                    "snapshot {k} has non-finite entries"
                )));
            }
            let asym = (&*a - a.transpose()).amax();
            if asym > tol {
                log::warn!("snapshot {k} is asymmetric (max |A - A^T| = {asym}); symmetrizing");
                *a = (&*a + a.transpose()) * T::lit(0.5);
            }
        }
        Ok(Self {
            indices,
            snapshots,
            masks: None,
        })
    }

    /// Attaches observation masks (`true` = observed).
    pub fn with_masks(mut self, masks: Vec<DMatrix<bool>>) -> Result<Self> {
        if masks.len() != self.m() {
            return Err(FaseError::InvalidSeries(format!(
                "{} masks for {} snapshots",
                masks.len(),
                self.m()
            )));
        }
        let n = self.n();
        for (k, mask) in masks.iter().enumerate() {
            if mask.shape() != (n, n) {
                return Err(FaseError::InvalidSeries(format!("mask {k} has wrong shape")));
            }
            if mask != &mask.transpose() {
                return Err(FaseError::InvalidSeries(format!("mask {k} is not symmetric")));
            }
            if !mask.iter().any(|&b| b) {
                return Err(FaseError::InvalidSeries(format!(
                    "mask {k} leaves no observed entries"
                )));
            }
        }
        self.masks = Some(masks);
        Ok(self)
    }

    /// Treats every self-loop as unobserved.
    pub fn exclude_diagonal(self) -> Result<Self> {
        let n = self.n();
        let masks = match &self.masks {
            Some(existing) => existing
                .iter()
                .map(|mask| {
                    let mut mask = mask.clone();
                    mask.fill_diagonal(false);
                    mask
                })
                .collect(),
            None => (0..self.m())
                .map(|_| DMatrix::from_fn(n, n, |i, j| i != j))
                .collect(),
        };
        self.with_masks(masks)
    }

    pub fn n(&self) -> usize {
        self.snapshots[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.snapshots.len()
    }

    pub fn indices(&self) -> &[T] {
        &self.indices
    }

    pub fn snapshots(&self) -> &[DMatrix<T>] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &DMatrix<T> {
        &self.snapshots[k]
    }

    pub fn masks(&self) -> Option<&[DMatrix<bool>]> {
        self.masks.as_deref()
    }

    pub fn mask(&self, k: usize) -> Option<&DMatrix<bool>> {
        self.masks.as_ref().map(|m| &m[k])
    }

    pub fn is_observed(&self, k: usize, i: usize, j: usize) -> bool {
        self.mask(k).is_none_or(|m| m[(i, j)])
    }

    /// Series without the snapshots whose positions fall in `range`.
    pub fn without_snapshots(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let keep: Vec<usize> = (0..self.m()).filter(|k| !range.contains(k)).collect();
        let indices = keep.iter().map(|&k| self.indices[k]).collect();
        let snapshots = keep.iter().map(|&k| self.snapshots[k].clone()).collect();
        let out = Self::new(indices, snapshots)?;
        match &self.masks {
            Some(masks) => out.with_masks(keep.iter().map(|&k| masks[k].clone()).collect()),
            None => Ok(out),
        }
    }

    /// Copies of the snapshots with unobserved entries replaced by the
    /// per-edge mean over snapshots where that edge is observed (zero if the
    /// edge is never observed).
    pub fn imputed_snapshots(&self) -> Vec<DMatrix<T>> {
        let Some(masks) = &self.masks else {
            return self.snapshots.clone();
        };
        let fallback = observed_mean(&self.snapshots, masks, None);
        self.snapshots
            .iter()
            .zip(masks)
            .map(|(a, mask)| DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
                if mask[(i, j)] {
                    a[(i, j)]
                } else {
                    fallback[(i, j)]
                }
            }))
            .collect()
    }
}

/// Entrywise mean over observed entries of the selected snapshots; entries
/// never observed among them take the value from `fallback` (or zero).
pub(crate) fn observed_mean<T: Real>(
    snapshots: &[DMatrix<T>],
    masks: &[DMatrix<bool>],
    fallback: Option<&DMatrix<T>>,
) -> DMatrix<T> {
    let n = snapshots[0].nrows();
    let mut sum = DMatrix::<T>::zeros(n, n);
    let mut count = DMatrix::<usize>::zeros(n, n);
    for (a, mask) in snapshots.iter().zip(masks) {
        for j in 0..n {
            for i in 0..n {
                if mask[(i, j)] {
                    sum[(i, j)] += a[(i, j)];
                    count[(i, j)] += 1;
                }
            }
        }
    }
    DMatrix::from_fn(n, n, |i, j| match count[(i, j)] {
        0 => fallback.map_or(T::zero(), |f| f[(i, j)]),
        c => sum[(i, j)] / T::from_count(c),
    })
}

/// Basis coordinates: `d` slices `W_r`, each `n × q`, row `i` of slice `r`
/// being `w_{i,r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateTensor<T: Real> {
    slices: Vec<DMatrix<T>>,
}

impl<T: Real> CoordinateTensor<T> {
    pub fn zeros(n: usize, q: usize, d: usize) -> Self {
        Self {
            slices: (0..d).map(|_| DMatrix::zeros(n, q)).collect(),
        }
    }

    pub fn from_slices(slices: Vec<DMatrix<T>>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(FaseError::DimensionMismatch("coordinate tensor needs d >= 1".into()));
        };
        let shape = first.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(FaseError::DimensionMismatch("coordinate slices are empty".into()));
        }
        if slices.iter().any(|s| s.shape() != shape) {
            return Err(FaseError::DimensionMismatch(
                "coordinate slices differ in shape".into(),
            ));
        }
        if slices.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(FaseError::InvalidParameter("non-finite coordinates".into()));
        }
        Ok(Self { slices })
    }

    /// Tensor with entry `(i, j, r)` given by `f(i, j, r)`.
    pub fn from_fn(n: usize, q: usize, d: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        Self {
            slices: (0..d)
                .map(|r| DMatrix::from_fn(n, q, |i, j| f(i, j, r)))
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn q(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn d(&self) -> usize {
        self.slices.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n(), self.q(), self.d())
    }

    pub fn slices(&self) -> &[DMatrix<T>] {
        &self.slices
    }

    pub fn slice(&self, r: usize) -> &DMatrix<T> {
        &self.slices[r]
    }

    pub fn slice_mut(&mut self, r: usize) -> &mut DMatrix<T> {
        &mut self.slices[r]
    }

    pub fn get(&self, i: usize, j: usize, r: usize) -> T {
        self.slices[r][(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &Self, alpha: T) -> Self {
        Self {
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a + b * alpha)
                .collect(),
        }
    }

    pub fn scale(&self, alpha: T) -> Self {
        Self {
            slices: self.slices.iter().map(|s| s * alpha).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.slices
            .iter()
            .zip(&other.slices)
            .fold(T::zero(), |acc, (a, b)| acc + a.dot(b))
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    /// Mode-3 product with a `d × d` matrix: new slice `s` is `Σ_r W_r Q[r, s]`,
    /// so that every evaluated `Z(x)` becomes `Z(x) Q`.
    pub fn rotate(&self, rotation: &DMatrix<T>) -> Result<Self> {
        let d = self.d();
        if rotation.shape() != (d, d) {
            return Err(FaseError::DimensionMismatch(format!(
                "rotation is {:?}, expected {d}x{d}",
                rotation.shape()
            )));
        }
        let (n, q) = (self.n(), self.q());
        let slices = (0..d)
            .map(|s| {
                let mut out = DMatrix::zeros(n, q);
                for r in 0..d {
                    out += &self.slices[r] * rotation[(r, s)];
                }
                out
            })
            .collect();
        Ok(Self { slices })
    }

    /// The first `keep` slices as a tensor of latent dimension `keep`.
    pub fn leading(&self, keep: usize) -> Self {
        Self {
            slices: self.slices[..keep.min(self.d())].to_vec(),
        }
    }

    /// Copy of the tensor with slices `keep..` set to zero.
    pub fn truncated(&self, keep: usize) -> Self {
        let mut out = self.clone();
        for s in out.slices.iter_mut().skip(keep) {
            s.fill(T::zero());
        }
        out
    }
}

/// Latent positions at a sequence of indices: slice `k` is the `n × d` matrix `Z(x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStack<T: Real> {
    slices: Vec<DMatrix<T>>,
}

impl<T: Real> TrajectoryStack<T> {
    pub fn new(slices: Vec<DMatrix<T>>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(FaseError::DimensionMismatch("trajectory stack needs m >= 1".into()));
        };
        let shape = first.shape();
        if slices.iter().any(|s| s.shape() != shape) {
            return Err(FaseError::DimensionMismatch(
                "trajectory slices differ in shape".into(),
            ));
        }
        if slices.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(FaseError::InvalidParameter("non-finite trajectories".into()));
        }
        Ok(Self { slices })
    }

    pub fn zeros(n: usize, m: usize, d: usize) -> Self {
        Self {
            slices: (0..m).map(|_| DMatrix::zeros(n, d)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.slices.len()
    }

    pub fn d(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn slices(&self) -> &[DMatrix<T>] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &DMatrix<T> {
        &self.slices[k]
    }

    pub fn into_slices(self) -> Vec<DMatrix<T>> {
        self.slices
    }

    /// Widens every slice to `d` columns by appending zero columns.
    pub fn padded(&self, d: usize) -> Self {
        if d <= self.d() {
            return self.clone();
        }
        let extra = d - self.d();
        Self {
            slices: self
                .slices
                .iter()
                .map(|s| s.clone().insert_columns(s.ncols(), extra, T::zero()))
                .collect(),
        }
    }

    /// `Z(x_k) Z(x_k)ᵀ` for every slice.
    pub fn expected_adjacencies(&self) -> Vec<DMatrix<T>> {
        self.slices.iter().map(expected_adjacency).collect()
    }
}

/// `Θ = Z Zᵀ`.
pub fn expected_adjacency<T: Real>(z: &DMatrix<T>) -> DMatrix<T> {
    z * z.transpose()
}

/// `Ẑ(x)`: entry `(i, r)` is `w_{i,r}ᵀ B(x)`.
pub fn evaluate_processes<T: Real>(
    coords: &CoordinateTensor<T>,
    basis: &SplineBasis<T>,
    x: T,
) -> Result<DMatrix<T>> {
    check_basis(coords, basis)?;
    let (start, vals) = basis.eval_local(x)?;
    Ok(local_positions(coords, start, &vals))
}

/// `Ẑ(x)` from the nonzero basis values `vals` starting at column `start`.
fn local_positions<T: Real>(coords: &CoordinateTensor<T>, start: usize, vals: &[T]) -> DMatrix<T> {
    let (n, d) = (coords.n(), coords.d());
    let mut z = DMatrix::zeros(n, d);
    for r in 0..d {
        let w = coords.slice(r);
        for (off, &b) in vals.iter().enumerate() {
            let col = w.column(start + off);
            for i in 0..n {
                z[(i, r)] += col[i] * b;
            }
        }
    }
    z
}

/// Evaluates the processes at every index in `indices`.
pub fn evaluate_stack<T: Real>(
    coords: &CoordinateTensor<T>,
    basis: &SplineBasis<T>,
    indices: &[T],
) -> Result<TrajectoryStack<T>> {
    let slices = indices
        .iter()
        .map(|&x| evaluate_processes(coords, basis, x))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryStack::new(slices)
}

fn check_basis<T: Real>(coords: &CoordinateTensor<T>, basis: &SplineBasis<T>) -> Result<()> {
    if coords.q() != basis.q() {
        return Err(FaseError::DimensionMismatch(format!(
            "coordinates have q = {}, basis has q = {}",
            coords.q(),
            basis.q()
        )));
    }
    Ok(())
}

/// Least-squares fitting problem for a fixed series and basis.
///
/// Caches the design matrix so repeated objective and gradient evaluations
/// inside a descent loop only pay for the per-snapshot products.
#[derive(Debug, Clone)]
pub struct FitProblem<'a, T: Real> {
    series: &'a SnapshotSeries<T>,
    basis: &'a SplineBasis<T>,
    design: DMatrix<T>,
    local: Vec<(usize, Vec<T>)>,
}

impl<'a, T: Real> FitProblem<'a, T> {
    pub fn new(series: &'a SnapshotSeries<T>, basis: &'a SplineBasis<T>) -> Result<Self> {
        let design = basis.design_matrix(series.indices())?;
        let local = series
            .indices()
            .iter()
            .map(|&x| basis.eval_local(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            series,
            basis,
            design,
            local,
        })
    }

    pub fn series(&self) -> &SnapshotSeries<T> {
        self.series
    }

    pub fn basis(&self) -> &SplineBasis<T> {
        self.basis
    }

    /// `m × q` design matrix, row `k` = `B(x_k)ᵀ`.
    pub fn design(&self) -> &DMatrix<T> {
        &self.design
    }

    fn check(&self, coords: &CoordinateTensor<T>) -> Result<()> {
        if coords.n() != self.series.n() {
            return Err(FaseError::DimensionMismatch(format!(
                "coordinates have n = {}, series has n = {}",
                coords.n(),
                self.series.n()
            )));
        }
        check_basis(coords, self.basis)
    }

    /// Latent positions at every snapshot index, computed exactly as
    /// [`evaluate_processes`] does.
    fn positions(&self, coords: &CoordinateTensor<T>) -> Vec<DMatrix<T>> {
        self.local
            .iter()
            .map(|(start, vals)| local_positions(coords, *start, vals))
            .collect()
    }

    /// Masked residual `A_k - Z_k Z_kᵀ` (zero at unobserved entries).
    fn residual(&self, k: usize, z: &DMatrix<T>) -> DMatrix<T> {
        let mut res = self.series.snapshot(k) - expected_adjacency(z);
        if let Some(mask) = self.series.mask(k) {
            res.zip_apply(mask, |v, observed| {
                if !observed {
                    *v = T::zero();
                }
            });
        }
        res
    }

    pub fn objective(&self, coords: &CoordinateTensor<T>) -> Result<T> {
        self.check(coords)?;
        let z = self.positions(coords);
        let parts: Vec<T> = z
            .par_iter()
            .enumerate()
            .map(|(k, zk)| self.residual(k, zk).norm_squared())
            .collect();
        Ok(parts.into_iter().fold(T::zero(), |a, b| a + b))
    }

    pub fn gradient(&self, coords: &CoordinateTensor<T>) -> Result<CoordinateTensor<T>> {
        self.check(coords)?;
        let z = self.positions(coords);
        // G_k = R_k Z_k, n × d
        let g: Vec<DMatrix<T>> = z
            .par_iter()
            .enumerate()
            .map(|(k, zk)| self.residual(k, zk) * zk)
            .collect();
        let (n, d, m) = (coords.n(), coords.d(), self.series.m());
        let factor = T::lit(-4.0);
        let slices = (0..d)
            .map(|r| {
                let gr = DMatrix::from_fn(n, m, |i, k| g[k][(i, r)]);
                gr * &self.design * factor
            })
            .collect();
        Ok(CoordinateTensor { slices })
    }

    pub fn penalized_objective(
        &self,
        coords: &CoordinateTensor<T>,
        lambda: T,
        penalty: &DMatrix<T>,
    ) -> Result<T> {
        check_penalty(coords, lambda, penalty)?;
        let fit = self.objective(coords)?;
        if lambda == T::zero() {
            return Ok(fit);
        }
        Ok(fit + lambda * penalty_value(coords, penalty))
    }

    pub fn penalized_gradient(
        &self,
        coords: &CoordinateTensor<T>,
        lambda: T,
        penalty: &DMatrix<T>,
    ) -> Result<CoordinateTensor<T>> {
        check_penalty(coords, lambda, penalty)?;
        let mut grad = self.gradient(coords)?;
        if lambda == T::zero() {
            return Ok(grad);
        }
        let two_lambda = T::lit(2.0) * lambda;
        for (g, w) in grad.slices.iter_mut().zip(coords.slices()) {
            g.gemm(two_lambda, w, penalty, T::one());
        }
        Ok(grad)
    }
}

fn check_penalty<T: Real>(coords: &CoordinateTensor<T>, lambda: T, penalty: &DMatrix<T>) -> Result<()> {
    if !(lambda >= T::zero()) {
        return Err(FaseError::InvalidParameter(format!(
            "penalty weight must be nonnegative, got {lambda}"
        )));
    }
    if penalty.shape() != (coords.q(), coords.q()) {
        return Err(FaseError::DimensionMismatch(format!(
            "penalty is {:?}, expected {q}x{q}",
            penalty.shape(),
            q = coords.q()
        )));
    }
    Ok(())
}

/// `Σ_r tr(W_r Ω W_rᵀ)`.
pub fn penalty_value<T: Real>(coords: &CoordinateTensor<T>, penalty: &DMatrix<T>) -> T {
    coords
        .slices()
        .iter()
        .fold(T::zero(), |acc, w| acc + (w * penalty).dot(w))
}

/// `Σ_k ‖A_k − Σ_r W_r B(x_k) B(x_k)ᵀ W_rᵀ‖²_F` over observed entries.
pub fn objective<T: Real>(
    coords: &CoordinateTensor<T>,
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
) -> Result<T> {
    FitProblem::new(series, basis)?.objective(coords)
}

/// Exact gradient of [`objective`] with respect to every slice `W_r`:
/// `−4 Σ_k R_k W_r B(x_k) B(x_k)ᵀ` with masked residuals `R_k`.
pub fn gradient<T: Real>(
    coords: &CoordinateTensor<T>,
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
) -> Result<CoordinateTensor<T>> {
    FitProblem::new(series, basis)?.gradient(coords)
}

pub fn penalized_objective<T: Real>(
    coords: &CoordinateTensor<T>,
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    lambda: T,
    penalty: &DMatrix<T>,
) -> Result<T> {
    FitProblem::new(series, basis)?.penalized_objective(coords, lambda, penalty)
}

pub fn penalized_gradient<T: Real>(
    coords: &CoordinateTensor<T>,
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    lambda: T,
    penalty: &DMatrix<T>,
) -> Result<CoordinateTensor<T>> {
    FitProblem::new(series, basis)?.penalized_gradient(coords, lambda, penalty)
}

/// Noiseless series `A_k = Z(x_k) Z(x_k)ᵀ` generated from coordinates.
pub fn noiseless_series<T: Real>(
    coords: &CoordinateTensor<T>,
    basis: &SplineBasis<T>,
    indices: &[T],
) -> Result<SnapshotSeries<T>> {
    let stack = evaluate_stack(coords, basis, indices)?;
    SnapshotSeries::new(indices.to_vec(), stack.expected_adjacencies())
}

/// Basis vector helper for callers that already hold `B(x)`.
pub fn processes_from_basis_values<T: Real>(coords: &CoordinateTensor<T>, b: &DVector<T>) -> DMatrix<T> {
    let (n, d) = (coords.n(), coords.d());
    let mut z = DMatrix::zeros(n, d);
    for r in 0..d {
        z.set_column(r, &(coords.slice(r) * b));
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_basis() -> SplineBasis<f64> {
        SplineBasis::uniform(4, 3, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_coordinates_give_zero_processes() {
        let c = CoordinateTensor::<f64>::zeros(5, 4, 2);
        let z = evaluate_processes(&c, &small_basis(), 0.3).unwrap();
        assert_eq!(z, DMatrix::zeros(5, 2));
    }

    #[test]
    fn constant_coordinates_give_constant_processes() {
        let c = CoordinateTensor::from_fn(3, 4, 1, |_, _, _| 1.0);
        for &x in &[0.0, 0.37, 1.0] {
            let z = evaluate_processes(&c, &small_basis(), x).unwrap();
            for v in z.iter() {
                assert_relative_eq!(*v, 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn left_boundary_picks_first_coordinate() {
        let c = CoordinateTensor::from_fn(4, 4, 2, |i, j, r| (i * 7 + j * 3 + r) as f64 * 0.1 - 0.5);
        let z = evaluate_processes(&c, &small_basis(), 0.0).unwrap();
        for r in 0..2 {
            for i in 0..4 {
                assert_eq!(z[(i, r)], c.get(i, 0, r));
            }
        }
        let b = small_basis().eval(0.0).unwrap();
        assert_eq!(z, processes_from_basis_values(&c, &b));
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let c = CoordinateTensor::<f64>::zeros(3, 5, 1);
        assert!(matches!(
            evaluate_processes(&c, &small_basis(), 0.5),
            Err(FaseError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn expected_adjacency_examples() {
        assert_eq!(expected_adjacency(&DMatrix::<f64>::zeros(3, 2)), DMatrix::zeros(3, 3));
        let ones = DMatrix::<f64>::from_element(4, 1, 1.0);
        assert_eq!(expected_adjacency(&ones), DMatrix::from_element(4, 4, 1.0));
    }

    fn single_snapshot(a: [[f64; 2]; 2]) -> (SnapshotSeries<f64>, SplineBasis<f64>) {
        // order 0 with one cell: B(x) = 1 everywhere
        let basis = SplineBasis::new(0, vec![], 0.0, 1.0).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]]);
        (SnapshotSeries::new(vec![0.5], vec![m]).unwrap(), basis)
    }

    #[test]
    fn two_node_objective_by_hand() {
        let (a, b, c) = (1.3, -0.4, 0.7);
        let (series, basis) = single_snapshot([[a, b], [b, c]]);
        let (w1, w2) = (0.9, -1.1);
        let coords = CoordinateTensor::from_slices(vec![DMatrix::from_column_slice(2, 1, &[w1, w2])]).unwrap();
        let expected = (a - w1 * w1).powi(2) + 2.0 * (b - w1 * w2).powi(2) + (c - w2 * w2).powi(2);
        assert_relative_eq!(objective(&coords, &series, &basis).unwrap(), expected, epsilon = 1e-14);
        let zero = CoordinateTensor::zeros(2, 1, 1);
        assert_relative_eq!(
            objective(&zero, &series, &basis).unwrap(),
            a * a + 2.0 * b * b + c * c,
            epsilon = 1e-14
        );
    }

    #[test]
    fn masks_drop_entries_from_objective() {
        let (series, basis) = single_snapshot([[1.0, 2.0], [2.0, 3.0]]);
        let zero = CoordinateTensor::zeros(2, 1, 1);
        let full = series.clone().with_masks(vec![DMatrix::from_element(2, 2, true)]).unwrap();
        assert_eq!(
            objective(&zero, &full, &basis).unwrap(),
            objective(&zero, &series, &basis).unwrap()
        );
        let no_diag = series.clone().exclude_diagonal().unwrap();
        assert_relative_eq!(objective(&zero, &no_diag, &basis).unwrap(), 8.0);
    }

    #[test]
    fn invalid_masks_are_rejected() {
        let (series, _) = single_snapshot([[1.0, 2.0], [2.0, 3.0]]);
        let asym = DMatrix::from_row_slice(2, 2, &[true, false, true, true]);
        assert!(series.clone().with_masks(vec![asym]).is_err());
        assert!(series.with_masks(vec![DMatrix::from_element(2, 2, false)]).is_err());
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0]);
        let s = SnapshotSeries::new(vec![0.0], vec![a]).unwrap();
        assert_eq!(s.snapshot(0)[(0, 1)], 3.0);
        assert_eq!(s.snapshot(0)[(1, 0)], 3.0);
    }

    #[test]
    fn series_validation() {
        let a = DMatrix::<f64>::identity(2, 2);
        assert!(SnapshotSeries::new(vec![0.0, 0.0], vec![a.clone(), a.clone()]).is_err());
        assert!(SnapshotSeries::new(vec![0.0], vec![a.clone(), a.clone()]).is_err());
        assert!(SnapshotSeries::new(vec![0.0, 1.0], vec![a, DMatrix::identity(3, 3)]).is_err());
    }

    #[test]
    fn noiseless_series_has_zero_objective_and_gradient() {
        let basis = SplineBasis::uniform(6, 3, 0.0, 1.0).unwrap();
        let coords = CoordinateTensor::from_fn(5, 6, 2, |i, j, r| ((i + 2 * j + 3 * r) % 5) as f64 - 2.0);
        let idx: Vec<f64> = (0..7).map(|k| k as f64 / 6.0).collect();
        let series = noiseless_series(&coords, &basis, &idx).unwrap();
        assert_eq!(objective(&coords, &series, &basis).unwrap(), 0.0);
        assert_eq!(gradient(&coords, &series, &basis).unwrap().norm_squared(), 0.0);
    }

    #[test]
    fn penalized_forms_reduce_to_plain_ones_at_zero_weight() {
        let basis = SplineBasis::uniform(6, 3, 0.0, 1.0).unwrap();
        let coords = CoordinateTensor::from_fn(4, 6, 2, |i, j, r| (i as f64 - j as f64 * 0.3) * (r as f64 + 1.0) * 0.2);
        let idx: Vec<f64> = (0..5).map(|k| k as f64 / 4.0).collect();
        let truth = CoordinateTensor::from_fn(4, 6, 2, |i, j, _| ((i * j) % 3) as f64 * 0.5);
        let series = noiseless_series(&truth, &basis, &idx).unwrap();
        let omega = basis.penalty_matrix().unwrap();
        assert_eq!(
            penalized_objective(&coords, &series, &basis, 0.0, &omega).unwrap(),
            objective(&coords, &series, &basis).unwrap()
        );
        assert_eq!(
            penalized_gradient(&coords, &series, &basis, 0.0, &omega).unwrap(),
            gradient(&coords, &series, &basis).unwrap()
        );
        assert!(matches!(
            penalized_objective(&coords, &series, &basis, -1.0, &omega),
            Err(FaseError::InvalidParameter(_))
        ));
        // constant-per-node coordinates carry no curvature
        let flat = CoordinateTensor::from_fn(4, 6, 2, |i, _, r| (i + r) as f64);
        assert!(penalty_value(&flat, &omega).abs() < 1e-9);
    }

    #[test]
    fn penalty_gradient_is_two_lambda_w_omega() {
        let basis = SplineBasis::uniform(7, 3, 0.0, 1.0).unwrap();
        let idx: Vec<f64> = (0..6).map(|k| k as f64 / 5.0).collect();
        let series = SnapshotSeries::new(idx.clone(), vec![DMatrix::zeros(3, 3); 6]).unwrap();
        let coords = CoordinateTensor::from_fn(3, 7, 2, |i, j, r| ((i + j * r) % 4) as f64 - 1.5);
        let omega = basis.penalty_matrix().unwrap();
        let lambda = 0.37;
        let diff = penalized_gradient(&coords, &series, &basis, lambda, &omega)
            .unwrap()
            .add_scaled(&gradient(&coords, &series, &basis).unwrap(), -1.0);
        for r in 0..2 {
            let expected = coords.slice(r) * &omega * (2.0 * lambda);
            assert!((diff.slice(r) - expected).amax() < 1e-10);
        }
    }

    #[test]
    fn rotation_mode_three() {
        let c = CoordinateTensor::from_fn(3, 4, 2, |i, j, r| (i + j + r) as f64);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = c.rotate(&swap).unwrap();
        assert_eq!(s.slice(0), c.slice(1));
        assert_eq!(s.slice(1), c.slice(0));
        assert!(c.rotate(&DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn padded_stack_appends_zero_columns() {
        let s = TrajectoryStack::new(vec![DMatrix::from_element(3, 1, 2.0)]).unwrap();
        let p = s.padded(3);
        assert_eq!(p.d(), 3);
        assert_eq!(p.slice(0).column(0).sum(), 6.0);
        assert_eq!(p.slice(0).columns(1, 2).amax(), 0.0);
    }
}
