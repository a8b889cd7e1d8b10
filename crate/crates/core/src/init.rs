//! Local-average spectral initialization of the basis coordinates.
//!
//! The snapshots are split into `L` contiguous blocks, each block mean is
//! embedded with an adjacency spectral embedding, consecutive block
//! embeddings are optionally rotated onto each other, and the resulting
//! piecewise-constant trajectories are projected onto the spline basis by
//! least squares.

use crate::align::{leading_entry_negative, procrustes_from_cross};
use crate::error::{FaseError, Result};
use crate::model::{observed_mean, CoordinateTensor, SnapshotSeries};
use crate::scalar::Real;
use crate::spline::SplineBasis;
use nalgebra::DMatrix;
use std::ops::Range;

/// Floor applied to the noise scale estimate.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Floor applied to the signal eigenvalue estimate.
pub const GAMMA_SQ_FLOOR: f64 = 1e-12;

/// Adjacency spectral embedding together with the eigenvalues it used.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T: Real> {
    pub positions: DMatrix<T>,
    /// Selected eigenvalues, ordered by decreasing magnitude.
    pub eigenvalues: Vec<T>,
}

impl<T: Real> Embedding<T> {
    pub fn has_negative_eigenvalue(&self) -> bool {
        self.eigenvalues.iter().any(|&l| l < T::zero())
    }
}

/// Top-`d` eigenvectors by eigenvalue magnitude, scaled by `|λ|^{1/2}`.
///
/// Ties in magnitude go to the larger (positive) eigenvalue, then to the
/// lower index. Each eigenvector is signed so its largest magnitude entry is
/// positive.
pub fn ase<T: Real>(m: &DMatrix<T>, d: usize) -> Result<DMatrix<T>> {
    ase_detailed(m, d).map(|e| e.positions)
}

pub fn ase_detailed<T: Real>(m: &DMatrix<T>, d: usize) -> Result<Embedding<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(FaseError::DimensionMismatch("embedding input must be square".into()));
    }
    if d == 0 || d > n {
        return Err(FaseError::InvalidParameter(format!(
            "embedding dimension {d} must lie in 1..={n}"
        )));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        lb.abs()
            .partial_cmp(&la.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(lb.partial_cmp(&la).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    let mut positions = DMatrix::zeros(n, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (col, &idx) in order.iter().take(d).enumerate() {
        let lambda = eig.eigenvalues[idx];
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        if leading_entry_negative(v.iter().copied()) {
            v.neg_mut();
        }
        positions.set_column(col, &(v * lambda.abs().sqrt()));
        eigenvalues.push(lambda);
    }
    Ok(Embedding {
        positions,
        eigenvalues,
    })
}

/// Splits `0..m` into `blocks` contiguous ranges whose sizes differ by at
/// most one, larger ranges first.
pub fn partition_indices(m: usize, blocks: usize) -> Result<Vec<Range<usize>>> {
    if blocks == 0 || blocks > m {
        return Err(FaseError::InvalidParameter(format!(
            "cannot split {m} snapshots into {blocks} blocks"
        )));
    }
    let base = m / blocks;
    let extra = m % blocks;
    let mut start = 0;
    Ok((0..blocks)
        .map(|l| {
            let len = base + usize::from(l < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Full output of the initializer.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization<T: Real> {
    pub coords: CoordinateTensor<T>,
    /// Per-block embeddings after alignment.
    pub block_embeddings: Vec<DMatrix<T>>,
    pub blocks: Vec<Range<usize>>,
    /// Number of blocks whose embedding used a negative eigenvalue.
    pub negative_eigenvalue_blocks: usize,
}

pub fn initialize<T: Real>(
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    d: usize,
    blocks: usize,
    align: bool,
) -> Result<CoordinateTensor<T>> {
    initialize_detailed(series, basis, d, blocks, align).map(|init| init.coords)
}

pub fn initialize_detailed<T: Real>(
    series: &SnapshotSeries<T>,
    basis: &SplineBasis<T>,
    d: usize,
    blocks: usize,
    align: bool,
) -> Result<Initialization<T>> {
    let (n, m, q) = (series.n(), series.m(), basis.q());
    let parts = partition_indices(m, blocks)?;
    let global = series
        .masks()
        .map(|masks| observed_mean(series.snapshots(), masks, None));

    let mut embeddings: Vec<DMatrix<T>> = Vec::with_capacity(parts.len());
    let mut negative = 0;
    for part in &parts {
        let snaps = &series.snapshots()[part.clone()];
        let mean = match series.masks() {
            Some(masks) => observed_mean(snaps, &masks[part.clone()], global.as_ref()),
            None => {
                let mut sum = DMatrix::zeros(n, n);
                for a in snaps {
                    sum += a;
                }
                sum / T::from_count(snaps.len())
            }
        };
        let emb = ase_detailed(&mean, d)?;
        if emb.has_negative_eigenvalue() {
            negative += 1;
        }
        let mut z = emb.positions;
        if align {
            if let Some(prev) = embeddings.last() {
                let rot = procrustes_from_cross(&(z.transpose() * prev));
                z = &z * rot;
            }
        }
        embeddings.push(z);
    }
    if negative > 0 {
        log::warn!("{negative} block embeddings selected a negative eigenvalue");
    }

    let design = basis.design_matrix(series.indices())?;
    if m < q {
        return Err(FaseError::RankDeficientDesign);
    }
    let gram = design.transpose() * &design;
    let chol = gram.cholesky().ok_or(FaseError::RankDeficientDesign)?;
    let mut block_of = vec![0usize; m];
    for (l, part) in parts.iter().enumerate() {
        for k in part.clone() {
            block_of[k] = l;
        }
    }
    let slices = (0..d)
        .map(|r| {
            // m × n: row k is block(k)'s column r
            let stacked = DMatrix::from_fn(m, n, |k, i| embeddings[block_of[k]][(i, r)]);
            chol.solve(&(design.transpose() * stacked)).transpose()
        })
        .collect();
    let coords = CoordinateTensor::from_slices(slices)
        .map_err(|_| FaseError::RankDeficientDesign)?;
    Ok(Initialization {
        coords,
        block_embeddings: embeddings,
        blocks: parts,
        negative_eigenvalue_blocks: negative,
    })
}

/// Plug-in estimates of the signal strength and noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDiagnostics<T: Real> {
    /// `d`-th largest eigenvalue of the mean adjacency matrix (floored).
    pub gamma_sq: T,
    /// Ratio of the largest to the `d`-th largest eigenvalue.
    pub kappa: T,
    /// Edge noise standard deviation from successive differences (floored).
    pub sigma_hat: T,
}

pub fn diagnostics<T: Real>(series: &SnapshotSeries<T>, d: usize) -> Result<SpectralDiagnostics<T>> {
    let n = series.n();
    if d == 0 || d > n {
        return Err(FaseError::InvalidParameter(format!(
            "latent dimension {d} must lie in 1..={n}"
        )));
    }
    let mean = match series.masks() {
        Some(masks) => observed_mean(series.snapshots(), masks, None),
        None => {
            let mut sum = DMatrix::zeros(n, n);
            for a in series.snapshots() {
                sum += a;
            }
            sum / T::from_count(series.m())
        }
    };
    let mut eig: Vec<T> = mean.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let gamma_sq = eig[d - 1].max(T::lit(GAMMA_SQ_FLOOR));
    let kappa = (eig[0] / gamma_sq).max(T::one());

    // pooled sample variance of successive differences over the upper triangle
    let (mut sum, mut sum_sq, mut count) = (T::zero(), T::zero(), 0usize);
    for k in 1..series.m() {
        let (a, b) = (series.snapshot(k - 1), series.snapshot(k));
        for j in 0..n {
            for i in 0..=j {
                if series.is_observed(k - 1, i, j) && series.is_observed(k, i, j) {
                    let diff = b[(i, j)] - a[(i, j)];
                    sum += diff;
                    sum_sq += diff * diff;
                    count += 1;
                }
            }
        }
    }
    let sigma_hat = if count > 1 {
        let c = T::from_count(count);
        let mu = sum / c;
        let var = (sum_sq - c * mu * mu).max(T::zero()) / T::from_count(count - 1);
        (var / T::lit(2.0)).sqrt()
    } else {
        T::zero()
    };
    Ok(SpectralDiagnostics {
        gamma_sq,
        kappa,
        sigma_hat: sigma_hat.max(T::lit(SIGMA_FLOOR)),
    })
}

/// Number of initialization blocks balancing local-average noise against
/// smoothing bias: `round((γ √m / σ)^{2/3})` clamped to `1..=m`.
pub fn default_blocks<T: Real>(series: &SnapshotSeries<T>, d: usize) -> Result<usize> {
    let m = series.m();
    if m < 2 {
        log::warn!("a single snapshot gives no noise estimate; using one block");
        return Ok(1);
    }
    let diag = diagnostics(series, d)?;
    let ratio = diag.gamma_sq.sqrt() * T::from_count(m).sqrt() / diag.sigma_hat;
    let raw = ratio.as_f64().powf(2.0 / 3.0).round();
    let blocks = if raw.is_finite() { raw.clamp(1.0, m as f64) as usize } else { m };
    Ok(blocks)
}
