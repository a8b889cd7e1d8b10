//! Spectral baselines: independent per-snapshot embeddings and the omnibus
//! joint embedding.

use crate::error::{FaseError, Result};
use crate::init::ase;
use crate::model::{SnapshotSeries, TrajectoryStack};
use crate::scalar::Real;
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Default cap on the side length `m n` of the dense omnibus matrix.
pub const OMNIBUS_SIZE_LIMIT: usize = 5000;

/// `d`-dimensional ASE of every snapshot. Unobserved entries are filled with
/// the per-edge observed mean first.
pub fn ase_per_snapshot<T: Real>(series: &SnapshotSeries<T>, d: usize) -> Result<TrajectoryStack<T>> {
    let snapshots = series.imputed_snapshots();
    let slices = snapshots
        .par_iter()
        .map(|a| ase(a, d))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryStack::new(slices)
}

/// Block matrix with `A_k` on the diagonal and `(A_i + A_j)/2` off it.
pub fn omnibus_matrix<T: Real>(snapshots: &[DMatrix<T>]) -> DMatrix<T> {
    let m = snapshots.len();
    let n = snapshots[0].nrows();
    let half = T::lit(0.5);
    let mut omni = DMatrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in i..m {
            let block = if i == j {
                snapshots[i].clone()
            } else {
                (&snapshots[i] + &snapshots[j]) * half
            };
            omni.view_mut((i * n, j * n), (n, n)).copy_from(&block);
            if i != j {
                omni.view_mut((j * n, i * n), (n, n)).copy_from(&block.transpose());
            }
        }
    }
    omni
}

/// Omnibus embedding with the default size guard.
pub fn omni_embed<T: Real>(series: &SnapshotSeries<T>, d: usize) -> Result<TrajectoryStack<T>> {
    omni_embed_with_limit(series, d, OMNIBUS_SIZE_LIMIT)
}

/// Omnibus embedding: slice `k` holds rows `k n .. (k+1) n` of the ASE of the
/// omnibus matrix.
pub fn omni_embed_with_limit<T: Real>(
    series: &SnapshotSeries<T>,
    d: usize,
    limit: usize,
) -> Result<TrajectoryStack<T>> {
    let (n, m) = (series.n(), series.m());
    if n * m > limit {
        return Err(FaseError::ResourceLimit(format!(
            "omnibus matrix would be {0}x{0} (limit {limit}); raise the limit or embed fewer snapshots",
            n * m
        )));
    }
    let omni = omnibus_matrix(&series.imputed_snapshots());
    let z = ase(&omni, d)?;
    let slices = (0..m).map(|k| z.rows(k * n, n).clone_owned()).collect();
    TrajectoryStack::new(slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, seed: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| (((i + 1) * (j + 3) * (seed + 7)) % 11) as f64 - 5.0);
        &a + a.transpose()
    }

    #[test]
    fn omnibus_is_symmetric_with_expected_blocks() {
        let snaps = vec![sym(3, 1), sym(3, 2), sym(3, 3)];
        let omni = omnibus_matrix(&snaps);
        assert_eq!(omni, omni.transpose());
        assert_eq!(omni.view((0, 3), (3, 3)).clone_owned(), (&snaps[0] + &snaps[1]) * 0.5);
        assert_eq!(omni.view((6, 6), (3, 3)).clone_owned(), snaps[2]);
    }

    #[test]
    fn single_snapshot_omnibus_is_plain_ase() {
        let s = SnapshotSeries::new(vec![0.0], vec![sym(5, 4)]).unwrap();
        assert_eq!(omni_embed(&s, 2).unwrap(), ase_per_snapshot(&s, 2).unwrap());
    }

    #[test]
    fn size_guard() {
        let s = SnapshotSeries::new(vec![0.0, 1.0], vec![sym(4, 1), sym(4, 2)]).unwrap();
        assert!(matches!(omni_embed_with_limit(&s, 1, 7), Err(FaseError::ResourceLimit(_))));
        assert!(omni_embed_with_limit(&s, 1, 8).is_ok());
    }

    #[test]
    fn masked_entries_are_imputed() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let b = DMatrix::from_element(2, 2, 3.0);
        let mut mask = DMatrix::from_element(2, 2, true);
        mask[(0, 1)] = false;
        mask[(1, 0)] = false;
        let s = SnapshotSeries::new(vec![0.0, 1.0], vec![a, b])
            .unwrap()
            .with_masks(vec![DMatrix::from_element(2, 2, true), mask])
            .unwrap();
        let filled = s.imputed_snapshots();
        assert_eq!(filled[1][(0, 1)], 1.0);
        assert_eq!(filled[1][(0, 0)], 3.0);
        assert!(ase_per_snapshot(&s, 1).is_ok());
    }
}
