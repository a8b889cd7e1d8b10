mod common;

use common::*;
use fase::baselines::omni_embed_with_limit;
use fase::{ase, ase_per_snapshot, err_z, omni_embed, FaseError, Scenario, ScenarioSpec, SnapshotSeries};

#[test]
fn per_snapshot_ase_is_exact_on_noiseless_data() {
    let sim = fase::generate::<f64>(&ScenarioSpec::new(Scenario::I, 20, 8, 2, 6).with_sigma(0.0)).unwrap();
    let est = ase_per_snapshot(&sim.series, 2).unwrap();
    assert!(err_z(&est, &sim.truth).unwrap() < 1e-8);
}

#[test]
fn omnibus_of_constant_series_repeats_one_embedding() {
    let mut r = rng(2);
    let z = random_matrix(&mut r, 20, 2);
    let a = &z * z.transpose() + random_symmetric(&mut r, 20) * 0.1;
    let series = SnapshotSeries::new(vec![0.0, 0.5, 1.0], vec![a.clone(); 3]).unwrap();
    let omni = omni_embed(&series, 2).unwrap();
    let single = ase(&a, 2).unwrap();
    for slice in omni.slices() {
        // each slice is the single-matrix embedding up to column signs
        for c in 0..2 {
            let s = slice.column(c);
            let t = single.column(c);
            assert!((s - t).amax().min((s + t).amax()) < 1e-8);
        }
    }
    assert_eq!(omni, omni_embed(&series, 2).unwrap());
}

#[test]
fn omnibus_size_guard_and_override() {
    let sim = fase::generate::<f64>(&ScenarioSpec::new(Scenario::I, 60, 90, 1, 1)).unwrap();
    assert!(matches!(omni_embed(&sim.series, 1), Err(FaseError::ResourceLimit(_))));
    let small = sim.series.without_snapshots(3..90).unwrap();
    assert!(omni_embed_with_limit(&small, 1, 180).is_ok());
}

#[test]
fn baselines_are_finite() {
    let sim = fase::generate::<f64>(&ScenarioSpec::new(Scenario::III, 30, 10, 2, 4).with_density(0.3)).unwrap();
    for stack in [ase_per_snapshot(&sim.series, 2).unwrap(), omni_embed(&sim.series, 2).unwrap()] {
        assert!(stack.slices().iter().all(|s| s.iter().all(|v| v.is_finite())));
        assert_eq!((stack.n(), stack.m(), stack.d()), (30, 10, 2));
    }
}
