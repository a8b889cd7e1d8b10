mod common;

use common::*;
use fase::init::{initialize_detailed, partition_indices};
use fase::synth::gen_scenario_i;
use fase::{default_blocks, diagnostics, evaluate_stack, objective, Scenario, ScenarioSpec, SnapshotSeries, SplineBasis};
use nalgebra::DMatrix;

#[test]
fn projection_satisfies_normal_equations() {
    let sim = gen_scenario_i::<f64>(&ScenarioSpec::new(Scenario::I, 15, 30, 2, 8).with_sigma(1.0)).unwrap();
    let basis = fase::make_basis(8, sim.series.indices(), 3).unwrap();
    for (blocks, align) in [(1, true), (5, true), (5, false), (30, true)] {
        let init = initialize_detailed(&sim.series, &basis, 2, blocks, align).unwrap();
        let b = basis.design_matrix(sim.series.indices()).unwrap();
        let mut block_of = vec![0; 30];
        for (l, part) in init.blocks.iter().enumerate() {
            for k in part.clone() {
                block_of[k] = l;
            }
        }
        for r in 0..2 {
            // m × n target, row k = block(k)'s embedding column r
            let target = DMatrix::from_fn(30, 15, |k, i| init.block_embeddings[block_of[k]][(i, r)]);
            let fitted = &b * init.coords.slice(r).transpose();
            let normal = b.transpose() * (&target - fitted);
            assert!(normal.amax() < 1e-8 * target.amax().max(1.0), "L = {blocks}, r = {r}");
        }
    }
}

#[test]
fn single_block_recovers_constant_truth() {
    let mut r = rng(3);
    let z = random_matrix(&mut r, 12, 2);
    let a = &z * z.transpose();
    let idx: Vec<f64> = (0..10).map(|k| k as f64 / 9.0).collect();
    let series = SnapshotSeries::new(idx.clone(), vec![a.clone(); 10]).unwrap();
    let basis = SplineBasis::uniform(5, 3, 0.0, 1.0).unwrap();
    let init = initialize_detailed(&series, &basis, 2, 1, true).unwrap();
    let obj = objective(&init.coords, &series, &basis).unwrap();
    assert!(obj < 1e-10 * 10.0 * a.norm_squared());
}

#[test]
fn chained_blocks_point_the_same_way() {
    let sim = gen_scenario_i::<f64>(&ScenarioSpec::new(Scenario::I, 20, 40, 2, 9).with_sigma(0.5)).unwrap();
    let basis = fase::make_basis(10, sim.series.indices(), 3).unwrap();
    let init = initialize_detailed(&sim.series, &basis, 2, 10, true).unwrap();
    for w in init.block_embeddings.windows(2) {
        assert!((w[1].transpose() * &w[0]).trace() >= 0.0);
    }
}

#[test]
fn unaligned_initialization_keeps_block_gram_matrices() {
    let sim = gen_scenario_i::<f64>(&ScenarioSpec::new(Scenario::I, 10, 12, 2, 1).with_sigma(0.0)).unwrap();
    let basis = fase::make_basis(6, sim.series.indices(), 3).unwrap();
    let a = initialize_detailed(&sim.series, &basis, 2, 4, false).unwrap();
    let b = initialize_detailed(&sim.series, &basis, 2, 4, true).unwrap();
    for (x, y) in a.block_embeddings.iter().zip(&b.block_embeddings) {
        assert!((x * x.transpose() - y * y.transpose()).amax() < 1e-10);
    }
}

#[test]
fn partitions_cover_in_order() {
    for m in 1..30 {
        for l in 1..=m {
            let parts = partition_indices(m, l).unwrap();
            assert_eq!(parts.len(), l);
            assert_eq!(parts[0].start, 0);
            assert_eq!(parts[l - 1].end, m);
            let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
            assert!(parts.windows(2).all(|w| w[0].end == w[1].start));
        }
        assert!(partition_indices(m, m + 1).is_err());
    }
}

#[test]
fn default_block_rule_on_noisy_scenario() {
    let sim = gen_scenario_i::<f64>(&ScenarioSpec::new(Scenario::I, 50, 40, 2, 0).with_sigma(2.0)).unwrap();
    let l = default_blocks(&sim.series, 2).unwrap();
    assert!(l > 1 && l < 40, "L = {l}");
    let diag = diagnostics(&sim.series, 2).unwrap();
    assert!(diag.kappa >= 1.0);
    // differencing leaves the noise plus a small smooth drift
    assert!((diag.sigma_hat - 2.0).abs() < 0.3, "sigma_hat = {}", diag.sigma_hat);
}

#[test]
fn default_block_rule_limits() {
    let sim = gen_scenario_i::<f64>(&ScenarioSpec::new(Scenario::I, 10, 8, 2, 0).with_sigma(0.0)).unwrap();
    let constant = SnapshotSeries::new(
        sim.series.indices().to_vec(),
        vec![sim.series.snapshot(3).clone(); 8],
    )
    .unwrap();
    assert_eq!(diagnostics(&constant, 2).unwrap().sigma_hat, 1e-12);
    assert_eq!(default_blocks(&constant, 2).unwrap(), 8);
    let huge = gen_scenario_i::<f64>(&ScenarioSpec::new(Scenario::I, 10, 8, 2, 0).with_sigma(1e6)).unwrap();
    assert_eq!(default_blocks(&huge.series, 2).unwrap(), 1);
    let one = SnapshotSeries::new(vec![0.0], vec![sim.series.snapshot(0).clone()]).unwrap();
    assert_eq!(default_blocks(&one, 2).unwrap(), 1);
}

#[test]
fn saturated_initialization_is_exact_on_noiseless_data() {
    let mut r = rng(21);
    let basis = SplineBasis::uniform(6, 3, 0.0, 1.0).unwrap();
    let idx = random_indices(&mut r, 6);
    let truth = random_coords(&mut r, 9, 6, 2);
    let exact = evaluate_stack(&truth, &basis, &idx).unwrap();
    let series = SnapshotSeries::new(idx, exact.expected_adjacencies()).unwrap();
    let init = initialize_detailed(&series, &basis, 2, 6, true).unwrap();
    let scale: f64 = series.snapshots().iter().map(|a| a.norm_squared()).sum();
    assert!(objective(&init.coords, &series, &basis).unwrap() < 1e-18 * scale);
}
