//! Shared fixture builders for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kge_core::calibration::CalibrationSet;
use kge_core::models::{init_model, KgeModel, ModelKind};

pub fn model_fixture(kind: ModelKind, dim: usize, n_entities: usize, n_relations: usize) -> KgeModel {
    init_model(kind, dim, n_entities, n_relations, 42).unwrap()
}

/// Uniform confidence/correctness points for reliability binning.
pub fn reliability_points(n: usize, seed: u64) -> Vec<(f64, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.gen_range(0.0..=1.0), rng.gen_bool(0.5)))
        .collect()
}

/// Noisy monotone regression points for the isotonic benchmark.
pub fn isotonic_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.0..1.0);
            let y = (x + rng.gen_range(-0.3..0.3)).clamp(0.0, 1.0);
            (x, y)
        })
        .collect()
}

/// A labelled score set whose argmax is usually the true class.
pub fn calibration_fixture(k: usize, n: usize, seed: u64) -> CalibrationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.gen_range(0..k);
        let mut row: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        row[label] += 2.0;
        scores.push(row);
        labels.push(label);
    }
    CalibrationSet::new(scores, labels).unwrap()
}
