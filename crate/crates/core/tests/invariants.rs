//! Property tests for the numerical and structural invariants the library
//! guarantees: probability normalization, monotonicity of isotonic fits,
//! permutation invariance of the calibration error, threshold monotonicity
//! of open-world candidate generation, and determinism of graph builds.

use std::collections::HashSet;

use kge_core::calibration::{
    calibrate, fit_affine_scaling, fit_isotonic_ova, fit_platt_ova, pool_adjacent_violators,
    softmax, softmax_confidence, CalibrationSet, Calibrator,
};
use kge_core::eval::{generate_owa_candidates, reliability_report};
use kge_core::graph::{build_graph, remove_inverse_relations, LabeledTriple, SplitSpec};
use kge_core::models::{init_model, ModelKind, ScoreVector};
use proptest::prelude::*;

fn score_vec(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, k)
}

/// Small labelled calibration problem: k classes, n score rows with labels.
fn calibration_set(k: usize, n: usize) -> impl Strategy<Value = CalibrationSet> {
    (
        prop::collection::vec(score_vec(k), n),
        prop::collection::vec(0..k, n),
    )
        .prop_map(|(scores, labels)| CalibrationSet::new(scores, labels).unwrap())
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(values in score_vec(6), shift in -50.0..50.0f64) {
        let base = softmax(&values);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let shifted = softmax(&shifted);
        for (a, b) in base.iter().zip(&shifted) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one(values in score_vec(8)) {
        let p = softmax(&values);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn pav_output_is_monotone_and_bounded(
        points in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 2..40),
    ) {
        let step = pool_adjacent_violators(&points);
        let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let y = step.eval(x);
            prop_assert!(y >= prev - 1e-15, "not monotone at {x}");
            prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            prev = y;
        }
    }

    #[test]
    fn ece_is_permutation_invariant(
        points in prop::collection::vec((0.0..=1.0f64, any::<bool>()), 1..200),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let base = reliability_report(&points, 10).unwrap();
        let mut shuffled = points.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let perm = reliability_report(&shuffled, 10).unwrap();
        prop_assert!((base.ece - perm.ece).abs() <= 1e-12);
    }

    #[test]
    fn ece_matches_brute_force_binning(
        points in prop::collection::vec((0.0..=1.0f64, any::<bool>()), 1..200),
        bins in 1usize..20,
    ) {
        // independent rule: bin m covers (m/M, (m+1)/M], bin 0 also takes 0
        let m = bins as f64;
        let mut count = vec![0usize; bins];
        let mut conf = vec![0.0f64; bins];
        let mut acc = vec![0.0f64; bins];
        for &(p, correct) in &points {
            let mut idx = 0;
            while idx + 1 < bins && p > (idx + 1) as f64 / m {
                idx += 1;
            }
            count[idx] += 1;
            conf[idx] += p;
            acc[idx] += correct as usize as f64;
        }
        let n = points.len() as f64;
        let mut expected = 0.0;
        for b in 0..bins {
            if count[b] > 0 {
                let c = count[b] as f64;
                expected += (c / n) * ((acc[b] / c) - (conf[b] / c)).abs();
            }
        }
        let report = reliability_report(&points, bins).unwrap();
        prop_assert!((report.ece - expected).abs() <= 1e-12);
    }

    #[test]
    fn uniform_vector_scaling_preserves_argmax(
        values in score_vec(5),
        scale in 0.05..20.0f64,
        bias in -5.0..5.0f64,
    ) {
        let z = ScoreVector { values: values.clone(), query: (0, 0) };
        let raw = softmax_confidence(&z);
        let cal = Calibrator::VectorScaling {
            a_diag: vec![scale; 5],
            b: vec![bias; 5],
        };
        let scaled = calibrate(&cal, &z).unwrap();
        prop_assert_eq!(raw.predicted, scaled.predicted);
    }

    #[test]
    fn inverse_removal_returns_subset_and_is_idempotent(
        raw in prop::collection::vec((0usize..6, 0usize..4, 0usize..6), 1..60),
        threshold in 0.05..=1.0f64,
    ) {
        let triples: Vec<LabeledTriple> = raw
            .iter()
            .map(|&(h, r, t)| (format!("e{h}"), format!("r{r}"), format!("e{t}")))
            .collect();
        let kept = remove_inverse_relations(&triples, threshold);
        let input: HashSet<&LabeledTriple> = triples.iter().collect();
        prop_assert!(kept.iter().all(|t| input.contains(t)));
        let twice = remove_inverse_relations(&kept, threshold);
        prop_assert_eq!(kept, twice);
    }
}

proptest! {
    // fitting runs a solver per case, keep the case count low
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fitted_calibrators_produce_probability_vectors(
        data in calibration_set(3, 24),
        probe in score_vec(3),
    ) {
        let z = ScoreVector { values: probe, query: (0, 0) };
        let fitted = vec![
            Calibrator::IdentitySoftmax,
            fit_platt_ova(&data).unwrap(),
            fit_isotonic_ova(&data).unwrap(),
            fit_affine_scaling(&data, true, 0.0).unwrap(),
            fit_affine_scaling(&data, false, 0.0).unwrap(),
        ];
        for cal in &fitted {
            let pred = calibrate(cal, &z).unwrap();
            let sum: f64 = pred.probs.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9, "{} sums to {sum}", cal.method_name());
            prop_assert!(pred.probs.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
            prop_assert!((pred.confidence - pred.probs[pred.predicted]).abs() == 0.0);
        }
    }

    #[test]
    fn owa_candidates_shrink_as_threshold_rises(
        lo in 0.05..0.5f64,
        delta in 0.0..0.5f64,
        seed in any::<u64>(),
    ) {
        let hi = lo + delta;
        let triples: Vec<LabeledTriple> = (0..30)
            .map(|i| (format!("e{}", i % 12), format!("r{}", i % 4), format!("e{}", (i * 5 + 1) % 12)))
            .collect();
        let graph = build_graph(&triples, &SplitSpec::default()).unwrap();
        let model = init_model(
            ModelKind::DistMult,
            4,
            graph.num_entities(),
            graph.num_relations(),
            seed,
        )
        .unwrap();
        let queries: Vec<(usize, usize)> = (0..graph.num_entities())
            .flat_map(|h| (0..graph.num_entities()).map(move |t| (h, t)))
            .collect();
        let cal = Calibrator::IdentitySoftmax;
        let at_lo = generate_owa_candidates(&model, &cal, &graph, &queries, lo).unwrap();
        let at_hi = generate_owa_candidates(&model, &cal, &graph, &queries, hi).unwrap();
        let lo_set: HashSet<(usize, usize, usize)> = at_lo
            .iter()
            .map(|c| (c.head, c.relation, c.tail))
            .collect();
        prop_assert!(at_hi.len() <= at_lo.len());
        for c in &at_hi {
            prop_assert!(lo_set.contains(&(c.head, c.relation, c.tail)));
            prop_assert!(c.confidence >= hi);
        }
    }

    #[test]
    fn graph_build_is_deterministic(
        raw in prop::collection::vec((0usize..20, 0usize..5, 0usize..20), 12..80),
        seed in any::<u64>(),
    ) {
        let triples: Vec<LabeledTriple> = raw
            .iter()
            .map(|&(h, r, t)| (format!("e{h}"), format!("r{r}"), format!("e{t}")))
            .collect();
        let distinct: HashSet<&LabeledTriple> = triples.iter().collect();
        prop_assume!(distinct.len() >= 10);
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let a = build_graph(&triples, &spec).unwrap();
        let b = build_graph(&triples, &spec).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );

        // splits partition the distinct triples: disjoint, union complete
        let n = a.train().len() + a.valid().len() + a.test().len();
        prop_assert_eq!(n, distinct.len());
        let mut seen = HashSet::new();
        for t in a.train().iter().chain(a.valid()).chain(a.test()) {
            prop_assert!(seen.insert(*t));
            prop_assert!(a.is_known(*t).unwrap());
        }
    }
}
