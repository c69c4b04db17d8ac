//! Finite-difference verification of the analytic training gradients.
//!
//! The oracle rebuilds the model with one parameter nudged by +/- h and
//! recomputes the loss through the public scoring and loss functions, so it
//! shares no code with the backward pass it checks.

use kge_core::models::{init_model, KgeModel, ModelKind};
use kge_core::training::{bce_loss, loss_gradient_dense, margin_ranking_loss, LossKind};
use kge_core::Triple;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn flatten(model: &KgeModel) -> Vec<f64> {
    let mut flat = model.entity_matrix().to_vec();
    flat.extend_from_slice(model.relation_matrix());
    if let Some(n) = model.normal_matrix() {
        flat.extend_from_slice(n);
    }
    flat
}

fn rebuild(template: &KgeModel, flat: &[f64]) -> KgeModel {
    let w = template.kind().row_width(template.dim());
    let ent_len = template.num_entities() * w;
    let rel_len = template.num_relations() * w;
    let entity = flat[..ent_len].to_vec();
    let rel = flat[ent_len..ent_len + rel_len].to_vec();
    let normals = if template.kind() == ModelKind::TransH {
        Some(flat[ent_len + rel_len..].to_vec())
    } else {
        None
    };
    // bypass validation: perturbed normals are deliberately off unit norm,
    // and the score functions do not require it
    KgeModel::from_parts_unchecked(
        template.kind(),
        template.dim(),
        template.num_entities(),
        template.num_relations(),
        entity,
        rel,
        normals,
    )
}

fn loss_at(model: &KgeModel, pos: Triple, negs: &[Triple], loss: LossKind, margin: f64) -> f64 {
    let pos_score = model.score_triple(pos.head, pos.relation, pos.tail).unwrap();
    let neg_scores: Vec<f64> = negs
        .iter()
        .map(|n| model.score_triple(n.head, n.relation, n.tail).unwrap())
        .collect();
    match loss {
        LossKind::MarginRanking => margin_ranking_loss(pos_score, &neg_scores, margin),
        LossKind::BinaryCrossEntropy => bce_loss(pos_score, &neg_scores),
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240817);
    let dim = 4;
    let (n_entities, n_relations) = (6, 5);
    let margin = 1.0;
    let mut checked = 0usize;

    for kind in ModelKind::ALL {
        for loss in [LossKind::MarginRanking, LossKind::BinaryCrossEntropy] {
            let mut probes = 0usize;
            while probes < 100 {
                let model = init_model(kind, dim, n_entities, n_relations, rng.gen()).unwrap();
                let pos = Triple::new(
                    rng.gen_range(0..n_entities),
                    rng.gen_range(0..n_relations),
                    rng.gen_range(0..n_entities),
                );
                let negs: Vec<Triple> = (0..2)
                    .map(|_| {
                        Triple::new(pos.head, rng.gen_range(0..n_relations), pos.tail)
                    })
                    .collect();
                let (value, grad) = loss_gradient_dense(&model, pos, &negs, loss, margin);
                assert!(value.is_finite() && value >= 0.0);

                let flat = flatten(&model);
                let idx = rng.gen_range(0..flat.len());
                // hinge kinks make one-sided curvature; skip probes whose
                // central difference straddles a kink
                let mut plus = flat.clone();
                plus[idx] += FD_STEP;
                let mut minus = flat.clone();
                minus[idx] -= FD_STEP;
                let f_plus = loss_at(&rebuild(&model, &plus), pos, &negs, loss, margin);
                let f_minus = loss_at(&rebuild(&model, &minus), pos, &negs, loss, margin);
                let numeric = (f_plus - f_minus) / (2.0 * FD_STEP);
                let analytic = grad[idx];

                if loss == LossKind::MarginRanking {
                    let active_now = |m: &KgeModel| {
                        let p = m.score_triple(pos.head, pos.relation, pos.tail).unwrap();
                        negs.iter()
                            .map(|n| {
                                let s =
                                    m.score_triple(n.head, n.relation, n.tail).unwrap();
                                margin - p + s > 0.0
                            })
                            .collect::<Vec<bool>>()
                    };
                    if active_now(&rebuild(&model, &plus)) != active_now(&rebuild(&model, &minus)) {
                        continue;
                    }
                }

                // below ~1e-6 the central difference is dominated by
                // floating-point cancellation; treat both-tiny as a match
                if analytic.abs() < 1e-6 && numeric.abs() < 1e-6 {
                    probes += 1;
                    checked += 1;
                    continue;
                }
                let denom = analytic.abs().max(numeric.abs());
                assert!(
                    (analytic - numeric).abs() / denom < REL_TOL,
                    "{kind} {loss:?} param {idx}: analytic {analytic} vs numeric {numeric}"
                );
                probes += 1;
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 800);
}

#[test]
fn satisfied_margin_pairs_have_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = init_model(ModelKind::DistMult, 4, 6, 5, 3).unwrap();
    for _ in 0..50 {
        let pos = Triple::new(rng.gen_range(0..6), rng.gen_range(0..5), rng.gen_range(0..6));
        let negs = vec![Triple::new(pos.head, rng.gen_range(0..5), pos.tail)];
        let pos_score = model.score_triple(pos.head, pos.relation, pos.tail).unwrap();
        let neg_score = model
            .score_triple(negs[0].head, negs[0].relation, negs[0].tail)
            .unwrap();
        // pick a margin small enough that the pair is satisfied
        let slack = pos_score - neg_score;
        if slack <= 1e-6 {
            continue;
        }
        let margin = slack / 2.0;
        let (value, grad) = loss_gradient_dense(
            &model,
            pos,
            &negs,
            LossKind::MarginRanking,
            margin,
        );
        assert_eq!(value, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}
