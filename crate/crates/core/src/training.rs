//! Training: negative relation sampling, margin-ranking and binary
//! cross-entropy losses with analytic gradients through each scoring
//! function, SGD/Adagrad updates, and hyperparameter grid search.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};
use crate::graph::{KnowledgeGraph, Split, Triple};
use crate::models::{
    init_model, l2_norm, normalize_row, project_to_hyperplane, KgeModel, ModelKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    MarginRanking,
    BinaryCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
}

/// One point of the training hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub dim: usize,
    pub negatives_per_positive: usize,
    /// Margin gamma, used by the margin-ranking loss only.
    pub margin: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    /// Loss/optimizer pairing for each model: margin ranking with SGD for
    /// TransE/TransH, margin ranking with Adagrad for DistMult, binary
    /// cross-entropy with Adagrad for ComplEx.
    pub fn default_for(kind: ModelKind) -> Self {
        let (loss, optimizer) = match kind {
            ModelKind::TransE | ModelKind::TransH => (LossKind::MarginRanking, OptimizerKind::Sgd),
            ModelKind::DistMult => (LossKind::MarginRanking, OptimizerKind::Adagrad),
            ModelKind::ComplEx => (LossKind::BinaryCrossEntropy, OptimizerKind::Adagrad),
        };
        TrainConfig {
            epochs: 200,
            batch_size: 100,
            dim: 50,
            negatives_per_positive: 1,
            margin: 1.0,
            optimizer,
            learning_rate: 0.01,
            loss,
            seed: 0,
        }
    }

    pub fn validate_for(&self, kind: ModelKind) -> Result<()> {
        let ok = match kind {
            ModelKind::TransE | ModelKind::TransH => {
                self.loss == LossKind::MarginRanking && self.optimizer == OptimizerKind::Sgd
            }
            ModelKind::DistMult => {
                self.loss == LossKind::MarginRanking && self.optimizer == OptimizerKind::Adagrad
            }
            ModelKind::ComplEx => {
                self.loss == LossKind::BinaryCrossEntropy
                    && self.optimizer == OptimizerKind::Adagrad
            }
        };
        if !ok {
            return Err(KgeError::Config(format!(
                "loss {:?} with optimizer {:?} is not valid for {kind}",
                self.loss, self.optimizer
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.dim == 0 {
            return Err(KgeError::Config(
                "epochs, batch size, and dim must be >= 1".into(),
            ));
        }
        if self.loss == LossKind::MarginRanking && self.margin <= 0.0 {
            return Err(KgeError::Config("margin must be positive".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(KgeError::Config("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub validation_accuracy: f64,
    pub seconds: f64,
}

/// Replace the relation with a uniformly random wrong relation, n times.
/// Collisions with known triples are accepted as-is.
pub fn sample_negative_relations(
    triple: Triple,
    n: usize,
    graph: &KnowledgeGraph,
    rng: &mut impl Rng,
) -> Result<Vec<Triple>> {
    let k = graph.num_relations();
    if k < 2 {
        return Err(KgeError::Data(
            "cannot corrupt the relation slot with |R| = 1".into(),
        ));
    }
    Ok((0..n)
        .map(|_| {
            // draw from the k-1 wrong relations directly
            let mut r = rng.gen_range(0..k - 1);
            if r >= triple.relation {
                r += 1;
            }
            Triple::new(triple.head, r, triple.tail)
        })
        .collect())
}

/// Sum over negatives of max(0, margin - pos + neg).
pub fn margin_ranking_loss(pos_score: f64, neg_scores: &[f64], margin: f64) -> f64 {
    neg_scores
        .iter()
        .map(|&neg| (margin - pos_score + neg).max(0.0))
        .sum()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// -log sigmoid(pos) - sum log(1 - sigmoid(neg)), in softplus form.
pub fn bce_loss(pos_score: f64, neg_scores: &[f64]) -> f64 {
    softplus(-pos_score) + neg_scores.iter().map(|&neg| softplus(neg)).sum::<f64>()
}

/// Score and its gradient w.r.t. the three (four for TransH) embedding rows.
pub(crate) struct ScoreGrad {
    pub score: f64,
    pub d_head: Vec<f64>,
    pub d_rel: Vec<f64>,
    pub d_tail: Vec<f64>,
    pub d_normal: Option<Vec<f64>>,
}

pub(crate) fn score_with_grad(model: &KgeModel, h: usize, r: usize, t: usize) -> ScoreGrad {
    let he = model.entity(h);
    let re = model.relation(r);
    let te = model.entity(t);
    let dim = model.dim();
    match model.kind() {
        ModelKind::TransE => {
            let u: Vec<f64> = he
                .iter()
                .zip(re)
                .zip(te)
                .map(|((a, b), c)| a + b - c)
                .collect();
            let norm = l2_norm(&u);
            if norm < 1e-12 {
                return ScoreGrad {
                    score: 0.0,
                    d_head: vec![0.0; dim],
                    d_rel: vec![0.0; dim],
                    d_tail: vec![0.0; dim],
                    d_normal: None,
                };
            }
            let g: Vec<f64> = u.iter().map(|x| -x / norm).collect();
            ScoreGrad {
                score: -norm,
                d_head: g.clone(),
                d_rel: g.clone(),
                d_tail: g.iter().map(|x| -x).collect(),
                d_normal: None,
            }
        }
        ModelKind::TransH => {
            let w = model.normal(r).unwrap();
            let hp = project_to_hyperplane(he, w);
            let tp = project_to_hyperplane(te, w);
            let u: Vec<f64> = hp
                .iter()
                .zip(re)
                .zip(&tp)
                .map(|((a, b), c)| a + b - c)
                .collect();
            let norm = l2_norm(&u);
            if norm < 1e-12 {
                return ScoreGrad {
                    score: 0.0,
                    d_head: vec![0.0; dim],
                    d_rel: vec![0.0; dim],
                    d_tail: vec![0.0; dim],
                    d_normal: Some(vec![0.0; dim]),
                };
            }
            let g: Vec<f64> = u.iter().map(|x| -x / norm).collect();
            let g_proj = project_to_hyperplane(&g, w);
            let gw: f64 = g.iter().zip(w).map(|(a, b)| a * b).sum();
            let th: Vec<f64> = te.iter().zip(he).map(|(a, b)| a - b).collect();
            let wth: f64 = w.iter().zip(&th).map(|(a, b)| a * b).sum();
            let d_normal = th
                .iter()
                .zip(&g)
                .map(|(thi, gi)| gw * thi + wth * gi)
                .collect();
            ScoreGrad {
                score: -norm,
                d_head: g_proj.clone(),
                d_rel: g,
                d_tail: g_proj.iter().map(|x| -x).collect(),
                d_normal: Some(d_normal),
            }
        }
        ModelKind::DistMult => ScoreGrad {
            score: crate::models::distmult_score(he, re, te),
            d_head: re.iter().zip(te).map(|(a, b)| a * b).collect(),
            d_rel: he.iter().zip(te).map(|(a, b)| a * b).collect(),
            d_tail: he.iter().zip(re).map(|(a, b)| a * b).collect(),
            d_normal: None,
        },
        ModelKind::ComplEx => {
            let (hre, him) = he.split_at(dim);
            let (rre, rim) = re.split_at(dim);
            let (tre, tim) = te.split_at(dim);
            let mut score = 0.0;
            let mut d_head = vec![0.0; 2 * dim];
            let mut d_rel = vec![0.0; 2 * dim];
            let mut d_tail = vec![0.0; 2 * dim];
            for i in 0..dim {
                let (a, b, c, d, e, f) = (hre[i], him[i], rre[i], rim[i], tre[i], tim[i]);
                score += e * (a * c - b * d) + f * (a * d + b * c);
                d_head[i] = c * e + d * f;
                d_head[dim + i] = c * f - d * e;
                d_rel[i] = a * e + b * f;
                d_rel[dim + i] = a * f - b * e;
                d_tail[i] = a * c - b * d;
                d_tail[dim + i] = a * d + b * c;
            }
            ScoreGrad {
                score,
                d_head,
                d_rel,
                d_tail,
                d_normal: None,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Slot {
    Entity,
    Relation,
    Normal,
}

struct GradAccum {
    grads: HashMap<(Slot, usize), Vec<f64>>,
}

impl GradAccum {
    fn new() -> Self {
        GradAccum {
            grads: HashMap::new(),
        }
    }

    fn add(&mut self, slot: Slot, row: usize, coeff: f64, grad: &[f64]) {
        if coeff == 0.0 {
            return;
        }
        let entry = self
            .grads
            .entry((slot, row))
            .or_insert_with(|| vec![0.0; grad.len()]);
        for (acc, g) in entry.iter_mut().zip(grad) {
            *acc += coeff * g;
        }
    }

    fn add_score_grad(&mut self, sg: &ScoreGrad, triple: Triple, coeff: f64) {
        self.add(Slot::Entity, triple.head, coeff, &sg.d_head);
        self.add(Slot::Relation, triple.relation, coeff, &sg.d_rel);
        self.add(Slot::Entity, triple.tail, coeff, &sg.d_tail);
        if let Some(dn) = &sg.d_normal {
            self.add(Slot::Normal, triple.relation, coeff, dn);
        }
    }
}

/// Loss of one (positive, negatives) sample and its gradient, accumulated
/// into `accum` with the chain-rule coefficients of the chosen loss.
fn sample_loss_grad(
    model: &KgeModel,
    pos: Triple,
    negatives: &[Triple],
    loss: LossKind,
    margin: f64,
    accum: &mut GradAccum,
) -> f64 {
    let pos_sg = score_with_grad(model, pos.head, pos.relation, pos.tail);
    let neg_sgs: Vec<ScoreGrad> = negatives
        .iter()
        .map(|n| score_with_grad(model, n.head, n.relation, n.tail))
        .collect();
    let neg_scores: Vec<f64> = neg_sgs.iter().map(|sg| sg.score).collect();
    match loss {
        LossKind::MarginRanking => {
            let value = margin_ranking_loss(pos_sg.score, &neg_scores, margin);
            let mut pos_coeff = 0.0;
            for (neg, sg) in negatives.iter().zip(&neg_sgs) {
                if margin - pos_sg.score + sg.score > 0.0 {
                    pos_coeff -= 1.0;
                    accum.add_score_grad(sg, *neg, 1.0);
                }
            }
            accum.add_score_grad(&pos_sg, pos, pos_coeff);
            value
        }
        LossKind::BinaryCrossEntropy => {
            let value = bce_loss(pos_sg.score, &neg_scores);
            accum.add_score_grad(&pos_sg, pos, sigmoid(pos_sg.score) - 1.0);
            for (neg, sg) in negatives.iter().zip(&neg_sgs) {
                accum.add_score_grad(sg, *neg, sigmoid(sg.score));
            }
            value
        }
    }
}

/// Loss of one sample and its dense gradient over all model parameters,
/// flattened as (entity matrix, relation matrix, normals). Intended for
/// gradient verification against finite differences.
pub fn loss_gradient_dense(
    model: &KgeModel,
    pos: Triple,
    negatives: &[Triple],
    loss: LossKind,
    margin: f64,
) -> (f64, Vec<f64>) {
    let mut accum = GradAccum::new();
    let value = sample_loss_grad(model, pos, negatives, loss, margin, &mut accum);
    let w = model.kind().row_width(model.dim());
    let ent_len = model.num_entities() * w;
    let rel_len = model.num_relations() * w;
    let norm_len = if model.kind() == ModelKind::TransH {
        model.num_relations() * model.dim()
    } else {
        0
    };
    let mut dense = vec![0.0; ent_len + rel_len + norm_len];
    for ((slot, row), grad) in &accum.grads {
        let offset = match slot {
            Slot::Entity => row * w,
            Slot::Relation => ent_len + row * w,
            Slot::Normal => ent_len + rel_len + row * model.dim(),
        };
        for (i, g) in grad.iter().enumerate() {
            dense[offset + i] += g;
        }
    }
    (value, dense)
}

struct AdagradState {
    entity: Vec<f64>,
    relation: Vec<f64>,
    normal: Vec<f64>,
}

const ADAGRAD_EPS: f64 = 1e-10;

/// Train a model of the given kind on the graph's train split.
///
/// Gradients are accumulated per batch (sum over negatives, mean over the
/// batch) and applied with the configured optimizer. For TransE/TransH,
/// entity rows touched by the batch are renormalized to unit L2 norm
/// afterward, as are TransH normals. Deterministic given the seed.
pub fn train(
    graph: &KnowledgeGraph,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<(KgeModel, TrainReport)> {
    config.validate_for(kind)?;
    if graph.train().is_empty() {
        return Err(KgeError::Data("empty train split".into()));
    }
    let start = Instant::now();

    let mut model = init_model(
        kind,
        config.dim,
        graph.num_entities(),
        graph.num_relations(),
        config.seed,
    )?;
    if kind.is_translational() {
        for i in 0..model.num_entities() {
            normalize_row(model.entity_mut(i));
        }
    }

    // separate stream for shuffling and negative sampling
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut adagrad = AdagradState {
        entity: vec![0.0; model.num_entities() * kind.row_width(config.dim)],
        relation: vec![0.0; model.num_relations() * kind.row_width(config.dim)],
        normal: vec![0.0; if kind == ModelKind::TransH {
            model.num_relations() * config.dim
        } else {
            0
        }],
    };

    let mut order: Vec<usize> = (0..graph.train().len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut accum = GradAccum::new();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let pos = graph.train()[idx];
                let negatives =
                    sample_negative_relations(pos, config.negatives_per_positive, graph, &mut rng)?;
                batch_loss +=
                    sample_loss_grad(&model, pos, &negatives, config.loss, config.margin, &mut accum);
            }
            if !batch_loss.is_finite() {
                return Err(KgeError::Numerical(format!(
                    "non-finite batch loss at epoch {epoch}"
                )));
            }
            loss_sum += batch_loss;
            apply_updates(&mut model, &accum, config, &mut adagrad, batch.len());
            if kind.is_translational() {
                for &(slot, row) in accum.grads.keys() {
                    match slot {
                        Slot::Entity => normalize_row(model.entity_mut(row)),
                        Slot::Normal => normalize_row(model.normal_mut(row)),
                        Slot::Relation => {}
                    }
                }
            }
        }
        epoch_losses.push(loss_sum / graph.train().len() as f64);
    }

    model.validate()?;
    let validation_accuracy = raw_argmax_accuracy(&model, graph, Split::Valid)?;
    let report = TrainReport {
        epoch_losses,
        validation_accuracy,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn apply_updates(
    model: &mut KgeModel,
    accum: &GradAccum,
    config: &TrainConfig,
    adagrad: &mut AdagradState,
    batch_len: usize,
) {
    let lr = config.learning_rate;
    let scale = 1.0 / batch_len as f64;
    for (&(slot, row), grad) in &accum.grads {
        let width = grad.len();
        let (params, state) = match slot {
            Slot::Entity => (model.entity_mut(row), &mut adagrad.entity),
            Slot::Relation => (model.relation_mut(row), &mut adagrad.relation),
            Slot::Normal => (model.normal_mut(row), &mut adagrad.normal),
        };
        match config.optimizer {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g * scale;
                }
            }
            OptimizerKind::Adagrad => {
                let acc = &mut state[row * width..(row + 1) * width];
                for ((p, g), a) in params.iter_mut().zip(grad).zip(acc) {
                    let g = g * scale;
                    *a += g * g;
                    *p -= lr * g / (a.sqrt() + ADAGRAD_EPS);
                }
            }
        }
    }
}

/// Top-1 relation-prediction accuracy of raw (uncalibrated) scores.
/// Argmax ties break toward the lowest relation index.
pub fn raw_argmax_accuracy(model: &KgeModel, graph: &KnowledgeGraph, split: Split) -> Result<f64> {
    let triples = graph.split(split);
    if triples.is_empty() {
        return Err(KgeError::Data("empty evaluation split".into()));
    }
    let mut correct = 0usize;
    for t in triples {
        let sv = model.score_all_relations(t.head, t.tail)?;
        if crate::calibration::argmax(&sv.values) == t.relation {
            correct += 1;
        }
    }
    Ok(correct as f64 / triples.len() as f64)
}

/// Train every configuration and return the one with the best raw validation
/// accuracy, ties broken by grid order.
pub fn grid_search(
    graph: &KnowledgeGraph,
    kind: ModelKind,
    grid: &[TrainConfig],
) -> Result<(TrainConfig, KgeModel, TrainReport)> {
    if grid.is_empty() {
        return Err(KgeError::Config("empty hyperparameter grid".into()));
    }
    let mut best: Option<(TrainConfig, KgeModel, TrainReport)> = None;
    for config in grid {
        let (model, report) = train(graph, kind, config).map_err(|e| {
            KgeError::Config(format!("grid point {config:?} failed: {e}"))
        })?;
        let better = match &best {
            None => true,
            Some((_, _, best_report)) => {
                report.validation_accuracy > best_report.validation_accuracy
            }
        };
        if better {
            best = Some((*config, model, report));
        }
    }
    Ok(best.unwrap())
}

/// The Appendix-A-style hyperparameter grid for a model kind.
pub fn full_grid(kind: ModelKind, seed: u64) -> Vec<TrainConfig> {
    let base = TrainConfig::default_for(kind);
    let margins: &[f64] = if base.loss == LossKind::MarginRanking {
        &[1.0, 5.0, 10.0]
    } else {
        &[1.0]
    };
    let mut grid = Vec::new();
    for &epochs in &[200usize, 300, 500] {
        for &batch_size in &[100usize, 200, 500] {
            for &dim in &[50usize, 100] {
                for &negatives_per_positive in &[1usize, 5] {
                    for &margin in margins {
                        grid.push(TrainConfig {
                            epochs,
                            batch_size,
                            dim,
                            negatives_per_positive,
                            margin,
                            seed,
                            ..base
                        });
                    }
                }
            }
        }
    }
    grid
}
