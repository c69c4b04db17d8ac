//! Knowledge graph embedding toolkit: train TransE / TransH / DistMult /
//! ComplEx relation-prediction models, calibrate their confidence scores
//! post hoc (Platt, isotonic, vector, and matrix scaling on top of the
//! softmax baseline), and evaluate accuracy and expected calibration error
//! under closed-world and open-world protocols.

pub mod calibration;
pub mod error;
pub mod eval;
pub mod graph;
pub mod models;
pub mod training;

pub use calibration::{
    calibrate, fit_affine_scaling, fit_isotonic_ova, fit_platt_ova, softmax_confidence,
    CalibrationSet, Calibrator, Prediction,
};
pub use error::{KgeError, Result};
pub use eval::{
    evaluate_cwa, evaluate_owa, filtered_rank, generate_owa_candidates, per_relation_report,
    reliability_report, LabelFile, OwaCandidate, OwaEvaluation, ReliabilityReport, Verdict,
};
pub use graph::{
    build_graph, load_triples, remove_inverse_relations, KnowledgeGraph, LabeledTriple, Split,
    SplitSpec, Triple,
};
pub use models::{init_model, KgeModel, ModelKind, ScoreVector};
pub use training::{
    bce_loss, grid_search, margin_ranking_loss, sample_negative_relations, train, LossKind,
    OptimizerKind, TrainConfig, TrainReport,
};
