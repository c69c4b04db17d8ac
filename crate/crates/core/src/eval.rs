//! Closed-world accuracy / ECE / reliability evaluation, filtered relation
//! ranking, and open-world candidate generation plus label-file scoring.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, Calibrator, Prediction};
use crate::error::{KgeError, Result};
use crate::graph::{KnowledgeGraph, Split, Triple};
use crate::models::{KgeModel, ModelKind};

pub const DEFAULT_BIN_COUNT: usize = 10;
pub const DEFAULT_OWA_THRESHOLD: f64 = 0.80;

/// Per-bin statistics of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

/// Reliability diagram data plus expected calibration error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub bin_count: usize,
    pub bins: Vec<BinStat>,
    pub ece: f64,
    pub n: usize,
    /// Set when the report covers fewer predictions than bins
    /// (used by per-relation reporting).
    #[serde(default)]
    pub small_sample: bool,
}

/// Bin for a confidence value: M equal intervals of [0, 1], with an exact
/// multiple of 1/M assigned to the lower bin and p = 1 to the top bin.
pub(crate) fn bin_index(confidence: f64, bin_count: usize) -> usize {
    if confidence <= 0.0 {
        return 0;
    }
    let idx = (confidence * bin_count as f64).ceil() as usize;
    idx.saturating_sub(1).min(bin_count - 1)
}

/// Build a reliability report from (confidence, correct) pairs.
pub fn reliability_report(points: &[(f64, bool)], bin_count: usize) -> Result<ReliabilityReport> {
    if bin_count == 0 {
        return Err(KgeError::Config("bin count must be >= 1".into()));
    }
    let n = points.len();
    let mut counts = vec![0usize; bin_count];
    let mut conf_sums = vec![0.0; bin_count];
    let mut correct_sums = vec![0.0; bin_count];
    for &(conf, correct) in points {
        let b = bin_index(conf, bin_count);
        counts[b] += 1;
        conf_sums[b] += conf;
        correct_sums[b] += correct as u8 as f64;
    }
    let mut bins = Vec::with_capacity(bin_count);
    let mut ece = 0.0;
    for b in 0..bin_count {
        if counts[b] == 0 {
            bins.push(BinStat {
                count: 0,
                mean_confidence: 0.0,
                accuracy: 0.0,
            });
            continue;
        }
        let mean_confidence = conf_sums[b] / counts[b] as f64;
        let accuracy = correct_sums[b] / counts[b] as f64;
        ece += counts[b] as f64 / n as f64 * (accuracy - mean_confidence).abs();
        bins.push(BinStat {
            count: counts[b],
            mean_confidence,
            accuracy,
        });
    }
    Ok(ReliabilityReport {
        bin_count,
        bins,
        ece,
        n,
        small_sample: n < bin_count,
    })
}

/// Evaluate relation prediction on a split under the closed-world
/// assumption: top-1 accuracy plus a reliability report over calibrated
/// confidences, and the per-query predictions themselves.
pub fn evaluate_cwa(
    model: &KgeModel,
    calibrator: &Calibrator,
    graph: &KnowledgeGraph,
    split: Split,
    bin_count: usize,
) -> Result<(f64, ReliabilityReport, Vec<Prediction>)> {
    let triples = graph.split(split);
    if triples.is_empty() {
        return Err(KgeError::Data("empty evaluation split".into()));
    }
    let mut predictions = Vec::with_capacity(triples.len());
    let mut points = Vec::with_capacity(triples.len());
    let mut correct = 0usize;
    for t in triples {
        let sv = model.score_all_relations(t.head, t.tail)?;
        let pred = calibrate(calibrator, &sv)?;
        let is_correct = pred.predicted == t.relation;
        correct += is_correct as usize;
        points.push((pred.confidence, is_correct));
        predictions.push(pred);
    }
    let accuracy = correct as f64 / triples.len() as f64;
    let report = reliability_report(&points, bin_count)?;
    Ok((accuracy, report, predictions))
}

/// Filtered rank of the gold relation for a (h, ?, t) query: competitors
/// that are themselves known-true triples are removed, and ties rank the
/// gold pessimistically (after equal-scored competitors).
pub fn filtered_rank(
    model: &KgeModel,
    graph: &KnowledgeGraph,
    head: usize,
    tail: usize,
    gold: usize,
) -> Result<usize> {
    let sv = model.score_all_relations(head, tail)?;
    let gold_score = *sv
        .values
        .get(gold)
        .ok_or_else(|| KgeError::IndexOutOfRange(format!("gold relation {gold}")))?;
    let mut rank = 1;
    for (r, &score) in sv.values.iter().enumerate() {
        if r == gold {
            continue;
        }
        if graph.is_known(Triple::new(head, r, tail))? {
            continue;
        }
        if score >= gold_score {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Group predictions by gold relation and report each group's reliability.
/// Groups smaller than the bin count carry the small-sample flag.
pub fn per_relation_report(
    predictions: &[Prediction],
    golds: &[usize],
    bin_count: usize,
) -> Result<BTreeMap<usize, ReliabilityReport>> {
    if predictions.is_empty() || predictions.len() != golds.len() {
        return Err(KgeError::Data(
            "need a nonempty prediction list with one gold per prediction".into(),
        ));
    }
    let mut groups: BTreeMap<usize, Vec<(f64, bool)>> = BTreeMap::new();
    for (pred, &gold) in predictions.iter().zip(golds) {
        groups
            .entry(gold)
            .or_default()
            .push((pred.confidence, pred.predicted == gold));
    }
    groups
        .into_iter()
        .map(|(rel, points)| Ok((rel, reliability_report(&points, bin_count)?)))
        .collect()
}

/// A high-confidence prediction of a triple absent from the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwaCandidate {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub confidence: f64,
    pub model_kind: ModelKind,
    pub calibrator: String,
}

/// Take the top-1 calibrated prediction per query, keep the ones at or
/// above the confidence threshold whose triple is unknown to the graph,
/// and sort by descending confidence.
pub fn generate_owa_candidates(
    model: &KgeModel,
    calibrator: &Calibrator,
    graph: &KnowledgeGraph,
    queries: &[(usize, usize)],
    threshold: f64,
) -> Result<Vec<OwaCandidate>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(KgeError::Config(format!(
            "OWA threshold must be in (0, 1], got {threshold}"
        )));
    }
    let mut candidates = Vec::new();
    for &(head, tail) in queries {
        let sv = model.score_all_relations(head, tail)?;
        let pred = calibrate(calibrator, &sv)?;
        if pred.confidence < threshold {
            continue;
        }
        let triple = Triple::new(head, pred.predicted, tail);
        if graph.is_known(triple)? {
            continue;
        }
        candidates.push(OwaCandidate {
            head,
            relation: pred.predicted,
            tail,
            confidence: pred.confidence,
            model_kind: model.kind(),
            calibrator: calibrator.method_name().to_string(),
        });
    }
    candidates.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    Ok(candidates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    True,
    False,
    Unsure,
}

impl std::str::FromStr for Verdict {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(Verdict::True),
            "false" => Ok(Verdict::False),
            "unsure" => Ok(Verdict::Unsure),
            other => Err(KgeError::Data(format!("unknown verdict '{other}'"))),
        }
    }
}

/// External ground-truth labels for OWA candidates, keyed by triple labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelFile {
    pub records: Vec<LabelRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub verdict: Verdict,
}

impl LabelFile {
    /// Tab-separated head/relation/tail/verdict, one record per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(KgeError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected 4 tab-separated fields, got {}", fields.len()),
                });
            }
            records.push(LabelRecord {
                head: fields[0].to_string(),
                relation: fields[1].to_string(),
                tail: fields[2].to_string(),
                verdict: fields[3].parse()?,
            });
        }
        if records.is_empty() {
            return Err(KgeError::Data(format!("no labels in {}", path.display())));
        }
        Ok(LabelFile { records })
    }

    /// Resolve labels against the graph's vocabularies.
    fn index(&self, graph: &KnowledgeGraph) -> Result<HashMap<Triple, Verdict>> {
        let mut map = HashMap::with_capacity(self.records.len());
        for rec in &self.records {
            let head = graph
                .entity_id(&rec.head)
                .ok_or_else(|| KgeError::Data(format!("unknown entity '{}'", rec.head)))?;
            let relation = graph
                .relation_id(&rec.relation)
                .ok_or_else(|| KgeError::Data(format!("unknown relation '{}'", rec.relation)))?;
            let tail = graph
                .entity_id(&rec.tail)
                .ok_or_else(|| KgeError::Data(format!("unknown entity '{}'", rec.tail)))?;
            map.insert(Triple::new(head, relation, tail), rec.verdict);
        }
        Ok(map)
    }
}

/// Result of scoring OWA candidates against external labels.
///
/// `accuracy` and `report` are absent when every candidate was excluded
/// as unsure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OwaEvaluation {
    pub accuracy: Option<f64>,
    pub report: Option<ReliabilityReport>,
    pub evaluated: usize,
    pub excluded_unsure: usize,
}

/// Score candidates against a label file: true counts correct, false
/// incorrect, unsure is excluded from both numerator and denominator.
pub fn evaluate_owa(
    candidates: &[OwaCandidate],
    labels: &LabelFile,
    graph: &KnowledgeGraph,
    bin_count: usize,
) -> Result<OwaEvaluation> {
    let index = labels.index(graph)?;
    let mut missing = Vec::new();
    let mut points = Vec::new();
    let mut excluded_unsure = 0usize;
    for cand in candidates {
        let triple = Triple::new(cand.head, cand.relation, cand.tail);
        match index.get(&triple) {
            None => missing.push(format!(
                "({}, {}, {})",
                graph.entity_label(cand.head).unwrap_or("?"),
                graph.relation_label(cand.relation).unwrap_or("?"),
                graph.entity_label(cand.tail).unwrap_or("?"),
            )),
            Some(Verdict::Unsure) => excluded_unsure += 1,
            Some(Verdict::True) => points.push((cand.confidence, true)),
            Some(Verdict::False) => points.push((cand.confidence, false)),
        }
    }
    if !missing.is_empty() {
        return Err(KgeError::Data(format!(
            "candidates missing from label file: {}",
            missing.join(", ")
        )));
    }
    if points.is_empty() {
        return Ok(OwaEvaluation {
            accuracy: None,
            report: None,
            evaluated: 0,
            excluded_unsure,
        });
    }
    let correct = points.iter().filter(|(_, c)| *c).count();
    let accuracy = correct as f64 / points.len() as f64;
    let report = reliability_report(&points, bin_count)?;
    Ok(OwaEvaluation {
        accuracy: Some(accuracy),
        report: Some(report),
        evaluated: points.len(),
        excluded_unsure,
    })
}

/// One CSV row per bin: lower, upper, count, mean confidence, accuracy.
pub fn write_reliability_csv(report: &ReliabilityReport, mut out: impl Write) -> Result<()> {
    let io_err = |e: std::io::Error| KgeError::Data(format!("csv write failed: {e}"));
    writeln!(out, "bin_lower,bin_upper,count,mean_confidence,accuracy").map_err(io_err)?;
    let m = report.bin_count as f64;
    for (i, bin) in report.bins.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            i as f64 / m,
            (i + 1) as f64 / m,
            bin.count,
            bin.mean_confidence,
            bin.accuracy
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Reliability diagram as a standalone SVG: per-bin accuracy bars with the
/// perfect-calibration diagonal as reference.
pub fn write_reliability_svg(report: &ReliabilityReport, mut out: impl Write) -> Result<()> {
    let io_err = |e: std::io::Error| KgeError::Data(format!("svg write failed: {e}"));
    let (w, h, margin) = (420.0, 420.0, 40.0);
    let plot = w - 2.0 * margin;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .map_err(io_err)?;
    writeln!(
        out,
        r#"<rect x="{margin}" y="{margin}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
    )
    .map_err(io_err)?;
    let m = report.bin_count as f64;
    for (i, bin) in report.bins.iter().enumerate() {
        if bin.count == 0 {
            continue;
        }
        let x = margin + i as f64 / m * plot;
        let bar_w = plot / m;
        let bar_h = bin.accuracy * plot;
        let y = margin + plot - bar_h;
        writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{bar_h:.2}" fill="steelblue" stroke="black" stroke-width="0.5"/>"#
        )
        .map_err(io_err)?;
    }
    // perfect calibration diagonal
    writeln!(
        out,
        r#"<line x1="{margin}" y1="{}" x2="{}" y2="{margin}" stroke="gray" stroke-dasharray="4 3"/>"#,
        margin + plot,
        margin + plot
    )
    .map_err(io_err)?;
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">confidence</text>"#,
        margin + plot / 2.0,
        h - 8.0
    )
    .map_err(io_err)?;
    writeln!(
        out,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">accuracy</text>"#,
        margin + plot / 2.0,
        margin + plot / 2.0
    )
    .map_err(io_err)?;
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">ECE = {:.4} (n = {})</text>"#,
        margin + plot / 2.0,
        margin - 10.0,
        report.ece,
        report.n
    )
    .map_err(io_err)?;
    writeln!(out, "</svg>").map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::StepFunction;
    use crate::graph::{build_graph, LabeledTriple, SplitSpec};
    use crate::models::KgeModel;

    fn labeled(items: &[(&str, &str, &str)]) -> Vec<LabeledTriple> {
        items
            .iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    }

    #[test]
    fn bin_boundaries_go_to_lower_bin() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.05, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.1000001, 10), 1);
        assert_eq!(bin_index(0.2, 10), 1);
        assert_eq!(bin_index(1.0, 10), 9);
    }

    #[test]
    fn perfect_predictions_have_zero_ece() {
        let points = vec![(1.0, true); 20];
        let r = reliability_report(&points, 10).unwrap();
        assert_eq!(r.ece, 0.0);
        assert_eq!(r.n, 20);
        assert_eq!(r.bins[9].count, 20);
        assert_eq!(r.bins[9].accuracy, 1.0);
    }

    #[test]
    fn single_bin_gap_example() {
        // two predictions at confidence 0.9, one correct
        let points = vec![(0.9, true), (0.9, false)];
        let r = reliability_report(&points, 10).unwrap();
        assert!((r.ece - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_bins_contribute_nothing() {
        let points = vec![(0.95, true)];
        let r = reliability_report(&points, 10).unwrap();
        assert_eq!(r.bins.iter().filter(|b| b.count > 0).count(), 1);
        assert!((r.ece - 0.05).abs() < 1e-12);
    }

    /// DistMult with d = 1 and unit entity embeddings: relation scores are
    /// the relation scalars, which makes ranks easy to stage.
    fn scalar_model(rel_scores: &[f64], n_entities: usize) -> KgeModel {
        KgeModel::from_parts(
            ModelKind::DistMult,
            1,
            n_entities,
            rel_scores.len(),
            vec![1.0; n_entities],
            rel_scores.to_vec(),
            None,
        )
        .unwrap()
    }

    fn rank_fixture() -> (KgeModel, KnowledgeGraph) {
        // relations p0..p3 score 5, 4, 3, 1 on every query; (a, p0, b) is
        // known, (a, p2, b) is the gold test-style triple
        let mut triples = labeled(&[("a", "p0", "b"), ("a", "p2", "b"), ("a", "p1", "c"), ("a", "p3", "c")]);
        for i in 0..10 {
            triples.push((format!("x{i}"), "p0".into(), format!("y{i}")));
        }
        let graph = build_graph(
            &triples,
            &SplitSpec {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let mut rel_scores = vec![0.0; graph.num_relations()];
        rel_scores[graph.relation_id("p0").unwrap()] = 5.0;
        rel_scores[graph.relation_id("p1").unwrap()] = 4.0;
        rel_scores[graph.relation_id("p2").unwrap()] = 3.0;
        rel_scores[graph.relation_id("p3").unwrap()] = 1.0;
        let model = scalar_model(&rel_scores, graph.num_entities());
        (model, graph)
    }

    #[test]
    fn filtered_rank_removes_known_competitor() {
        let (model, graph) = rank_fixture();
        let a = graph.entity_id("a").unwrap();
        let b = graph.entity_id("b").unwrap();
        let gold = graph.relation_id("p2").unwrap();
        // unfiltered, p0 (5) and p1 (4) outrank the gold (3); p0 is known
        // for (a, b) and gets filtered, improving the rank from 3 to 2
        let rank = filtered_rank(&model, &graph, a, b, gold).unwrap();
        assert_eq!(rank, 2);
    }

    #[test]
    fn gold_scored_highest_ranks_first() {
        let (model, graph) = rank_fixture();
        let a = graph.entity_id("a").unwrap();
        let b = graph.entity_id("b").unwrap();
        let gold = graph.relation_id("p0").unwrap();
        assert_eq!(filtered_rank(&model, &graph, a, b, gold).unwrap(), 1);
    }

    #[test]
    fn single_relation_always_rank_one() {
        let triples: Vec<LabeledTriple> = (0..12)
            .map(|i| (format!("e{i}"), "only".to_string(), format!("e{}", i + 1)))
            .collect();
        let graph = build_graph(&triples, &SplitSpec::default()).unwrap();
        let model = scalar_model(&[2.5], graph.num_entities());
        for t in graph.test() {
            assert_eq!(
                filtered_rank(&model, &graph, t.head, t.tail, t.relation).unwrap(),
                1
            );
        }
    }

    #[test]
    fn pessimistic_tie_rank() {
        // all relations score equally; gold ranks after every unfiltered tie
        let triples = labeled(&[
            ("a", "p0", "b"),
            ("c", "p1", "d"),
            ("e", "p2", "f"),
            ("a", "p0", "c"),
            ("a", "p0", "d"),
            ("b", "p1", "c"),
            ("b", "p2", "d"),
            ("c", "p0", "e"),
            ("d", "p1", "f"),
            ("e", "p0", "a"),
        ]);
        let graph = build_graph(
            &triples,
            &SplitSpec {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let model = scalar_model(&vec![1.0; graph.num_relations()], graph.num_entities());
        let t = graph.test()[0];
        let known_competitors = (0..graph.num_relations())
            .filter(|&r| {
                r != t.relation && graph.is_known(Triple::new(t.head, r, t.tail)).unwrap()
            })
            .count();
        let expected = graph.num_relations() - known_competitors;
        assert_eq!(
            filtered_rank(&model, &graph, t.head, t.tail, t.relation).unwrap(),
            expected
        );
    }

    fn pred(conf: f64, predicted: usize) -> Prediction {
        Prediction {
            query: (0, 0),
            probs: vec![],
            predicted,
            confidence: conf,
        }
    }

    #[test]
    fn per_relation_single_group_matches_global() {
        let preds = vec![pred(0.9, 0), pred(0.8, 0), pred(0.7, 1)];
        let golds = vec![0, 0, 0];
        let map = per_relation_report(&preds, &golds, 10).unwrap();
        assert_eq!(map.len(), 1);
        let global = reliability_report(
            &preds
                .iter()
                .map(|p| (p.confidence, p.predicted == 0))
                .collect::<Vec<_>>(),
            10,
        )
        .unwrap();
        assert_eq!(map[&0].ece, global.ece);
        assert!(map[&0].small_sample);
    }

    #[test]
    fn per_relation_splits_calibrated_from_miscalibrated() {
        // relation 0: perfectly calibrated; relation 1: confident and wrong
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for _ in 0..10 {
            preds.push(pred(1.0, 0));
            golds.push(0);
        }
        for _ in 0..10 {
            preds.push(pred(1.0, 0));
            golds.push(1);
        }
        let map = per_relation_report(&preds, &golds, 10).unwrap();
        assert_eq!(map[&0].ece, 0.0);
        assert_eq!(map[&1].ece, 1.0);
        let all_points: Vec<(f64, bool)> = preds
            .iter()
            .zip(&golds)
            .map(|(p, &g)| (p.confidence, p.predicted == g))
            .collect();
        let global = reliability_report(&all_points, 10).unwrap();
        assert!(global.ece > 0.0 && global.ece < 1.0);
        // an unseen relation is simply absent
        assert!(!map.contains_key(&2));
    }

    fn owa_fixture() -> (KgeModel, KnowledgeGraph) {
        rank_fixture()
    }

    #[test]
    fn uniform_confidence_yields_no_candidates() {
        let (model, graph) = owa_fixture();
        let k = graph.num_relations();
        let cal = Calibrator::IsotonicOva {
            classes: vec![
                StepFunction {
                    breakpoints: vec![0.0],
                    values: vec![0.0],
                };
                k
            ],
        };
        let queries: Vec<(usize, usize)> = graph.test().iter().map(|t| (t.head, t.tail)).collect();
        let cands = generate_owa_candidates(&model, &cal, &graph, &queries, 0.8).unwrap();
        assert!(cands.is_empty());
    }

    #[test]
    fn known_top_prediction_excluded() {
        let (model, graph) = owa_fixture();
        // matrix scaling with a huge bias on p0 makes p0 the confident top-1
        let k = graph.num_relations();
        let p0 = graph.relation_id("p0").unwrap();
        let mut b = vec![0.0; k];
        b[p0] = 50.0;
        let mut eye = vec![vec![0.0; k]; k];
        for (i, row) in eye.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let cal = Calibrator::MatrixScaling { a: eye, b };
        let a = graph.entity_id("a").unwrap();
        let bb = graph.entity_id("b").unwrap();
        // (a, p0, b) is known: excluded even at near-certain confidence
        let cands = generate_owa_candidates(&model, &cal, &graph, &[(a, bb)], 0.8).unwrap();
        assert!(cands.is_empty());
        // a query pair with no known p0 triple survives
        let c = graph.entity_id("c").unwrap();
        let cands = generate_owa_candidates(&model, &cal, &graph, &[(bb, c)], 0.8).unwrap();
        if !graph.is_known(Triple::new(bb, p0, c)).unwrap() {
            assert_eq!(cands.len(), 1);
            assert_eq!(cands[0].relation, p0);
            assert!(cands[0].confidence >= 0.999);
        }
    }

    #[test]
    fn threshold_filters_low_confidence() {
        let (model, graph) = owa_fixture();
        let k = graph.num_relations();
        let p2 = graph.relation_id("p2").unwrap();
        // (a, p2, c) is not a known triple, so only the threshold decides
        let mut b = vec![0.0; k];
        b[p2] = 40.0;
        let mut eye = vec![vec![0.0; k]; k];
        for (i, row) in eye.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let confident = Calibrator::MatrixScaling {
            a: eye.clone(),
            b,
        };
        let lukewarm = Calibrator::IdentitySoftmax;
        let a = graph.entity_id("a").unwrap();
        let c = graph.entity_id("c").unwrap();
        let high = generate_owa_candidates(&model, &confident, &graph, &[(a, c)], 0.8).unwrap();
        let low = generate_owa_candidates(&model, &lukewarm, &graph, &[(a, c)], 0.8).unwrap();
        assert_eq!(high.len(), 1);
        assert!(low.is_empty());
    }

    fn write_labels(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    fn candidate(graph: &KnowledgeGraph, h: &str, r: &str, t: &str, conf: f64) -> OwaCandidate {
        OwaCandidate {
            head: graph.entity_id(h).unwrap(),
            relation: graph.relation_id(r).unwrap(),
            tail: graph.entity_id(t).unwrap(),
            confidence: conf,
            model_kind: ModelKind::DistMult,
            calibrator: "softmax".into(),
        }
    }

    #[test]
    fn owa_all_true_at_point_eight() {
        let (_, graph) = owa_fixture();
        let cands = vec![
            candidate(&graph, "a", "p1", "b", 0.8),
            candidate(&graph, "c", "p1", "b", 0.8),
        ];
        let f = write_labels(&["a\tp1\tb\ttrue", "c\tp1\tb\ttrue"]);
        let labels = LabelFile::load(f.path()).unwrap();
        let eval = evaluate_owa(&cands, &labels, &graph, 10).unwrap();
        assert_eq!(eval.accuracy, Some(1.0));
        let report = eval.report.unwrap();
        assert!((report.ece - 0.2).abs() < 1e-12);
    }

    #[test]
    fn owa_all_unsure_is_flagged_undefined() {
        let (_, graph) = owa_fixture();
        let cands = vec![candidate(&graph, "a", "p1", "b", 0.9)];
        let f = write_labels(&["a\tp1\tb\tunsure"]);
        let labels = LabelFile::load(f.path()).unwrap();
        let eval = evaluate_owa(&cands, &labels, &graph, 10).unwrap();
        assert_eq!(eval.accuracy, None);
        assert!(eval.report.is_none());
        assert_eq!(eval.evaluated, 0);
        assert_eq!(eval.excluded_unsure, 1);
    }

    #[test]
    fn owa_missing_candidate_is_an_error() {
        let (_, graph) = owa_fixture();
        let cands = vec![candidate(&graph, "a", "p1", "b", 0.9)];
        let f = write_labels(&["a\tp1\tc\ttrue"]);
        let labels = LabelFile::load(f.path()).unwrap();
        match evaluate_owa(&cands, &labels, &graph, 10) {
            Err(KgeError::Data(msg)) => assert!(msg.contains("(a, p1, b)")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn owa_mixed_fixture_hand_computed() {
        let (_, graph) = owa_fixture();
        // 10 candidates: 6 true, 3 false, 1 unsure, split over two bins
        let cands = vec![
            candidate(&graph, "a", "p1", "b", 0.95),
            candidate(&graph, "a", "p1", "x0", 0.95),
            candidate(&graph, "b", "p1", "c", 0.95),
            candidate(&graph, "b", "p1", "x0", 0.95),
            candidate(&graph, "c", "p1", "x0", 0.85),
            candidate(&graph, "c", "p1", "a", 0.85),
            candidate(&graph, "x0", "p1", "a", 0.85),
            candidate(&graph, "x0", "p1", "b", 0.85),
            candidate(&graph, "x1", "p1", "a", 0.85),
            candidate(&graph, "x1", "p1", "b", 0.85),
        ];
        let f = write_labels(&[
            "a\tp1\tb\ttrue",
            "a\tp1\tx0\ttrue",
            "b\tp1\tc\tfalse",
            "b\tp1\tx0\ttrue",
            "c\tp1\tx0\ttrue",
            "c\tp1\ta\tfalse",
            "x0\tp1\ta\ttrue",
            "x0\tp1\tb\tfalse",
            "x1\tp1\ta\ttrue",
            "x1\tp1\tb\tunsure",
        ]);
        let labels = LabelFile::load(f.path()).unwrap();
        let eval = evaluate_owa(&cands, &labels, &graph, 10).unwrap();
        // 9 evaluated: 6 true of 9
        assert_eq!(eval.evaluated, 9);
        assert_eq!(eval.excluded_unsure, 1);
        assert!((eval.accuracy.unwrap() - 6.0 / 9.0).abs() < 1e-15);
        // bin 9 (0.9, 1.0]: 4 preds at 0.95, 3 correct -> |3/4 - 0.95| = 0.2
        // bin 8 (0.8, 0.9]: 5 preds at 0.85, 3 correct -> |3/5 - 0.85| = 0.25
        let expected_ece = 4.0 / 9.0 * 0.2 + 5.0 / 9.0 * 0.25;
        let report = eval.report.unwrap();
        assert!((report.ece - expected_ece).abs() < 1e-12);
    }

    #[test]
    fn csv_and_svg_writers_produce_output() {
        let points = vec![(0.95, true), (0.45, false), (0.45, true)];
        let report = reliability_report(&points, 10).unwrap();
        let mut csv = Vec::new();
        write_reliability_csv(&report, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 11);
        let mut svg = Vec::new();
        write_reliability_svg(&report, &mut svg).unwrap();
        let text = String::from_utf8(svg).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("ECE"));
    }
}
