//! Pipeline plumbing behind the `kge` binary: declarative run configs,
//! seed derivation, and the orchestrated ingest / train / calibrate /
//! evaluate sequence writing into a timestamped artifact directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kge_core::calibration::{
    fit_affine_scaling, fit_isotonic_ova, fit_platt_ova, CalibrationSet, Calibrator,
};
use kge_core::eval::{
    evaluate_cwa, evaluate_owa, generate_owa_candidates, write_reliability_csv,
    write_reliability_svg, LabelFile, OwaCandidate, OwaEvaluation, ReliabilityReport,
};
use kge_core::graph::{
    build_graph, load_triples, remove_inverse_relations, KnowledgeGraph, Split, SplitSpec,
};
use kge_core::models::{KgeModel, ModelKind};
use kge_core::training::{full_grid, grid_search, train, TrainConfig, TrainReport};
use kge_core::{KgeError, Result};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code convention: 1 usage/config, 2 data, 3 numerical failure.
pub fn exit_code_for(err: &KgeError) -> i32 {
    match err {
        KgeError::Config(_) => EXIT_USAGE,
        KgeError::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

pub const CALIBRATOR_METHODS: [&str; 5] = ["softmax", "platt", "isotonic", "vector", "matrix"];

/// Declarative description of a full pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default = "default_calibrators")]
    pub calibrators: Vec<String>,
    #[serde(default)]
    pub evaluation: EvalConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_calibrators() -> Vec<String> {
    CALIBRATOR_METHODS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub triples: PathBuf,
    #[serde(default)]
    pub remove_inverses: bool,
    #[serde(default = "default_inverse_threshold")]
    pub inverse_threshold: f64,
}

fn default_inverse_threshold() -> f64 {
    0.8
}

/// Split fractions only; the split seed is derived from the global seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        SplitConfig {
            train_fraction: s.train_fraction,
            valid_fraction: s.valid_fraction,
            test_fraction: s.test_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Search the built-in hyperparameter grid instead of a single config.
    #[serde(default)]
    pub grid: bool,
    #[serde(default)]
    pub train: TrainOverrides,
}

/// Optional overrides on top of the per-model default training config.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub dim: Option<usize>,
    pub negatives_per_positive: Option<usize>,
    pub margin: Option<f64>,
    pub learning_rate: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.dim {
            base.dim = v;
        }
        if let Some(v) = self.negatives_per_positive {
            base.negatives_per_positive = v;
        }
        if let Some(v) = self.margin {
            base.margin = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        base
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_true")]
    pub cwa: bool,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub owa: bool,
    #[serde(default = "default_owa_threshold")]
    pub owa_threshold: f64,
    /// Ground-truth labels for open-world candidates; without them the
    /// OWA stage stops after candidate generation.
    pub labels: Option<PathBuf>,
    /// Ridge weight on the affine scaling matrix (vector and matrix).
    #[serde(default)]
    pub scaling_l2: f64,
}

fn default_true() -> bool {
    true
}

fn default_bins() -> usize {
    kge_core::eval::DEFAULT_BIN_COUNT
}

fn default_owa_threshold() -> f64 {
    kge_core::eval::DEFAULT_OWA_THRESHOLD
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cwa: true,
            bins: default_bins(),
            owa: false,
            owa_threshold: default_owa_threshold(),
            labels: None,
            scaling_l2: 0.0,
        }
    }
}

impl RunConfig {
    /// Parse a TOML config file; also returns the raw text for hashing.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| KgeError::Config(format!("{}: {e}", path.display())))?;
        Ok((config, text))
    }

    /// Fail fast before any training: files must exist, names must be
    /// known, and every training config must be legal for its model.
    pub fn validate(&self) -> Result<()> {
        if !self.dataset.triples.is_file() {
            return Err(KgeError::Config(format!(
                "triple file not found: {}",
                self.dataset.triples.display()
            )));
        }
        if let Some(labels) = &self.evaluation.labels {
            if !labels.is_file() {
                return Err(KgeError::Config(format!(
                    "label file not found: {}",
                    labels.display()
                )));
            }
        }
        if self.models.is_empty() {
            return Err(KgeError::Config("no models configured".into()));
        }
        self.split_spec().validate()?;
        for m in &self.models {
            if !m.grid {
                let config = m.train.apply(TrainConfig::default_for(m.kind));
                config.validate_for(m.kind)?;
            }
        }
        if self.calibrators.is_empty() {
            return Err(KgeError::Config("no calibrators configured".into()));
        }
        for c in &self.calibrators {
            if !CALIBRATOR_METHODS.contains(&c.as_str()) {
                return Err(KgeError::Config(format!(
                    "unknown calibrator '{c}' (expected one of {})",
                    CALIBRATOR_METHODS.join(", ")
                )));
            }
        }
        if self.evaluation.bins == 0 {
            return Err(KgeError::Config("bin count must be >= 1".into()));
        }
        if self.evaluation.owa
            && !(self.evaluation.owa_threshold > 0.0 && self.evaluation.owa_threshold <= 1.0)
        {
            return Err(KgeError::Config(
                "OWA threshold must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            valid_fraction: self.split.valid_fraction,
            test_fraction: self.split.test_fraction,
            seed: child_seed(self.seed, "split"),
        }
    }
}

/// Derive a stage seed from the global seed and a stage label, so stages
/// can be rerun independently yet reproducibly.
pub fn child_seed(global: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn config_hash(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fit (or construct) a calibrator by method name on a validation set.
pub fn fit_calibrator(method: &str, data: &CalibrationSet, l2: f64) -> Result<Calibrator> {
    match method {
        "softmax" => Ok(Calibrator::IdentitySoftmax),
        "platt" => fit_platt_ova(data),
        "isotonic" => fit_isotonic_ova(data),
        "vector" => fit_affine_scaling(data, true, l2),
        "matrix" => fit_affine_scaling(data, false, l2),
        other => Err(KgeError::Config(format!("unknown calibrator '{other}'"))),
    }
}

/// Distinct (head, tail) pairs of a split in first-appearance order; the
/// default query set for open-world candidate generation.
pub fn split_pair_queries(graph: &KnowledgeGraph, split: Split) -> Vec<(usize, usize)> {
    let mut seen = std::collections::HashSet::new();
    let mut queries = Vec::new();
    for t in graph.split(split) {
        if seen.insert((t.head, t.tail)) {
            queries.push((t.head, t.tail));
        }
    }
    queries
}

/// Closed-world evaluation summary written as a metric file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CwaReport {
    pub model: ModelKind,
    pub calibrator: String,
    pub split: String,
    pub n: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub reliability: ReliabilityReport,
}

/// Training summary; wall-clock seconds are recorded in the manifest, not
/// here, so the file is reproducible byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: ModelKind,
    pub config: TrainConfig,
    pub epoch_losses: Vec<f64>,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub created_utc: String,
    pub config_hash: String,
    pub seed: u64,
    pub derived_seeds: BTreeMap<String, u64>,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
    pub seconds: f64,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let path = dir.join(name);
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| KgeError::Checkpoint(e.to_string()))?;
    fs::write(&path, json).map_err(|e| KgeError::io(path, e))
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    write_json(dir, MANIFEST_FILE, manifest)
}

/// Create `<output_dir>/run-<utc timestamp>`, suffixing on collision.
fn create_run_dir(output_dir: &Path) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    for attempt in 0..1000u32 {
        let name = if attempt == 0 {
            format!("run-{stamp}")
        } else {
            format!("run-{stamp}-{attempt}")
        };
        let dir = output_dir.join(name);
        match fs::create_dir_all(output_dir)
            .and_then(|_| fs::create_dir(&dir))
        {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(KgeError::io(dir, e)),
        }
    }
    Err(KgeError::Config("could not allocate a run directory".into()))
}

struct Pipeline<'a> {
    dir: PathBuf,
    manifest: Manifest,
    config: &'a RunConfig,
}

impl<'a> Pipeline<'a> {
    /// Run one stage, record its outcome, and rewrite the manifest. On
    /// failure the partial artifacts stay on disk and the manifest names
    /// the failed stage.
    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&RunConfig, &Path, &mut Vec<String>) -> Result<T>,
    ) -> Result<T> {
        let start = std::time::Instant::now();
        let mut artifacts = Vec::new();
        let outcome = f(self.config, &self.dir, &mut artifacts);
        let record = StageRecord {
            name: name.to_string(),
            status: if outcome.is_ok() { "ok" } else { "failed" }.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            artifacts,
            error: outcome.as_ref().err().map(|e| e.to_string()),
        };
        self.manifest.stages.push(record);
        write_manifest(&self.dir, &self.manifest)?;
        outcome
    }
}

/// Run the whole pipeline described by the config and return the artifact
/// directory. Rerunning with the same config and seed reproduces every
/// graph, model, calibrator, and metric file byte for byte.
pub fn run_pipeline(config: &RunConfig, config_text: &str) -> Result<PathBuf> {
    config.validate()?;
    let dir = create_run_dir(&config.output_dir)?;

    let mut derived_seeds = BTreeMap::new();
    derived_seeds.insert("split".to_string(), child_seed(config.seed, "split"));
    for m in &config.models {
        let label = format!("train:{}", m.kind);
        derived_seeds.insert(label.clone(), child_seed(config.seed, &label));
    }
    let mut pipeline = Pipeline {
        dir: dir.clone(),
        manifest: Manifest {
            created_utc: chrono::Utc::now().to_rfc3339(),
            config_hash: config_hash(config_text),
            seed: config.seed,
            derived_seeds,
            stages: Vec::new(),
        },
        config,
    };

    fs::write(dir.join("config.toml"), config_text).map_err(|e| KgeError::io(&dir, e))?;

    let graph = pipeline.stage("ingest", |config, dir, artifacts| {
        let mut triples = load_triples(&config.dataset.triples)?;
        if config.dataset.remove_inverses {
            triples = remove_inverse_relations(&triples, config.dataset.inverse_threshold);
        }
        let graph = build_graph(&triples, &config.split_spec())?;
        graph.save(&dir.join("graph.json"))?;
        artifacts.push("graph.json".to_string());
        Ok(graph)
    })?;

    for m in &config.models {
        let kind = m.kind;
        let seed = child_seed(config.seed, &format!("train:{kind}"));
        let model = pipeline.stage(&format!("train:{kind}"), |config, dir, artifacts| {
            let (model, trained_config, report) = if m.grid {
                let grid = full_grid(kind, seed);
                let (best, model, report) = grid_search(&graph, kind, &grid)?;
                (model, best, report)
            } else {
                let train_config = TrainConfig {
                    seed,
                    ..m.train.apply(TrainConfig::default_for(kind))
                };
                let (model, report) = train(&graph, kind, &train_config)?;
                (model, train_config, report)
            };
            let model_file = format!("model-{kind}.bin");
            model.save(&dir.join(&model_file))?;
            artifacts.push(model_file);
            let summary_file = format!("train-{kind}.json");
            write_json(dir, &summary_file, &train_summary(kind, trained_config, &report))?;
            artifacts.push(summary_file);
            let _ = config;
            Ok(model)
        })?;

        let calibration_data = CalibrationSet::from_graph(&model, &graph, Split::Valid)?;
        for method in &config.calibrators {
            let calibrator = pipeline.stage(
                &format!("calibrate:{kind}:{method}"),
                |config, dir, artifacts| {
                    let calibrator =
                        fit_calibrator(method, &calibration_data, config.evaluation.scaling_l2)?;
                    let file = format!("calibrator-{kind}-{method}.json");
                    calibrator.save(&dir.join(&file))?;
                    artifacts.push(file);
                    Ok(calibrator)
                },
            )?;

            if config.evaluation.cwa {
                pipeline.stage(
                    &format!("eval-cwa:{kind}:{method}"),
                    |config, dir, artifacts| {
                        let (accuracy, reliability, _) = evaluate_cwa(
                            &model,
                            &calibrator,
                            &graph,
                            Split::Test,
                            config.evaluation.bins,
                        )?;
                        let report = CwaReport {
                            model: kind,
                            calibrator: method.clone(),
                            split: "test".to_string(),
                            n: reliability.n,
                            accuracy,
                            ece: reliability.ece,
                            reliability: reliability.clone(),
                        };
                        let file = format!("cwa-{kind}-{method}.json");
                        write_json(dir, &file, &report)?;
                        artifacts.push(file);
                        let csv = format!("reliability-{kind}-{method}.csv");
                        write_file(dir, &csv, |w| write_reliability_csv(&reliability, w))?;
                        artifacts.push(csv);
                        let svg = format!("reliability-{kind}-{method}.svg");
                        write_file(dir, &svg, |w| write_reliability_svg(&reliability, w))?;
                        artifacts.push(svg);
                        Ok(())
                    },
                )?;
            }

            if config.evaluation.owa {
                let candidates = pipeline.stage(
                    &format!("predict-owa:{kind}:{method}"),
                    |config, dir, artifacts| {
                        let queries = split_pair_queries(&graph, Split::Test);
                        let candidates = generate_owa_candidates(
                            &model,
                            &calibrator,
                            &graph,
                            &queries,
                            config.evaluation.owa_threshold,
                        )?;
                        let file = format!("owa-candidates-{kind}-{method}.json");
                        write_json(dir, &file, &candidates)?;
                        artifacts.push(file);
                        Ok(candidates)
                    },
                )?;

                if let Some(labels_path) = &config.evaluation.labels {
                    pipeline.stage(
                        &format!("eval-owa:{kind}:{method}"),
                        |config, dir, artifacts| {
                            let labels = LabelFile::load(labels_path)?;
                            let eval = evaluate_owa(
                                &candidates,
                                &labels,
                                &graph,
                                config.evaluation.bins,
                            )?;
                            let file = format!("owa-eval-{kind}-{method}.json");
                            write_json(dir, &file, &eval)?;
                            artifacts.push(file);
                            Ok(())
                        },
                    )?;
                }
            }
        }
    }

    Ok(dir)
}

fn train_summary(model: ModelKind, config: TrainConfig, report: &TrainReport) -> TrainSummary {
    TrainSummary {
        model,
        config,
        epoch_losses: report.epoch_losses.clone(),
        validation_accuracy: report.validation_accuracy,
    }
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    let path = dir.join(name);
    fs::write(&path, buf).map_err(|e| KgeError::io(path, e))
}

/// Standalone-stage helpers shared by the subcommands. Each reads and
/// writes plain files so no state hides between invocations.
pub mod stages {
    use super::*;

    pub struct IngestArgs {
        pub triples: PathBuf,
        pub remove_inverses: bool,
        pub inverse_threshold: f64,
        pub split: SplitSpec,
        pub output: PathBuf,
    }

    pub fn ingest(args: &IngestArgs) -> Result<KnowledgeGraph> {
        let mut triples = load_triples(&args.triples)?;
        if args.remove_inverses {
            triples = remove_inverse_relations(&triples, args.inverse_threshold);
        }
        let graph = build_graph(&triples, &args.split)?;
        graph.save(&args.output)?;
        Ok(graph)
    }

    pub fn train_model(
        graph_path: &Path,
        kind: ModelKind,
        config: &TrainConfig,
        output: &Path,
        summary: Option<&Path>,
    ) -> Result<TrainReport> {
        let graph = KnowledgeGraph::load(graph_path)?;
        let (model, report) = train(&graph, kind, config)?;
        model.save(output)?;
        if let Some(path) = summary {
            save_summary(path, train_summary(kind, *config, &report))?;
        }
        Ok(report)
    }

    pub fn grid_model(
        graph_path: &Path,
        kind: ModelKind,
        seed: u64,
        output: &Path,
        summary: Option<&Path>,
    ) -> Result<(TrainConfig, TrainReport)> {
        let graph = KnowledgeGraph::load(graph_path)?;
        let grid = full_grid(kind, seed);
        let (best, model, report) = grid_search(&graph, kind, &grid)?;
        model.save(output)?;
        if let Some(path) = summary {
            save_summary(path, train_summary(kind, best, &report))?;
        }
        Ok((best, report))
    }

    fn save_summary(path: &Path, summary: TrainSummary) -> Result<()> {
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| KgeError::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| KgeError::io(path, e))
    }

    pub fn calibrate_model(
        graph_path: &Path,
        model_path: &Path,
        method: &str,
        split: Split,
        l2: f64,
        output: &Path,
    ) -> Result<Calibrator> {
        let graph = KnowledgeGraph::load(graph_path)?;
        let model = KgeModel::load(model_path)?;
        let data = CalibrationSet::from_graph(&model, &graph, split)?;
        let calibrator = fit_calibrator(method, &data, l2)?;
        calibrator.save(output)?;
        Ok(calibrator)
    }

    pub struct EvalCwaArgs {
        pub graph: PathBuf,
        pub model: PathBuf,
        pub calibrator: PathBuf,
        pub split: Split,
        pub bins: usize,
        pub output: PathBuf,
        pub csv: Option<PathBuf>,
        pub svg: Option<PathBuf>,
    }

    pub fn eval_cwa(args: &EvalCwaArgs) -> Result<CwaReport> {
        let graph = KnowledgeGraph::load(&args.graph)?;
        let model = KgeModel::load(&args.model)?;
        let calibrator = Calibrator::load(&args.calibrator)?;
        let (accuracy, reliability, _) =
            evaluate_cwa(&model, &calibrator, &graph, args.split, args.bins)?;
        let report = CwaReport {
            model: model.kind(),
            calibrator: calibrator.method_name().to_string(),
            split: args.split.to_string(),
            n: reliability.n,
            accuracy,
            ece: reliability.ece,
            reliability,
        };
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| KgeError::Checkpoint(e.to_string()))?;
        fs::write(&args.output, json).map_err(|e| KgeError::io(&args.output, e))?;
        if let Some(path) = &args.csv {
            let mut buf = Vec::new();
            write_reliability_csv(&report.reliability, &mut buf)?;
            fs::write(path, buf).map_err(|e| KgeError::io(path, e))?;
        }
        if let Some(path) = &args.svg {
            let mut buf = Vec::new();
            write_reliability_svg(&report.reliability, &mut buf)?;
            fs::write(path, buf).map_err(|e| KgeError::io(path, e))?;
        }
        Ok(report)
    }

    pub fn predict_owa(
        graph_path: &Path,
        model_path: &Path,
        calibrator_path: &Path,
        queries: Option<&Path>,
        threshold: f64,
        output: &Path,
    ) -> Result<Vec<OwaCandidate>> {
        let graph = KnowledgeGraph::load(graph_path)?;
        let model = KgeModel::load(model_path)?;
        let calibrator = Calibrator::load(calibrator_path)?;
        let query_pairs = match queries {
            Some(path) => load_query_pairs(path, &graph)?,
            None => split_pair_queries(&graph, Split::Test),
        };
        let candidates =
            generate_owa_candidates(&model, &calibrator, &graph, &query_pairs, threshold)?;
        let json = serde_json::to_string_pretty(&candidates)
            .map_err(|e| KgeError::Checkpoint(e.to_string()))?;
        fs::write(output, json).map_err(|e| KgeError::io(output, e))?;
        Ok(candidates)
    }

    /// Tab-separated head/tail entity labels, one query per line.
    fn load_query_pairs(path: &Path, graph: &KnowledgeGraph) -> Result<Vec<(usize, usize)>> {
        let text = fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(KgeError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected 2 tab-separated fields, got {}", fields.len()),
                });
            }
            let head = graph.entity_id(fields[0]).ok_or_else(|| KgeError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("unknown entity '{}'", fields[0]),
            })?;
            let tail = graph.entity_id(fields[1]).ok_or_else(|| KgeError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("unknown entity '{}'", fields[1]),
            })?;
            pairs.push((head, tail));
        }
        Ok(pairs)
    }

    pub fn eval_owa_stage(
        graph_path: &Path,
        candidates_path: &Path,
        labels_path: &Path,
        bins: usize,
        output: &Path,
    ) -> Result<OwaEvaluation> {
        let graph = KnowledgeGraph::load(graph_path)?;
        let text =
            fs::read_to_string(candidates_path).map_err(|e| KgeError::io(candidates_path, e))?;
        let candidates: Vec<OwaCandidate> =
            serde_json::from_str(&text).map_err(|e| KgeError::Checkpoint(e.to_string()))?;
        let labels = LabelFile::load(labels_path)?;
        let eval = evaluate_owa(&candidates, &labels, &graph, bins)?;
        let json = serde_json::to_string_pretty(&eval)
            .map_err(|e| KgeError::Checkpoint(e.to_string()))?;
        fs::write(output, json).map_err(|e| KgeError::io(output, e))?;
        Ok(eval)
    }
}
