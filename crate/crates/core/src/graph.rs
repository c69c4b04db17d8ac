//! Triple ingestion, vocabulary building, deterministic splitting, and the
//! known-triple index used for filtered evaluation.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};

/// An index triple (head entity, relation, tail entity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// A triple still carrying its string labels, before vocabulary building.
pub type LabeledTriple = (String, String, String);

/// Fractions and seed controlling the train/valid/test partition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_fraction <= 0.0 || self.valid_fraction <= 0.0 || self.test_fraction <= 0.0 {
            return Err(KgeError::Config(
                "split fractions must all be positive".into(),
            ));
        }
        let sum = self.train_fraction + self.valid_fraction + self.test_fraction;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(KgeError::Config(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// An indexed knowledge graph: vocabularies, the three splits, and a
/// membership index over their union.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    known: HashSet<Triple>,
}

/// On-disk form of a graph checkpoint (JSON).
#[derive(Serialize, Deserialize)]
struct GraphFile {
    entities: Vec<String>,
    relations: Vec<String>,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
}

impl From<KnowledgeGraph> for GraphFile {
    fn from(g: KnowledgeGraph) -> Self {
        GraphFile {
            entities: g.entities,
            relations: g.relations,
            train: g.train,
            valid: g.valid,
            test: g.test,
        }
    }
}

impl TryFrom<GraphFile> for KnowledgeGraph {
    type Error = KgeError;

    fn try_from(f: GraphFile) -> Result<Self> {
        KnowledgeGraph::from_parts(f.entities, f.relations, f.train, f.valid, f.test)
    }
}

/// Which split to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(KgeError::Config(format!("unknown split '{other}'"))),
        }
    }
}

impl KnowledgeGraph {
    fn from_parts(
        entities: Vec<String>,
        relations: Vec<String>,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let entity_index: HashMap<String, usize> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let relation_index: HashMap<String, usize> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        if entity_index.len() != entities.len() || relation_index.len() != relations.len() {
            return Err(KgeError::Data("duplicate vocabulary labels".into()));
        }
        let mut known = HashSet::with_capacity(train.len() + valid.len() + test.len());
        for (name, split) in [("train", &train), ("valid", &valid), ("test", &test)] {
            for t in split {
                if t.head >= entities.len() || t.tail >= entities.len() {
                    return Err(KgeError::IndexOutOfRange(format!(
                        "entity index in {name} split"
                    )));
                }
                if t.relation >= relations.len() {
                    return Err(KgeError::IndexOutOfRange(format!(
                        "relation index in {name} split"
                    )));
                }
                if !known.insert(*t) {
                    return Err(KgeError::Data(format!(
                        "duplicate or split-straddling triple {t:?} in {name}"
                    )));
                }
            }
        }
        Ok(KnowledgeGraph {
            entities,
            relations,
            entity_index,
            relation_index,
            train,
            valid,
            test,
            known,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_label(&self, i: usize) -> Option<&str> {
        self.entities.get(i).map(|s| s.as_str())
    }

    pub fn relation_label(&self, i: usize) -> Option<&str> {
        self.relations.get(i).map(|s| s.as_str())
    }

    pub fn entity_id(&self, label: &str) -> Option<usize> {
        self.entity_index.get(label).copied()
    }

    pub fn relation_id(&self, label: &str) -> Option<usize> {
        self.relation_index.get(label).copied()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    /// Membership of the triple in the union of all three splits.
    pub fn is_known(&self, triple: Triple) -> Result<bool> {
        if triple.head >= self.entities.len() || triple.tail >= self.entities.len() {
            return Err(KgeError::IndexOutOfRange(format!(
                "entity index in {triple:?} (|E| = {})",
                self.entities.len()
            )));
        }
        if triple.relation >= self.relations.len() {
            return Err(KgeError::IndexOutOfRange(format!(
                "relation index in {triple:?} (|R| = {})",
                self.relations.len()
            )));
        }
        Ok(self.known.contains(&triple))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string(self).map_err(|e| KgeError::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|e| KgeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| KgeError::Checkpoint(e.to_string()))
    }
}

/// Read tab-separated (head, relation, tail) lines in file order.
///
/// No vocabulary is built and duplicates are passed through; `build_graph`
/// handles both.
pub fn load_triples(path: &Path) -> Result<Vec<LabeledTriple>> {
    let text = fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KgeError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        triples.push((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].to_string(),
        ));
    }
    if triples.is_empty() {
        return Err(KgeError::Data(format!(
            "no triples in {}",
            path.display()
        )));
    }
    Ok(triples)
}

/// Build the indexed graph: vocabularies by first appearance, exact
/// duplicates dropped, then a seeded shuffle partitioned by the split
/// fractions with the rounding residue assigned to train.
pub fn build_graph(triples: &[LabeledTriple], split: &SplitSpec) -> Result<KnowledgeGraph> {
    split.validate()?;

    let mut entities: Vec<String> = Vec::new();
    let mut relations: Vec<String> = Vec::new();
    let mut entity_index: HashMap<String, usize> = HashMap::new();
    let mut relation_index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<Triple> = HashSet::new();
    let mut distinct: Vec<Triple> = Vec::new();

    for (h, r, t) in triples {
        let head = *entity_index.entry(h.clone()).or_insert_with(|| {
            entities.push(h.clone());
            entities.len() - 1
        });
        let relation = *relation_index.entry(r.clone()).or_insert_with(|| {
            relations.push(r.clone());
            relations.len() - 1
        });
        let tail = *entity_index.entry(t.clone()).or_insert_with(|| {
            entities.push(t.clone());
            entities.len() - 1
        });
        let triple = Triple::new(head, relation, tail);
        if seen.insert(triple) {
            distinct.push(triple);
        }
    }

    if distinct.len() < 10 {
        return Err(KgeError::Data(format!(
            "need at least 10 distinct triples, got {}",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    distinct.shuffle(&mut rng);

    let n = distinct.len();
    let n_valid = (n as f64 * split.valid_fraction).floor() as usize;
    let n_test = (n as f64 * split.test_fraction).floor() as usize;
    let n_train = n - n_valid - n_test;
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(KgeError::Data(format!(
            "split produces an empty partition: {n_train}/{n_valid}/{n_test}"
        )));
    }

    let train = distinct[..n_train].to_vec();
    let valid = distinct[n_train..n_train + n_valid].to_vec();
    let test = distinct[n_train + n_valid..].to_vec();

    KnowledgeGraph::from_parts(entities, relations, train, valid, test)
}

/// Drop relations that are near-exact inverses of another relation.
///
/// For each ordered pair (r1, r2) the overlap is the fraction of (h, r1, t)
/// triples for which (t, r2, h) exists. When the overlap is at or above the
/// threshold in both directions, all triples of the lexicographically larger
/// relation are removed. Exact duplicate triples are removed as well.
pub fn remove_inverse_relations(
    triples: &[LabeledTriple],
    overlap_threshold: f64,
) -> Vec<LabeledTriple> {
    let mut seen: HashSet<&LabeledTriple> = HashSet::new();
    let mut distinct: Vec<&LabeledTriple> = Vec::new();
    for t in triples {
        if seen.insert(t) {
            distinct.push(t);
        }
    }

    let mut by_relation: HashMap<&str, Vec<(&str, &str)>> = HashMap::new();
    let mut pair_set: HashSet<(&str, &str, &str)> = HashSet::new();
    for (h, r, t) in distinct.iter().copied() {
        by_relation.entry(r).or_default().push((h, t));
        pair_set.insert((h, r, t));
    }

    let overlap = |r1: &str, r2: &str| -> f64 {
        let pairs = &by_relation[r1];
        let hits = pairs
            .iter()
            .filter(|(h, t)| pair_set.contains(&(t, r2, h)))
            .count();
        hits as f64 / pairs.len() as f64
    };

    let mut rels: Vec<&str> = by_relation.keys().copied().collect();
    rels.sort_unstable();
    let mut dropped: HashSet<&str> = HashSet::new();
    for i in 0..rels.len() {
        for j in (i + 1)..rels.len() {
            let (r1, r2) = (rels[i], rels[j]);
            if dropped.contains(r1) || dropped.contains(r2) {
                continue;
            }
            if overlap(r1, r2) >= overlap_threshold && overlap(r2, r1) >= overlap_threshold {
                // rels is sorted, so r2 is the lexicographically larger one
                dropped.insert(r2);
            }
        }
    }

    distinct
        .into_iter()
        .filter(|(_, r, _)| !dropped.contains(r.as_str()))
        .cloned()
        .collect()
}
