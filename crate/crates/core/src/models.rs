//! Embedding containers and the four scoring functions.
//!
//! TransE and TransH are translational (distance-based, scores <= 0);
//! DistMult and ComplEx are bilinear. ComplEx embeddings are stored as two
//! stacked real halves (real part, then imaginary part) so all four models
//! share one row-major matrix container.

use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    TransH,
    DistMult,
    ComplEx,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::TransE,
        ModelKind::TransH,
        ModelKind::DistMult,
        ModelKind::ComplEx,
    ];

    /// Translational models score by negated distance.
    pub fn is_translational(self) -> bool {
        matches!(self, ModelKind::TransE | ModelKind::TransH)
    }

    /// Width of one embedding row: 2d for ComplEx (real + imaginary), d otherwise.
    pub fn row_width(self, dim: usize) -> usize {
        match self {
            ModelKind::ComplEx => 2 * dim,
            _ => dim,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::TransE => "transe",
            ModelKind::TransH => "transh",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "transh" => Ok(ModelKind::TransH),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(KgeError::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Uncalibrated scores over all relations for one (h, ?, t) query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub query: (usize, usize),
}

/// A trained (or freshly initialized) embedding model.
#[derive(Debug, Clone)]
pub struct KgeModel {
    kind: ModelKind,
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    entity_emb: Vec<f64>,
    rel_emb: Vec<f64>,
    /// Relation hyperplane normals, TransH only. Unit L2 norm per row.
    normals: Option<Vec<f64>>,
}

impl KgeModel {
    /// Assemble a model from explicit matrices (row-major, width d, or 2d
    /// for ComplEx; normals required iff TransH). Validates shapes and norms.
    pub fn from_parts(
        kind: ModelKind,
        dim: usize,
        n_entities: usize,
        n_relations: usize,
        entity_emb: Vec<f64>,
        rel_emb: Vec<f64>,
        normals: Option<Vec<f64>>,
    ) -> Result<Self> {
        if normals.is_some() != (kind == ModelKind::TransH) {
            return Err(KgeError::Config(
                "hyperplane normals required exactly for TransH".into(),
            ));
        }
        let model = KgeModel {
            kind,
            dim,
            n_entities,
            n_relations,
            entity_emb,
            rel_emb,
            normals,
        };
        model.validate()?;
        Ok(model)
    }

    /// As `from_parts` but skipping validation. Useful for perturbation
    /// tests that deliberately break the unit-norm invariant on normals.
    pub fn from_parts_unchecked(
        kind: ModelKind,
        dim: usize,
        n_entities: usize,
        n_relations: usize,
        entity_emb: Vec<f64>,
        rel_emb: Vec<f64>,
        normals: Option<Vec<f64>>,
    ) -> Self {
        KgeModel {
            kind,
            dim,
            n_entities,
            n_relations,
            entity_emb,
            rel_emb,
            normals,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.n_entities
    }

    pub fn num_relations(&self) -> usize {
        self.n_relations
    }

    fn width(&self) -> usize {
        self.kind.row_width(self.dim)
    }

    /// Row-major entity matrix (|E| x d, or |E| x 2d for ComplEx).
    pub fn entity_matrix(&self) -> &[f64] {
        &self.entity_emb
    }

    /// Row-major relation matrix.
    pub fn relation_matrix(&self) -> &[f64] {
        &self.rel_emb
    }

    /// Row-major hyperplane normal matrix, TransH only.
    pub fn normal_matrix(&self) -> Option<&[f64]> {
        self.normals.as_deref()
    }

    pub fn entity(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.entity_emb[i * w..(i + 1) * w]
    }

    pub fn relation(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.rel_emb[i * w..(i + 1) * w]
    }

    pub fn normal(&self, i: usize) -> Option<&[f64]> {
        self.normals
            .as_ref()
            .map(|n| &n[i * self.dim..(i + 1) * self.dim])
    }

    pub(crate) fn entity_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.entity_emb[i * w..(i + 1) * w]
    }

    pub(crate) fn relation_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.rel_emb[i * w..(i + 1) * w]
    }

    pub(crate) fn normal_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.dim;
        let n = self
            .normals
            .as_mut()
            .expect("normal_mut on a model without hyperplane normals");
        &mut n[i * d..(i + 1) * d]
    }

    fn check_indices(&self, h: usize, r: usize, t: usize) -> Result<()> {
        if h >= self.n_entities || t >= self.n_entities {
            return Err(KgeError::IndexOutOfRange(format!(
                "entity index (h={h}, t={t}, |E|={})",
                self.n_entities
            )));
        }
        if r >= self.n_relations {
            return Err(KgeError::IndexOutOfRange(format!(
                "relation index {r} (|R|={})",
                self.n_relations
            )));
        }
        Ok(())
    }

    /// f(h, r, t) for the model's scoring function.
    pub fn score_triple(&self, h: usize, r: usize, t: usize) -> Result<f64> {
        self.check_indices(h, r, t)?;
        Ok(self.score_unchecked(h, r, t))
    }

    pub(crate) fn score_unchecked(&self, h: usize, r: usize, t: usize) -> f64 {
        let he = self.entity(h);
        let re = self.relation(r);
        let te = self.entity(t);
        match self.kind {
            ModelKind::TransE => transe_score(he, re, te),
            ModelKind::TransH => transh_score(he, re, te, self.normal(r).unwrap()),
            ModelKind::DistMult => distmult_score(he, re, te),
            ModelKind::ComplEx => complex_score(he, re, te, self.dim),
        }
    }

    /// Score vector z over all relations for the query (h, ?, t).
    pub fn score_all_relations(&self, h: usize, t: usize) -> Result<ScoreVector> {
        self.check_indices(h, 0.min(self.n_relations.saturating_sub(1)), t)?;
        let values = (0..self.n_relations)
            .map(|r| self.score_unchecked(h, r, t))
            .collect();
        Ok(ScoreVector {
            values,
            query: (h, t),
        })
    }

    /// Checkpoint: self-describing header, then row-major little-endian f64
    /// matrices (entities, relations, normals if present).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"KGEM");
        buf.write_u32::<LittleEndian>(1).unwrap();
        let kind_tag = match self.kind {
            ModelKind::TransE => 0u8,
            ModelKind::TransH => 1,
            ModelKind::DistMult => 2,
            ModelKind::ComplEx => 3,
        };
        buf.write_u8(kind_tag).unwrap();
        buf.write_u64::<LittleEndian>(self.dim as u64).unwrap();
        buf.write_u64::<LittleEndian>(self.n_entities as u64).unwrap();
        buf.write_u64::<LittleEndian>(self.n_relations as u64).unwrap();
        buf.write_u8(self.normals.is_some() as u8).unwrap();
        for &v in self
            .entity_emb
            .iter()
            .chain(&self.rel_emb)
            .chain(self.normals.iter().flatten())
        {
            buf.write_f64::<LittleEndian>(v).unwrap();
        }
        fs::write(path, buf).map_err(|e| KgeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| KgeError::io(path, e))?;
        let mut cur = std::io::Cursor::new(&data);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic)
            .map_err(|_| KgeError::Checkpoint("truncated header".into()))?;
        if &magic != b"KGEM" {
            return Err(KgeError::Checkpoint("bad magic".into()));
        }
        let version = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| KgeError::Checkpoint("truncated header".into()))?;
        if version != 1 {
            return Err(KgeError::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let kind = match cur.read_u8().unwrap_or(255) {
            0 => ModelKind::TransE,
            1 => ModelKind::TransH,
            2 => ModelKind::DistMult,
            3 => ModelKind::ComplEx,
            other => {
                return Err(KgeError::Checkpoint(format!("unknown kind tag {other}")));
            }
        };
        let read_dim = |c: &mut std::io::Cursor<&Vec<u8>>| -> Result<usize> {
            c.read_u64::<LittleEndian>()
                .map(|v| v as usize)
                .map_err(|_| KgeError::Checkpoint("truncated header".into()))
        };
        let dim = read_dim(&mut cur)?;
        let n_entities = read_dim(&mut cur)?;
        let n_relations = read_dim(&mut cur)?;
        let has_normals = cur
            .read_u8()
            .map_err(|_| KgeError::Checkpoint("truncated header".into()))?
            != 0;
        if has_normals != (kind == ModelKind::TransH) {
            return Err(KgeError::Checkpoint(
                "normals flag inconsistent with model kind".into(),
            ));
        }
        let w = kind.row_width(dim);
        let mut read_matrix = |len: usize| -> Result<Vec<f64>> {
            let mut m = Vec::with_capacity(len);
            for _ in 0..len {
                m.push(
                    cur.read_f64::<LittleEndian>()
                        .map_err(|_| KgeError::Checkpoint("truncated matrix data".into()))?,
                );
            }
            Ok(m)
        };
        let entity_emb = read_matrix(n_entities * w)?;
        let rel_emb = read_matrix(n_relations * w)?;
        let normals = if has_normals {
            Some(read_matrix(n_relations * dim)?)
        } else {
            None
        };
        let model = KgeModel {
            kind,
            dim,
            n_entities,
            n_relations,
            entity_emb,
            rel_emb,
            normals,
        };
        model.validate()?;
        Ok(model)
    }

    /// Finiteness, shape, and (TransH) unit-normal checks.
    pub fn validate(&self) -> Result<()> {
        let w = self.width();
        if self.entity_emb.len() != self.n_entities * w
            || self.rel_emb.len() != self.n_relations * w
        {
            return Err(KgeError::Checkpoint("matrix shape mismatch".into()));
        }
        if self
            .entity_emb
            .iter()
            .chain(&self.rel_emb)
            .chain(self.normals.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(KgeError::Numerical("non-finite embedding value".into()));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.n_relations * self.dim {
                return Err(KgeError::Checkpoint("normals shape mismatch".into()));
            }
            for r in 0..self.n_relations {
                let norm = l2_norm(&normals[r * self.dim..(r + 1) * self.dim]);
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(KgeError::Numerical(format!(
                        "TransH normal row {r} has norm {norm}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Uniform initialization in [-6/sqrt(d), 6/sqrt(d)], normals renormalized.
pub fn init_model(
    kind: ModelKind,
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    seed: u64,
) -> Result<KgeModel> {
    if dim == 0 {
        return Err(KgeError::Config("embedding dimension must be >= 1".into()));
    }
    if n_entities == 0 || n_relations == 0 {
        return Err(KgeError::Config("empty vocabulary".into()));
    }
    let bound = 6.0 / (dim as f64).sqrt();
    let w = kind.row_width(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
    };
    let entity_emb = draw(n_entities * w);
    let rel_emb = draw(n_relations * w);
    let normals = if kind == ModelKind::TransH {
        let mut n = draw(n_relations * dim);
        for r in 0..n_relations {
            normalize_row(&mut n[r * dim..(r + 1) * dim]);
        }
        Some(n)
    } else {
        None
    };
    Ok(KgeModel {
        kind,
        dim,
        n_entities,
        n_relations,
        entity_emb,
        rel_emb,
        normals,
    })
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn normalize_row(v: &mut [f64]) {
    let norm = l2_norm(v);
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// -||h + r - t||_2
pub fn transe_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let sum_sq: f64 = h
        .iter()
        .zip(r)
        .zip(t)
        .map(|((hi, ri), ti)| {
            let d = hi + ri - ti;
            d * d
        })
        .sum();
    -sum_sq.sqrt()
}

/// Project v onto the hyperplane with unit normal w: v - (w.v) w.
pub fn project_to_hyperplane(v: &[f64], w: &[f64]) -> Vec<f64> {
    let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
    v.iter().zip(w).map(|(a, b)| a - dot * b).collect()
}

/// -||h_perp + r - t_perp||_2 with h, t projected onto the relation hyperplane.
pub fn transh_score(h: &[f64], r: &[f64], t: &[f64], w: &[f64]) -> f64 {
    let hp = project_to_hyperplane(h, w);
    let tp = project_to_hyperplane(t, w);
    transe_score(&hp, r, &tp)
}

/// h^T diag(r) t
pub fn distmult_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter().zip(r).zip(t).map(|((a, b), c)| a * b * c).sum()
}

/// Re(h^T diag(r) conj(t)) on stacked (real, imaginary) halves of width 2*dim.
pub fn complex_score(h: &[f64], r: &[f64], t: &[f64], dim: usize) -> f64 {
    let (hre, him) = h.split_at(dim);
    let (rre, rim) = r.split_at(dim);
    let (tre, tim) = t.split_at(dim);
    let mut score = 0.0;
    for i in 0..dim {
        // Re((a+bi)(c+di)(e-fi)) = e(ac - bd) + f(ad + bc)
        let (a, b, c, d, e, f) = (hre[i], him[i], rre[i], rim[i], tre[i], tim[i]);
        score += e * (a * c - b * d) + f * (a * d + b * c);
    }
    score
}
