//! Post-hoc confidence calibration over relation score vectors.
//!
//! Five variants: the uncalibrated softmax baseline, one-versus-all Platt
//! scaling, one-versus-all isotonic regression (pool adjacent violators),
//! and vector/matrix scaling (softmax of an affine transform fit by
//! cross-entropy). All variants output a probability vector over the k
//! relations; argmax ties break toward the lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{KgeError, Result};
use crate::graph::{KnowledgeGraph, Split};
use crate::models::{KgeModel, ScoreVector};

/// Validation score matrix and gold labels used to fit a calibrator.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    scores: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
}

impl CalibrationSet {
    pub fn new(scores: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(KgeError::Data(
                "calibration set needs n >= 1 rows with one label each".into(),
            ));
        }
        let k = scores[0].len();
        if k == 0 {
            return Err(KgeError::Data("zero-width score rows".into()));
        }
        for row in &scores {
            if row.len() != k {
                return Err(KgeError::Data("ragged score matrix".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(KgeError::Numerical("non-finite calibration score".into()));
            }
        }
        if labels.iter().any(|&l| l >= k) {
            return Err(KgeError::IndexOutOfRange("calibration label".into()));
        }
        Ok(CalibrationSet { scores, labels, k })
    }

    /// Score every (h, ?, t) query of a split against all relations, with the
    /// gold relation as the label.
    pub fn from_graph(model: &KgeModel, graph: &KnowledgeGraph, split: Split) -> Result<Self> {
        let triples = graph.split(split);
        if triples.is_empty() {
            return Err(KgeError::Data("empty calibration split".into()));
        }
        let mut scores = Vec::with_capacity(triples.len());
        let mut labels = Vec::with_capacity(triples.len());
        for t in triples {
            scores.push(model.score_all_relations(t.head, t.tail)?.values);
            labels.push(t.relation);
        }
        CalibrationSet::new(scores, labels)
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// A nondecreasing, right-continuous step function on [0, 1].
///
/// `breakpoints[j]` is the left edge of block j; evaluation below the first
/// breakpoint or above the last clamps to the terminal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        // last block whose left edge is <= x
        match self
            .breakpoints
            .partition_point(|&b| b <= x)
        {
            0 => self.values[0],
            j => self.values[j - 1],
        }
    }
}

/// Least-squares nondecreasing fit by pool adjacent violators.
///
/// Points with equal x are pooled first; the result has one (breakpoint,
/// value) pair per final block, with the breakpoint at the block's least x.
pub fn pool_adjacent_violators(points: &[(f64, f64)]) -> StepFunction {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // pre-pool equal inputs into (min_x, value_sum, weight) blocks
    let mut pooled: Vec<(f64, f64, f64)> = Vec::new();
    for &(x, y) in &sorted {
        match pooled.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += y;
                last.2 += 1.0;
            }
            _ => pooled.push((x, y, 1.0)),
        }
    }

    // PAV: merge while the previous block mean exceeds the next
    let mut stack: Vec<(f64, f64, f64)> = Vec::new();
    for block in pooled {
        stack.push(block);
        while stack.len() >= 2 {
            let n = stack.len();
            let prev_mean = stack[n - 2].1 / stack[n - 2].2;
            let cur_mean = stack[n - 1].1 / stack[n - 1].2;
            if prev_mean > cur_mean {
                let (_, sum, w) = stack.pop().unwrap();
                stack[n - 2].1 += sum;
                stack[n - 2].2 += w;
            } else {
                break;
            }
        }
    }

    StepFunction {
        breakpoints: stack.iter().map(|b| b.0).collect(),
        values: stack.iter().map(|b| b.1 / b.2).collect(),
    }
}

/// Fitted calibration parameters, tagged by method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Calibrator {
    IdentitySoftmax,
    PlattOva {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    IsotonicOva {
        classes: Vec<StepFunction>,
    },
    VectorScaling {
        a_diag: Vec<f64>,
        b: Vec<f64>,
    },
    MatrixScaling {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

impl Calibrator {
    pub fn method_name(&self) -> &'static str {
        match self {
            Calibrator::IdentitySoftmax => "softmax",
            Calibrator::PlattOva { .. } => "platt",
            Calibrator::IsotonicOva { .. } => "isotonic",
            Calibrator::VectorScaling { .. } => "vector",
            Calibrator::MatrixScaling { .. } => "matrix",
        }
    }

    /// Number of classes this calibrator was fitted for, if constrained.
    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Calibrator::IdentitySoftmax => None,
            Calibrator::PlattOva { a, .. } => Some(a.len()),
            Calibrator::IsotonicOva { classes } => Some(classes.len()),
            Calibrator::VectorScaling { a_diag, .. } => Some(a_diag.len()),
            Calibrator::MatrixScaling { b, .. } => Some(b.len()),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| KgeError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| KgeError::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KgeError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| KgeError::Checkpoint(e.to_string()))
    }
}

/// A calibrated (or softmax-scaled) prediction for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query: (usize, usize),
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub confidence: f64,
}

/// Index of the largest value, ties toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Max-shifted softmax.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn prediction_from_probs(query: (usize, usize), probs: Vec<f64>) -> Prediction {
    let predicted = argmax(&probs);
    let confidence = probs[predicted];
    Prediction {
        query,
        probs,
        predicted,
        confidence,
    }
}

/// The uncalibrated baseline: softmax-scaled scores.
pub fn softmax_confidence(z: &ScoreVector) -> Prediction {
    prediction_from_probs(z.query, softmax(&z.values))
}

/// Apply a fitted calibrator to one score vector.
pub fn calibrate(calibrator: &Calibrator, z: &ScoreVector) -> Result<Prediction> {
    if let Some(k) = calibrator.num_classes() {
        if k != z.values.len() {
            return Err(KgeError::Config(format!(
                "calibrator has {k} classes but score vector has {}",
                z.values.len()
            )));
        }
    }
    let probs = match calibrator {
        Calibrator::IdentitySoftmax => softmax(&z.values),
        Calibrator::PlattOva { a, b } => {
            let raw: Vec<f64> = z
                .values
                .iter()
                .zip(a.iter().zip(b))
                .map(|(&zi, (&ai, &bi))| sigmoid(ai * zi + bi))
                .collect();
            normalize_or_uniform(raw)
        }
        Calibrator::IsotonicOva { classes } => {
            let raw: Vec<f64> = z
                .values
                .iter()
                .zip(classes)
                .map(|(&zi, g)| g.eval(sigmoid(zi)))
                .collect();
            normalize_or_uniform(raw)
        }
        Calibrator::VectorScaling { a_diag, b } => {
            let u: Vec<f64> = z
                .values
                .iter()
                .zip(a_diag.iter().zip(b))
                .map(|(&zi, (&ai, &bi))| ai * zi + bi)
                .collect();
            softmax(&u)
        }
        Calibrator::MatrixScaling { a, b } => {
            let u: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(row, &bi)| {
                    row.iter().zip(&z.values).map(|(w, zi)| w * zi).sum::<f64>() + bi
                })
                .collect();
            softmax(&u)
        }
    };
    Ok(prediction_from_probs(z.query, probs))
}

fn normalize_or_uniform(raw: Vec<f64>) -> Vec<f64> {
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        let k = raw.len();
        vec![1.0 / k as f64; k]
    } else {
        raw.into_iter().map(|p| p / sum).collect()
    }
}

const PLATT_GRAD_TOL: f64 = 1e-8;
const PLATT_MAX_ITERS: usize = 10_000;

/// Per-class binary logistic fits sigma(a*z_i + b) against the one-vs-all
/// indicator, by damped Newton. Classes with no positive example get a = 0
/// and b at the Laplace-smoothed base rate 1/(n+2).
pub fn fit_platt_ova(data: &CalibrationSet) -> Result<Calibrator> {
    let k = data.num_classes();
    let n = data.len();
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    for class in 0..k {
        let zs: Vec<f64> = data.scores().iter().map(|row| row[class]).collect();
        let ys: Vec<f64> = data
            .labels()
            .iter()
            .map(|&l| if l == class { 1.0 } else { 0.0 })
            .collect();
        if ys.iter().all(|&y| y == 0.0) {
            let p = 1.0 / (n as f64 + 2.0);
            a[class] = 0.0;
            b[class] = (p / (1.0 - p)).ln();
            continue;
        }
        let (ai, bi) = fit_binary_logistic(&zs, &ys);
        a[class] = ai;
        b[class] = bi;
    }
    Ok(Calibrator::PlattOva { a, b })
}

fn binary_logistic_loss(zs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    zs.iter()
        .zip(ys)
        .map(|(&z, &y)| {
            let s = a * z + b;
            y * softplus(-s) + (1.0 - y) * softplus(s)
        })
        .sum()
}

fn fit_binary_logistic(zs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mut a, mut b) = (1.0, 0.0);
    let mut loss = binary_logistic_loss(zs, ys, a, b);
    for _ in 0..PLATT_MAX_ITERS {
        let (mut ga, mut gb) = (0.0, 0.0);
        let (mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0);
        for (&z, &y) in zs.iter().zip(ys) {
            let p = sigmoid(a * z + b);
            let d = p - y;
            let w = p * (1.0 - p);
            ga += d * z;
            gb += d;
            haa += w * z * z;
            hab += w * z;
            hbb += w;
        }
        if (ga * ga + gb * gb).sqrt() < PLATT_GRAD_TOL {
            break;
        }
        // 2x2 Newton step with jitter on the Hessian diagonal
        haa += 1e-12;
        hbb += 1e-12;
        let det = haa * hbb - hab * hab;
        let (sa, sb) = if det.abs() > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        // damping: halve until the loss does not increase
        let mut step = 1.0;
        loop {
            let (na, nb) = (a - step * sa, b - step * sb);
            let new_loss = binary_logistic_loss(zs, ys, na, nb);
            if new_loss <= loss || step < 1e-12 {
                a = na;
                b = nb;
                loss = new_loss;
                break;
            }
            step *= 0.5;
        }
    }
    (a, b)
}

/// Per-class isotonic fits of the one-vs-all indicator against
/// sigma(z_i), by pool adjacent violators.
pub fn fit_isotonic_ova(data: &CalibrationSet) -> Result<Calibrator> {
    let k = data.num_classes();
    let mut classes = Vec::with_capacity(k);
    for class in 0..k {
        let points: Vec<(f64, f64)> = data
            .scores()
            .iter()
            .zip(data.labels())
            .map(|(row, &l)| (sigmoid(row[class]), if l == class { 1.0 } else { 0.0 }))
            .collect();
        classes.push(pool_adjacent_violators(&points));
    }
    Ok(Calibrator::IsotonicOva { classes })
}

pub const AFFINE_MAX_ITERS: usize = 2_000;
pub const AFFINE_GRAD_TOL: f64 = 1e-7;

/// Fit vector (diagonal) or matrix (full) scaling by minimizing multiclass
/// cross-entropy of softmax(Az + b), starting from A = I, b = 0.
///
/// `l2` is an optional ridge weight on the entries of A (0 disables it).
pub fn fit_affine_scaling(
    data: &CalibrationSet,
    diagonal_only: bool,
    l2: f64,
) -> Result<Calibrator> {
    let k = data.num_classes();
    let init_a = if diagonal_only {
        vec![1.0; k]
    } else {
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            a[i * k + i] = 1.0;
        }
        a
    };
    fit_affine_scaling_from(data, diagonal_only, l2, &init_a, &vec![0.0; k])
}

/// As `fit_affine_scaling` but from an explicit starting point (`init_a` is
/// the diagonal for vector scaling, the row-major k*k matrix otherwise).
pub fn fit_affine_scaling_from(
    data: &CalibrationSet,
    diagonal_only: bool,
    l2: f64,
    init_a: &[f64],
    init_b: &[f64],
) -> Result<Calibrator> {
    let k = data.num_classes();
    if data.len() < 2 {
        return Err(KgeError::Data(
            "affine scaling needs at least 2 calibration rows".into(),
        ));
    }
    let a_len = if diagonal_only { k } else { k * k };
    if init_a.len() != a_len || init_b.len() != k {
        return Err(KgeError::Config("affine init has wrong shape".into()));
    }

    let mut theta: Vec<f64> = init_a.iter().chain(init_b).copied().collect();
    let objective = |theta: &[f64]| affine_objective(data, diagonal_only, l2, theta);
    minimize_lbfgs(&mut theta, objective, AFFINE_MAX_ITERS, AFFINE_GRAD_TOL)?;

    let (a_flat, b) = theta.split_at(a_len);
    if diagonal_only {
        Ok(Calibrator::VectorScaling {
            a_diag: a_flat.to_vec(),
            b: b.to_vec(),
        })
    } else {
        Ok(Calibrator::MatrixScaling {
            a: a_flat.chunks(k).map(|r| r.to_vec()).collect(),
            b: b.to_vec(),
        })
    }
}

fn affine_objective(
    data: &CalibrationSet,
    diagonal_only: bool,
    l2: f64,
    theta: &[f64],
) -> (f64, Vec<f64>) {
    let k = data.num_classes();
    let n = data.len() as f64;
    let a_len = if diagonal_only { k } else { k * k };
    let (a, b) = theta.split_at(a_len);
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut u = vec![0.0; k];
    for (row, &label) in data.scores().iter().zip(data.labels()) {
        if diagonal_only {
            for i in 0..k {
                u[i] = a[i] * row[i] + b[i];
            }
        } else {
            for i in 0..k {
                let ar = &a[i * k..(i + 1) * k];
                u[i] = ar.iter().zip(row).map(|(w, z)| w * z).sum::<f64>() + b[i];
            }
        }
        let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + u.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += (lse - u[label]) / n;
        for i in 0..k {
            let delta = ((u[i] - lse).exp() - if i == label { 1.0 } else { 0.0 }) / n;
            if diagonal_only {
                grad[i] += delta * row[i];
            } else {
                let gr = &mut grad[i * k..(i + 1) * k];
                for (g, z) in gr.iter_mut().zip(row) {
                    *g += delta * z;
                }
            }
            grad[a_len + i] += delta;
        }
    }
    if l2 > 0.0 {
        for i in 0..a_len {
            loss += l2 * theta[i] * theta[i];
            grad[i] += 2.0 * l2 * theta[i];
        }
    }
    (loss, grad)
}

/// L-BFGS (two-loop recursion, memory 10) with Armijo backtracking.
fn minimize_lbfgs(
    theta: &mut Vec<f64>,
    objective: impl Fn(&[f64]) -> (f64, Vec<f64>),
    max_iters: usize,
    grad_tol: f64,
) -> Result<()> {
    const MEMORY: usize = 10;
    let (mut loss, mut grad) = objective(theta);
    if !loss.is_finite() {
        return Err(KgeError::Numerical("non-finite initial objective".into()));
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    for _ in 0..max_iters {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < grad_tol {
            break;
        }

        // two-loop recursion
        let mut direction: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let alpha = rho * dot(s, &direction);
            for (d, yi) in direction.iter_mut().zip(y) {
                *d -= alpha * yi;
            }
            alphas.push((alpha, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            for d in direction.iter_mut() {
                *d *= gamma;
            }
        }
        for ((s, y), &(alpha, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &direction);
            for (d, si) in direction.iter_mut().zip(s) {
                *d += (alpha - beta) * si;
            }
        }

        let dir_deriv = dot(&grad, &direction);
        if dir_deriv >= 0.0 {
            // not a descent direction; fall back to steepest descent
            direction = grad.iter().map(|g| -g).collect();
            s_hist.clear();
            y_hist.clear();
        }
        let dir_deriv = dot(&grad, &direction);

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = false;
        let mut new_theta = theta.clone();
        let mut new_loss = loss;
        let mut new_grad = grad.clone();
        for _ in 0..60 {
            for ((nt, t), d) in new_theta.iter_mut().zip(theta.iter()).zip(&direction) {
                *nt = t + step * d;
            }
            let (l, g) = objective(&new_theta);
            if l.is_finite() && l <= loss + 1e-4 * step * dir_deriv {
                new_loss = l;
                new_grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no further progress possible at machine precision
            break;
        }

        let s: Vec<f64> = new_theta
            .iter()
            .zip(theta.iter())
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let decrease = loss - new_loss;
        *theta = new_theta;
        loss = new_loss;
        grad = new_grad;
        // convex objective: a vanishing decrease means we are at the
        // optimum to machine precision even if the gradient tolerance
        // is not met on an ill-conditioned problem
        if decrease <= 1e-13 * (1.0 + loss.abs()) {
            break;
        }
    }
    if !loss.is_finite() {
        return Err(KgeError::Numerical("objective diverged".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean multiclass cross-entropy of a calibrator's output on a set.
pub fn mean_cross_entropy(data: &CalibrationSet, calibrator: &Calibrator) -> Result<f64> {
    let mut total = 0.0;
    for (row, &label) in data.scores().iter().zip(data.labels()) {
        let pred = calibrate(
            calibrator,
            &ScoreVector {
                values: row.clone(),
                query: (0, 0),
            },
        )?;
        total += -pred.probs[label].max(1e-300).ln();
    }
    Ok(total / data.len() as f64)
}
