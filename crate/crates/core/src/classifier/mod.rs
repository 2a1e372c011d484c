//! Multinomial logistic regression, geometric-mean ensembling and
//! evaluation metrics.

pub mod lbfgs;

use nalgebra::{DMatrix, DMatrixView};

pub use lbfgs::{LbfgsOptions, LbfgsReport, Termination};

use crate::error::{GemError, Result};
use crate::par;

/// Lower bound applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Rows per partial gradient. Fixed so the reduction order does not depend
/// on the number of worker threads.
const GRAD_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub lbfgs: LbfgsOptions,
    /// Starting weights (`k x (width + 1)`, row-major). Zero when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { lbfgs: LbfgsOptions::default(), init: None }
    }
}

/// Linear softmax classifier. `weights` is `k x (width + 1)` row-major with
/// the bias in the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLogitModel {
    pub classes: usize,
    pub width: usize,
    pub weights: Vec<f64>,
    pub l2: f64,
    pub iterations: usize,
    pub objective: f64,
}

impl MultiLogitModel {
    pub fn zeros(classes: usize, width: usize) -> Self {
        MultiLogitModel {
            classes,
            width,
            weights: vec![0.0; classes * (width + 1)],
            l2: 0.0,
            iterations: 0,
            objective: f64::NAN,
        }
    }

    fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.classes, self.width + 1, &self.weights)
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.width {
            return Err(GemError::DimensionMismatch { expected: self.width, got: x.len() });
        }
        let stride = self.width + 1;
        Ok((0..self.classes)
            .map(|c| {
                let w = &self.weights[c * stride..(c + 1) * stride];
                w[..self.width].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.width]
            })
            .collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.scores(x)?;
        softmax_in_place(&mut s);
        Ok(s)
    }

    /// `n x k` class probabilities for the rows of `x`.
    pub fn predict_proba_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.width {
            return Err(GemError::DimensionMismatch { expected: self.width, got: x.ncols() });
        }
        let mut s = scores_rows(&self.weight_matrix(), x.as_view());
        for mut row in s.row_iter_mut() {
            let mut buf: Vec<f64> = row.iter().copied().collect();
            softmax_in_place(&mut buf);
            for (dst, v) in row.iter_mut().zip(buf) {
                *dst = v;
            }
        }
        Ok(s)
    }
}

pub fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut total = 0.0;
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in s.iter_mut() {
        *v /= total;
    }
}

fn scores_rows(w: &DMatrix<f64>, x: DMatrixView<'_, f64>) -> DMatrix<f64> {
    let width = x.ncols();
    let feat = w.columns(0, width);
    let mut s = x * feat.transpose();
    for c in 0..w.nrows() {
        let b = w[(c, width)];
        for v in s.column_mut(c).iter_mut() {
            *v += b;
        }
    }
    s
}

/// Average cross-entropy plus `(l2 / 2) |W|^2` (bias excluded) and its
/// gradient with respect to the row-major weights.
pub fn objective_and_gradient(
    x: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    l2: f64,
    weights: &[f64],
    grad: &mut [f64],
) -> f64 {
    let n = x.nrows();
    let width = x.ncols();
    let stride = width + 1;
    let w = DMatrix::from_row_slice(classes, stride, weights);
    let chunks: Vec<(usize, usize)> =
        (0..n).step_by(GRAD_CHUNK).map(|s| (s, GRAD_CHUNK.min(n - s))).collect();

    let partials: Vec<(f64, DMatrix<f64>)> = par::map(&chunks, |&(start, len)| {
        let xs = x.rows(start, len);
        let mut s = scores_rows(&w, xs);
        let mut loss = 0.0;
        for r in 0..len {
            let y = labels[start + r];
            let max = (0..classes).fold(f64::NEG_INFINITY, |m, c| m.max(s[(r, c)]));
            let shifted_y = s[(r, y)] - max;
            let mut total = 0.0;
            for c in 0..classes {
                let e = (s[(r, c)] - max).exp();
                s[(r, c)] = e;
                total += e;
            }
            loss += total.ln() - shifted_y;
            for c in 0..classes {
                s[(r, c)] /= total;
            }
            s[(r, y)] -= 1.0;
        }
        // s now holds P - Y.
        let mut g = DMatrix::zeros(classes, stride);
        g.columns_mut(0, width).copy_from(&(s.transpose() * xs));
        for c in 0..classes {
            g[(c, width)] = s.column(c).sum();
        }
        (loss, g)
    });

    let mut loss = 0.0;
    let mut g = DMatrix::<f64>::zeros(classes, stride);
    for (l, pg) in partials {
        loss += l;
        g += pg;
    }
    let inv_n = 1.0 / n.max(1) as f64;
    let mut penalty = 0.0;
    for c in 0..classes {
        for f in 0..stride {
            let v = g[(c, f)] * inv_n;
            grad[c * stride + f] = if f < width {
                let wv = weights[c * stride + f];
                penalty += wv * wv;
                v + l2 * wv
            } else {
                v
            };
        }
    }
    loss * inv_n + 0.5 * l2 * penalty
}

/// Fits a `classes`-way multinomial logistic model by L-BFGS from zero (or
/// `opts.init`). Deterministic given the inputs.
pub fn train(
    x: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    l2: f64,
    opts: &TrainOptions,
) -> Result<(MultiLogitModel, LbfgsReport)> {
    if x.nrows() == 0 || labels.len() != x.nrows() {
        return Err(GemError::ShapeMismatch(format!("{} rows but {} labels", x.nrows(), labels.len())));
    }
    if classes == 0 {
        return Err(GemError::invalid("need at least one class"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(GemError::LabelOutOfRange { label: y, classes });
    }
    if !(l2 >= 0.0) || !l2.is_finite() {
        return Err(GemError::invalid(format!("l2 must be finite and >= 0, got {l2}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GemError::NonFinite);
    }
    let width = x.ncols();
    let mut w = match &opts.init {
        Some(init) if init.len() == classes * (width + 1) => init.clone(),
        Some(init) => {
            return Err(GemError::DimensionMismatch { expected: classes * (width + 1), got: init.len() })
        }
        None => vec![0.0; classes * (width + 1)],
    };
    let report = lbfgs::minimize(&mut w, &opts.lbfgs, |w, g| objective_and_gradient(x, labels, classes, l2, w, g));
    log::debug!(
        "multilogit: {} iterations, objective {:.6}, |g|inf {:.2e}, {:?}",
        report.iterations,
        report.objective,
        report.grad_inf_norm,
        report.termination
    );
    let model = MultiLogitModel {
        classes,
        width,
        weights: w,
        l2,
        iterations: report.iterations,
        objective: report.objective,
    };
    Ok((model, report))
}

/// Entrywise geometric mean of the members, renormalized. Each member is
/// floored at [`PROB_FLOOR`] first. The per-class log sums are accumulated
/// in sorted order, so the result does not depend on member order.
pub fn ensemble_geomean(members: &[&[f64]]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| GemError::invalid("ensemble needs at least one member"))?;
    let k = first.len();
    if let Some(m) = members.iter().find(|m| m.len() != k) {
        return Err(GemError::DimensionMismatch { expected: k, got: m.len() });
    }
    let count = members.len() as f64;
    let mut logs = vec![0.0; k];
    let mut column = Vec::with_capacity(members.len());
    for (c, slot) in logs.iter_mut().enumerate() {
        column.clear();
        column.extend(members.iter().map(|m| m[c].max(PROB_FLOOR).ln()));
        column.sort_by(f64::total_cmp);
        *slot = column.iter().sum::<f64>() / count;
    }
    softmax_in_place(&mut logs);
    Ok(logs)
}

/// Row-wise [`ensemble_geomean`] over `n x k` probability matrices.
pub fn ensemble_geomean_rows(members: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = members.first().ok_or_else(|| GemError::invalid("ensemble needs at least one member"))?;
    if let Some(m) = members.iter().find(|m| m.shape() != first.shape()) {
        return Err(GemError::ShapeMismatch(format!("member shape {:?} vs {:?}", m.shape(), first.shape())));
    }
    let (n, k) = first.shape();
    let mut out = DMatrix::zeros(n, k);
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(k); members.len()];
    for i in 0..n {
        for (buf, m) in rows.iter_mut().zip(members) {
            buf.clear();
            buf.extend(m.row(i).iter());
        }
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let p = ensemble_geomean(&refs)?;
        for (c, v) in p.into_iter().enumerate() {
            out[(i, c)] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub examples: usize,
    pub errors: usize,
    pub error_rate: f64,
    /// Mean of `-ln max(p_y, PROB_FLOOR)`.
    pub cross_entropy: f64,
}

/// Argmax error and mean cross-entropy of `n x k` probabilities.
pub fn evaluate(probs: &DMatrix<f64>, labels: &[usize]) -> Result<Metrics> {
    if probs.nrows() != labels.len() {
        return Err(GemError::ShapeMismatch(format!("{} predictions for {} labels", probs.nrows(), labels.len())));
    }
    let k = probs.ncols();
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(GemError::LabelOutOfRange { label: y, classes: k });
    }
    let mut errors = 0;
    let mut ce = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = probs.row(i);
        if argmax(row.iter().copied()) != y {
            errors += 1;
        }
        ce -= row[y].max(PROB_FLOOR).ln();
    }
    let n = labels.len();
    let denom = n.max(1) as f64;
    Ok(Metrics { examples: n, errors, error_rate: errors as f64 / denom, cross_entropy: ce / denom })
}

/// Index of the largest value; the first one on ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
