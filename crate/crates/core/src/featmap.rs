//! Nonlinear expansion of detector projections.
//!
//! Each detector `v` contributes six features
//! `max(0, delta * v^T x)^(alpha / 2)` for `delta in {+1, -1}` and
//! `alpha in {1, 2, 3}`. Output index of (detector `r`, `alpha`, `delta`) is
//! `6 r + (delta == -1) * 3 + (alpha - 1)`.

use nalgebra::DMatrix;

use crate::error::{GemError, Result};
use crate::geneig::Detector;

pub const FEATURES_PER_DETECTOR: usize = 6;

/// `max(0, delta * p)^(alpha / 2)`.
#[inline]
pub fn psi(p: f64, alpha: u8, delta: i8) -> f64 {
    debug_assert!((1..=3).contains(&alpha) && (delta == 1 || delta == -1));
    let t = if delta > 0 { p } else { -p };
    if t <= 0.0 {
        return 0.0;
    }
    match alpha {
        1 => t.sqrt(),
        2 => t,
        _ => t * t.sqrt(),
    }
}

#[inline]
pub fn feature_index(rank: usize, alpha: u8, delta: i8) -> usize {
    FEATURES_PER_DETECTOR * rank + if delta < 0 { 3 } else { 0 } + (alpha as usize - 1)
}

/// Writes the six basis values of one projection into `out[..6]`.
#[inline]
pub fn expand_projection(p: f64, out: &mut [f64]) {
    let (pos, neg) = if p > 0.0 { (p, 0.0) } else { (0.0, -p) };
    for (block, t) in [(0, pos), (3, neg)] {
        if t > 0.0 {
            let r = t.sqrt();
            out[block] = r;
            out[block + 1] = t;
            out[block + 2] = t * r;
        } else {
            out[block..block + 3].fill(0.0);
        }
    }
}

/// Immutable description of the expanded representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    input_dim: usize,
    detectors: Vec<Detector>,
    passthrough: bool,
    // Detector vectors as rows, for batched projection.
    weights: DMatrix<f64>,
}

impl FeatureLayout {
    pub fn new(input_dim: usize, detectors: Vec<Detector>, passthrough: bool) -> Result<Self> {
        if let Some(d) = detectors.iter().find(|d| d.vector.len() != input_dim) {
            return Err(GemError::DimensionMismatch { expected: input_dim, got: d.vector.len() });
        }
        let mut weights = DMatrix::zeros(detectors.len(), input_dim);
        for (r, d) in detectors.iter().enumerate() {
            for (c, &v) in d.vector.iter().enumerate() {
                weights[(r, c)] = v;
            }
        }
        Ok(FeatureLayout { input_dim, detectors, passthrough, weights })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    pub fn passthrough(&self) -> bool {
        self.passthrough
    }

    pub fn output_dim(&self) -> usize {
        FEATURES_PER_DETECTOR * self.detectors.len() + if self.passthrough { self.input_dim } else { 0 }
    }

    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(GemError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut out = vec![0.0; self.output_dim()];
        for (r, d) in self.detectors.iter().enumerate() {
            let p = d.project(x);
            expand_projection(p, &mut out[FEATURES_PER_DETECTOR * r..FEATURES_PER_DETECTOR * (r + 1)]);
        }
        if self.passthrough {
            out[FEATURES_PER_DETECTOR * self.detectors.len()..].copy_from_slice(x);
        }
        Ok(out)
    }

    /// Expands every row of `x` (`n x input_dim`).
    pub fn expand_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            return Err(GemError::DimensionMismatch { expected: self.input_dim, got: x.ncols() });
        }
        let n = x.nrows();
        let m = self.detectors.len();
        let proj = x * self.weights.transpose();
        let width = self.output_dim();
        let mut outm = DMatrix::zeros(n, width);
        let mut buf = [0.0; FEATURES_PER_DETECTOR];
        for r in 0..m {
            for i in 0..n {
                expand_projection(proj[(i, r)], &mut buf);
                for (a, v) in buf.iter().enumerate() {
                    outm[(i, FEATURES_PER_DETECTOR * r + a)] = *v;
                }
            }
        }
        if self.passthrough {
            outm.columns_mut(FEATURES_PER_DETECTOR * m, self.input_dim).copy_from(x);
        }
        Ok(outm)
    }

    /// Human-readable layout listing, one output column per line.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (r, d) in self.detectors.iter().enumerate() {
            for delta in [1i8, -1] {
                for alpha in 1u8..=3 {
                    s.push_str(&format!(
                        "{}\tdetector={} pair=({},{}) rank={} lambda={:.6} alpha={} delta={:+}\n",
                        feature_index(r, alpha, delta),
                        r,
                        d.numerator + 1,
                        d.denominator + 1,
                        d.rank + 1,
                        d.eigenvalue,
                        alpha,
                        delta
                    ));
                }
            }
        }
        if self.passthrough {
            let base = FEATURES_PER_DETECTOR * self.detectors.len();
            for c in 0..self.input_dim {
                s.push_str(&format!("{}\tinput={}\n", base + c, c));
            }
        }
        s
    }
}

/// Per-feature affine normalization frozen from a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Zero mean and unit variance per column when `center`; otherwise
    /// only divides by the root mean square (a linear map). Constant
    /// columns keep scale 1.
    pub fn fit(x: &DMatrix<f64>, center: bool) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let w = x.ncols();
        let mut mean = vec![0.0; w];
        let mut scale = vec![1.0; w];
        for c in 0..w {
            let col = x.column(c);
            let mu = if center { col.sum() / n } else { 0.0 };
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean[c] = mu;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + mu.abs()) && sd.is_finite() {
                scale[c] = sd;
            }
        }
        Standardizer { mean, scale }
    }

    pub fn identity(width: usize) -> Standardizer {
        Standardizer { mean: vec![0.0; width], scale: vec![1.0; width] }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_in_place(&self, x: &mut DMatrix<f64>) {
        for c in 0..x.ncols() {
            let (mu, s) = (self.mean[c], self.scale[c]);
            for v in x.column_mut(c).iter_mut() {
                *v = (*v - mu) / s;
            }
        }
    }

    pub fn apply_row(&self, x: &mut [f64]) {
        for ((v, mu), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - mu) / s;
        }
    }
}
