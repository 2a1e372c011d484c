//! Random Fourier features for the Gaussian kernel
//! `k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`.
//!
//! `z_r(x) = sqrt(2 / D) cos(w_r^T x + b_r)` with `w_r ~ N(0, I / sigma^2)`
//! and `b_r ~ U[0, 2 pi)`, so `E[z(x)^T z(y)] = k(x, y)`. The frequencies
//! are regenerated from the seed; only `(d, D, sigma, seed)` is persisted.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GemError, Result};
use crate::ingest::Row;
use crate::seeded_rng;

/// Persisted parameters of a map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RffSpec {
    pub input_dim: usize,
    pub features: usize,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    spec: RffSpec,
    /// `D x d`.
    frequencies: DMatrix<f64>,
    phases: Vec<f64>,
    scale: f64,
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

impl RffMap {
    pub fn sample(input_dim: usize, features: usize, sigma: f64, seed: u64) -> Result<RffMap> {
        Self::from_spec(RffSpec { input_dim, features, sigma, seed })
    }

    pub fn from_spec(spec: RffSpec) -> Result<RffMap> {
        if spec.features == 0 {
            return Err(GemError::invalid("number of random features must be positive"));
        }
        if !(spec.sigma > 0.0) || !spec.sigma.is_finite() {
            return Err(GemError::invalid(format!("bandwidth must be positive, got {}", spec.sigma)));
        }
        let mut rng = seeded_rng(spec.seed);
        let normal = Normal::new(0.0, 1.0 / spec.sigma).expect("positive std");
        let (big_d, d) = (spec.features, spec.input_dim);
        let mut frequencies = DMatrix::zeros(big_d, d);
        for r in 0..big_d {
            for c in 0..d {
                frequencies[(r, c)] = normal.sample(&mut rng);
            }
        }
        let phases = (0..big_d).map(|_| rng.random_range(0.0..TAU)).collect();
        Ok(RffMap { spec, frequencies, phases, scale: (2.0 / big_d as f64).sqrt() })
    }

    pub fn spec(&self) -> RffSpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.features
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(GemError::DimensionMismatch { expected: self.spec.input_dim, got: x.len() });
        }
        self.apply_row(Row::Dense(x))
    }

    pub fn apply_row(&self, x: Row<'_>) -> Result<Vec<f64>> {
        let dense;
        let x = match x {
            Row::Dense(v) => v,
            Row::Sparse { .. } => {
                dense = x.to_dense(self.spec.input_dim);
                &dense
            }
        };
        if x.len() != self.spec.input_dim {
            return Err(GemError::DimensionMismatch { expected: self.spec.input_dim, got: x.len() });
        }
        Ok((0..self.spec.features)
            .map(|r| {
                let t: f64 = self.frequencies.row(r).iter().zip(x).map(|(w, v)| w * v).sum();
                self.scale * (t + self.phases[r]).cos()
            })
            .collect())
    }

    /// Maps every row of `x` (`n x d`) to an `n x D` matrix.
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.spec.input_dim {
            return Err(GemError::DimensionMismatch { expected: self.spec.input_dim, got: x.ncols() });
        }
        let mut out = x * self.frequencies.transpose();
        for (r, mut col) in out.column_iter_mut().enumerate() {
            let b = self.phases[r];
            for v in col.iter_mut() {
                *v = self.scale * (*v + b).cos();
            }
        }
        Ok(out)
    }
}
