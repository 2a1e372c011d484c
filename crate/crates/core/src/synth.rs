//! Seeded synthetic classification tasks.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GemError, Result};
use crate::ingest::{LabelMap, LabeledDataset};
use crate::seeded_rng;

/// A Gaussian class `N(mean, factor factor^T)`.
#[derive(Debug, Clone)]
pub struct GaussianClass {
    pub mean: DVector<f64>,
    pub factor: DMatrix<f64>,
}

impl GaussianClass {
    pub fn new(mean: DVector<f64>, factor: DMatrix<f64>) -> Self {
        GaussianClass { mean, factor }
    }

    /// Axis-aligned covariance `diag(variances)`.
    pub fn diagonal(mean: &[f64], variances: &[f64]) -> Self {
        let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
        GaussianClass {
            mean: DVector::from_column_slice(mean),
            factor: DMatrix::from_diagonal(&DVector::from_vec(sd)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E[x x^T] = Sigma + mu mu^T`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose() + &self.mean * self.mean.transpose()
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let z = DVector::from_fn(self.factor.ncols(), |_, _| sample_normal(rng));
        (&self.mean + &self.factor * z).iter().copied().collect()
    }
}

/// `n` examples cycling through the classes (`i % k`).
pub fn gaussian_mixture(classes: &[GaussianClass], n: usize, seed: u64) -> Result<LabeledDataset> {
    let k = classes.len();
    if k == 0 {
        return Err(GemError::invalid("need at least one class"));
    }
    let d = classes[0].dim();
    let mut rng = seeded_rng(seed);
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % k;
        values.extend(classes[y].sample(&mut rng));
        labels.push(y);
    }
    LabeledDataset::from_dense(d, values, labels, LabelMap::identity(k))
}

/// Mean offset used by [`axis_pair_classes`].
pub const AXIS_TASK_OFFSET: f64 = 1.98;

/// Two Gaussians in the plane whose second moments are `diag(4, 1)` and
/// `diag(1, 4)`. Each class is offset by `offset` along its long axis,
/// with the covariance shrunk so the second moment is unchanged.
pub fn axis_pair_classes(offset: f64) -> [GaussianClass; 2] {
    let v = 4.0 - offset * offset;
    [
        GaussianClass::diagonal(&[offset, 0.0], &[v, 1.0]),
        GaussianClass::diagonal(&[0.0, offset], &[1.0, v]),
    ]
}

pub fn axis_pair_task(n: usize, seed: u64) -> Result<LabeledDataset> {
    gaussian_mixture(&axis_pair_classes(AXIS_TASK_OFFSET), n, seed)
}

fn sample_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_factor(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| sample_normal(rng));
    let q = g.qr().q();
    let scales = DVector::from_fn(d, |_, _| rng.random_range(0.3f64..2.0));
    q * DMatrix::from_diagonal(&scales)
}

/// `k` full-rank Gaussian classes in `d` dimensions with random means and
/// random rotated covariances.
pub fn random_gaussian_classes(d: usize, k: usize, mean_scale: f64, seed: u64) -> Vec<GaussianClass> {
    let mut rng = seeded_rng(seed);
    (0..k)
        .map(|_| {
            let mean = DVector::from_fn(d, |_, _| mean_scale * sample_normal(&mut rng));
            GaussianClass::new(mean, random_factor(d, &mut rng))
        })
        .collect()
}

/// Radii of [`circle_ring`]: class 0 is the band `CIRCLE_BAND`, class 1
/// is an even mixture of the disk `r < INNER_RADIUS` and the band
/// `OUTER_BAND`. The outer band is sized so both classes have
/// `E[r^2] = 1.01`, which makes their second moments identical
/// (`0.505 I`).
pub const CIRCLE_BAND: (f64, f64) = (0.9, 1.1);
pub const INNER_RADIUS: f64 = 0.6;
pub const OUTER_BAND: (f64, f64) = (1.25, 1.455_163_221_085_525);

fn annulus_point(lo: f64, hi: f64, rng: &mut impl Rng) -> (f64, f64) {
    // Uniform in area.
    let r = (lo * lo + (hi * hi - lo * lo) * rng.random::<f64>()).sqrt();
    let t = TAU * rng.random::<f64>();
    (r * t.cos(), r * t.sin())
}

/// Circle-versus-rings task in the plane: radially separable, not
/// linearly separable, and with equal class second moments. Labels
/// alternate `0, 1, 0, ...`.
pub fn circle_ring(n: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = seeded_rng(seed);
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let (lo, hi) = if y == 0 {
            CIRCLE_BAND
        } else if rng.random::<bool>() {
            (0.0, INNER_RADIUS)
        } else {
            OUTER_BAND
        };
        let (a, b) = annulus_point(lo, hi, &mut rng);
        values.push(a);
        values.push(b);
        labels.push(y);
    }
    LabeledDataset::from_dense(2, values, labels, LabelMap::identity(2))
}

/// Class 0 uniform on the unit disk, class 1 uniform on the annulus
/// `1.05 <= r <= 1.5`. Second moments are proportional to the identity.
pub fn disk_annulus(n: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = seeded_rng(seed);
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        let (lo, hi) = if y == 0 { (0.0, 1.0) } else { (1.05, 1.5) };
        let (a, b) = annulus_point(lo, hi, &mut rng);
        values.push(a);
        values.push(b);
        labels.push(y);
    }
    LabeledDataset::from_dense(2, values, labels, LabelMap::identity(2))
}

/// A random `d x d` matrix with singular values spread over
/// `[1, cond]` (condition number exactly `cond`).
pub fn random_transform(d: usize, cond: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed);
    let u = DMatrix::from_fn(d, d, |_, _| sample_normal(&mut rng)).qr().q();
    let v = DMatrix::from_fn(d, d, |_, _| sample_normal(&mut rng)).qr().q();
    let s = DVector::from_fn(d, |i, _| if d == 1 { 1.0 } else { cond.powf(i as f64 / (d - 1) as f64) });
    u * DMatrix::from_diagonal(&s) * v.transpose()
}

/// Applies `x -> A x` to every row of a dense dataset.
pub fn transform_dataset(data: &LabeledDataset, a: &DMatrix<f64>) -> Result<LabeledDataset> {
    if a.ncols() != data.dim() {
        return Err(GemError::DimensionMismatch { expected: a.ncols(), got: data.dim() });
    }
    let d_out = a.nrows();
    let mut values = Vec::with_capacity(data.len() * d_out);
    for (row, _) in data.rows() {
        let x = DVector::from_vec(row.to_dense(data.dim()));
        values.extend((a * x).iter());
    }
    LabeledDataset::from_dense(d_out, values, data.labels().to_vec(), data.label_map().clone())
}
