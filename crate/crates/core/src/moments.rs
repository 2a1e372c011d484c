//! Class-conditional second moments `E[x x^T | y = m]`.
//!
//! Scatter matrices are kept as packed upper triangles (row-major, `p <= q`)
//! so the symmetric halves can never drift apart; [`MomentStats::finalize`]
//! mirrors them into a full matrix. Moments are raw, not mean-centered.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{GemError, Result};
use crate::ingest::{LabeledDataset, Row};

const MAGIC: &[u8; 8] = b"GEMMOMNT";
const VERSION: u32 = 1;

/// Rows per block when accumulating through a matrix product.
const BLOCK_ROWS: usize = 512;

#[inline]
fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

#[inline]
fn row_offset(p: usize, d: usize) -> usize {
    // sum_{r < p} (d - r)
    p * d - p * p.saturating_sub(1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    dim: usize,
    scatter: Vec<Vec<f64>>,
    counts: Vec<u64>,
}

impl MomentStats {
    pub fn new(dim: usize, classes: usize) -> Self {
        MomentStats {
            dim,
            scatter: vec![vec![0.0; packed_len(dim)]; classes],
            counts: vec![0; classes],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, class: usize) -> u64 {
        self.counts[class]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Packed upper triangle of the scatter for `class`.
    pub fn packed_scatter(&self, class: usize) -> &[f64] {
        &self.scatter[class]
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.counts.len() {
            return Err(GemError::LabelOutOfRange { label: y, classes: self.counts.len() });
        }
        Ok(())
    }

    /// Adds `x x^T` to the scatter of class `y`.
    pub fn accumulate(&mut self, x: &[f64], y: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(GemError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        self.check_label(y)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GemError::NonFinite);
        }
        let d = self.dim;
        let s = &mut self.scatter[y];
        let mut idx = 0;
        for p in 0..d {
            let xp = x[p];
            let dst = &mut s[idx..idx + d - p];
            if xp != 0.0 {
                for (t, xq) in dst.iter_mut().zip(&x[p..]) {
                    *t += xp * xq;
                }
            }
            idx += d - p;
        }
        self.counts[y] += 1;
        Ok(())
    }

    pub fn accumulate_row(&mut self, row: Row<'_>, y: usize) -> Result<()> {
        match row {
            Row::Dense(x) => self.accumulate(x, y),
            Row::Sparse { indices, values } => {
                self.check_label(y)?;
                if let Some(&i) = indices.iter().find(|&&i| i as usize >= self.dim) {
                    return Err(GemError::DimensionMismatch { expected: self.dim, got: i as usize + 1 });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(GemError::NonFinite);
                }
                let d = self.dim;
                let s = &mut self.scatter[y];
                for (a, (&p, &xp)) in indices.iter().zip(values).enumerate() {
                    let base = row_offset(p as usize, d) - p as usize;
                    for (&q, &xq) in indices[a..].iter().zip(&values[a..]) {
                        s[base + q as usize] += xp * xq;
                    }
                }
                self.counts[y] += 1;
                Ok(())
            }
        }
    }

    /// Accumulates every example of `data`. Dense data goes through blocked
    /// matrix products; the result equals per-example accumulation up to
    /// summation order.
    pub fn accumulate_dataset(&mut self, data: &LabeledDataset) -> Result<()> {
        if data.dim() != self.dim {
            return Err(GemError::DimensionMismatch { expected: self.dim, got: data.dim() });
        }
        if data.num_classes() > self.num_classes() {
            return Err(GemError::LabelOutOfRange { label: data.num_classes() - 1, classes: self.num_classes() });
        }
        if data.is_sparse() {
            for (row, y) in data.rows() {
                self.accumulate_row(row, y)?;
            }
            return Ok(());
        }
        let d = self.dim;
        for class in 0..self.num_classes() {
            let members: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == class).collect();
            for block in members.chunks(BLOCK_ROWS) {
                let mut x = DMatrix::<f64>::zeros(block.len(), d);
                for (r, &i) in block.iter().enumerate() {
                    if let Row::Dense(v) = data.row(i) {
                        for (c, &val) in v.iter().enumerate() {
                            x[(r, c)] = val;
                        }
                    }
                }
                self.add_gram(class, &x.tr_mul(&x), block.len());
            }
        }
        Ok(())
    }

    /// Accumulates the rows of `x` (`n x d`) with class `labels[i]`.
    pub fn accumulate_matrix(&mut self, x: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
        if x.ncols() != self.dim {
            return Err(GemError::DimensionMismatch { expected: self.dim, got: x.ncols() });
        }
        if labels.len() != x.nrows() {
            return Err(GemError::ShapeMismatch(format!("{} rows but {} labels", x.nrows(), labels.len())));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.num_classes()) {
            return Err(GemError::LabelOutOfRange { label: y, classes: self.num_classes() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GemError::NonFinite);
        }
        for class in 0..self.num_classes() {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            for block in members.chunks(BLOCK_ROWS) {
                let xb = x.select_rows(block);
                self.add_gram(class, &xb.tr_mul(&xb), block.len());
            }
        }
        Ok(())
    }

    fn add_gram(&mut self, class: usize, gram: &DMatrix<f64>, rows: usize) {
        let d = self.dim;
        let s = &mut self.scatter[class];
        let mut idx = 0;
        for p in 0..d {
            for q in p..d {
                s[idx] += gram[(p, q)];
                idx += 1;
            }
        }
        self.counts[class] += rows as u64;
    }

    /// Fieldwise sum.
    pub fn merge(&self, other: &MomentStats) -> Result<MomentStats> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &MomentStats) -> Result<()> {
        if self.dim != other.dim || self.num_classes() != other.num_classes() {
            return Err(GemError::ShapeMismatch(format!(
                "cannot merge d={},k={} with d={},k={}",
                self.dim,
                self.num_classes(),
                other.dim,
                other.num_classes()
            )));
        }
        for (a, b) in self.scatter.iter_mut().zip(&other.scatter) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `scatter_m / count_m` as a full symmetric matrix.
    pub fn finalize(&self, class: usize) -> Result<DMatrix<f64>> {
        self.check_label(class)?;
        let n = self.counts[class];
        if n == 0 {
            return Err(GemError::EmptyClass(class));
        }
        let d = self.dim;
        let inv = 1.0 / n as f64;
        let s = &self.scatter[class];
        let mut out = DMatrix::zeros(d, d);
        let mut idx = 0;
        for p in 0..d {
            for q in p..d {
                let v = s[idx] * inv;
                out[(p, q)] = v;
                out[(q, p)] = v;
                idx += 1;
            }
        }
        Ok(out)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.num_classes() as u64).to_le_bytes())?;
        for (count, s) in self.counts.iter().zip(&self.scatter) {
            w.write_all(&count.to_le_bytes())?;
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<MomentStats> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(GemError::Format("not a moment snapshot".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(GemError::Format(format!("unsupported moment snapshot version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let dim = read_u64(&mut r)? as usize;
        let classes = read_u64(&mut r)? as usize;
        let mut stats = MomentStats::new(dim, classes);
        for class in 0..classes {
            stats.counts[class] = read_u64(&mut r)?;
            for v in stats.scatter[class].iter_mut() {
                *v = f64::from_bits(read_u64(&mut r)?);
            }
        }
        Ok(stats)
    }
}

/// `C + (gamma / d) * Tr(C) * I`.
pub fn regularize(c: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(GemError::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if !c.is_square() {
        return Err(GemError::ShapeMismatch("moment matrix must be square".into()));
    }
    let d = c.nrows();
    let mut out = c.clone();
    if gamma > 0.0 && d > 0 {
        let shift = gamma / d as f64 * c.trace();
        for p in 0..d {
            out[(p, p)] += shift;
        }
    }
    Ok(out)
}

/// Regularized denominator for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedMoment {
    pub matrix: DMatrix<f64>,
    pub class: usize,
    pub gamma: f64,
}

impl RegularizedMoment {
    pub fn from_stats(stats: &MomentStats, class: usize, gamma: f64) -> Result<Self> {
        let c = stats.finalize(class)?;
        Ok(RegularizedMoment { matrix: regularize(&c, gamma)?, class, gamma })
    }
}
