//! Symmetric-definite generalized eigenproblems `S v = lambda N v`.
//!
//! The pair is reduced to a standard symmetric problem through the Cholesky
//! factor of the denominator, `N = L L^T`:
//!
//! ```text
//! L^-1 S L^-T u = lambda u,      v = L^-T u
//! ```
//!
//! so the returned vectors are `N`-orthonormal (`v_p^T N v_q = delta_pq`)
//! and maximize the quotient `v^T S v / v^T N v` in descending order.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{GemError, Result};

/// Relative asymmetry accepted before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Full generalized spectrum of one matrix pair, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairSet {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `q` pairs with `values[q]`.
    pub vectors: DMatrix<f64>,
    /// Ordered class pair `(numerator, denominator)` when the problem came
    /// from class moments.
    pub pair: Option<(usize, usize)>,
}

impl EigenPairSet {
    pub fn with_pair(mut self, numerator: usize, denominator: usize) -> Self {
        self.pair = Some((numerator, denominator));
        self
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, q: usize) -> DVector<f64> {
        self.vectors.column(q).into_owned()
    }
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(GemError::ShapeMismatch(format!("{name} is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GemError::NonFinite);
    }
    let scale = m.amax();
    if scale == 0.0 {
        return Ok(());
    }
    let asym = (m - m.transpose()).amax() / scale;
    if asym > SYMMETRY_TOL {
        return Err(GemError::NotSymmetric(asym));
    }
    Ok(())
}

/// Solves `S v = lambda N v` for symmetric `S` and symmetric positive
/// definite `N`.
pub fn solve_pair(s: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<EigenPairSet> {
    check_symmetric(s, "numerator")?;
    check_symmetric(n, "denominator")?;
    if s.shape() != n.shape() {
        return Err(GemError::ShapeMismatch(format!(
            "numerator is {}x{}, denominator is {}x{}",
            s.nrows(),
            s.ncols(),
            n.nrows(),
            n.ncols()
        )));
    }
    let d = s.nrows();
    if d == 0 {
        return Ok(EigenPairSet { values: vec![], vectors: DMatrix::zeros(0, 0), pair: None });
    }

    let n_sym = (n + n.transpose()) * 0.5;
    let chol = Cholesky::new(n_sym).ok_or(GemError::NotPositiveDefinite)?;
    let l = chol.l();

    // reduced = L^-1 S L^-T, formed as L^-1 (L^-1 S)^T using symmetry of S.
    let half = l
        .solve_lower_triangular(s)
        .ok_or(GemError::NotPositiveDefinite)?;
    let reduced = l
        .solve_lower_triangular(&half.transpose())
        .ok_or(GemError::NotPositiveDefinite)?;
    let reduced = (&reduced + reduced.transpose()) * 0.5;

    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut u = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
    }
    let vectors = l
        .tr_solve_lower_triangular(&u)
        .ok_or(GemError::NotPositiveDefinite)?;
    let values = order.iter().map(|&q| eig.eigenvalues[q]).collect();
    Ok(EigenPairSet { values, vectors, pair: None })
}

/// Maximizers of the generic signal-to-noise quotient `v^T S v / v^T N v`.
/// Same contract as [`solve_pair`]; exposed for arbitrary signal and noise
/// matrices.
pub fn solve_quotient(signal: &DMatrix<f64>, noise: &DMatrix<f64>) -> Result<EigenPairSet> {
    solve_pair(signal, noise)
}

pub fn rayleigh_quotient(s: &DMatrix<f64>, n: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    s.quadratic_form_scalar(v) / n.quadratic_form_scalar(v)
}

trait QuadraticForm {
    fn quadratic_form_scalar(&self, v: &DVector<f64>) -> f64;
}

impl QuadraticForm for DMatrix<f64> {
    fn quadratic_form_scalar(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(self * v))
    }
}

/// Statistics of the numerator class used to fix the sign of a detector.
///
/// Both quantities are invariant under invertible linear maps of the input
/// (the detector transforms contravariantly), which makes the resulting
/// sign reproducible across such maps.
pub trait SignReference {
    /// `E[v^T x | y = i]`, together with a bound on its roundoff (used to
    /// decide whether the mean is a tie).
    fn mean_projection(&self, v: &[f64]) -> (f64, f64);
    /// `E[(v^T x)^3 | y = i]`.
    fn cubic_projection(&self, v: &[f64]) -> f64;
}

/// Sign reference from a class mean and the class's rows.
pub struct ClassSample<'a> {
    pub mean: &'a [f64],
    pub rows: &'a dyn Fn(&mut dyn FnMut(&[f64])),
}

impl SignReference for ClassSample<'_> {
    fn mean_projection(&self, v: &[f64]) -> (f64, f64) {
        let m: f64 = self.mean.iter().zip(v).map(|(a, b)| a * b).sum();
        let scale: f64 = self.mean.iter().zip(v).map(|(a, b)| (a * b).abs()).sum();
        (m, scale * 1e-12)
    }

    fn cubic_projection(&self, v: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        (self.rows)(&mut |x: &[f64]| {
            let p: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
            sum += p * p * p;
            n += 1;
        });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// `+1.0` or `-1.0` such that the signed detector has nonnegative mean
/// projection on the numerator class; ties fall back to the third moment,
/// then to `+1`.
pub fn canonical_sign(v: &[f64], reference: &dyn SignReference) -> f64 {
    let (mean, tol) = reference.mean_projection(v);
    if mean.abs() > tol {
        return mean.signum();
    }
    let cubic = reference.cubic_projection(v);
    if cubic < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// A retained generalized eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub vector: Vec<f64>,
    pub eigenvalue: f64,
    pub numerator: usize,
    pub denominator: usize,
    /// Zero-based position within the pair's descending spectrum.
    pub rank: usize,
}

impl Detector {
    pub fn project(&self, x: &[f64]) -> f64 {
        self.vector.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// Keeps the leading eigenvectors with `lambda >= theta`, at most `m_max`
/// of them, in descending order. When `sign` is given each vector is
/// flipped to its canonical sign.
pub fn select_detectors(
    eigs: &EigenPairSet,
    theta: f64,
    m_max: usize,
    sign: Option<&dyn SignReference>,
) -> Result<Vec<Detector>> {
    if !(theta >= 0.0) {
        return Err(GemError::invalid(format!("theta must be >= 0, got {theta}")));
    }
    if m_max == 0 {
        return Err(GemError::invalid("m_max must be at least 1"));
    }
    let (numerator, denominator) = eigs.pair.unwrap_or((0, 0));
    let detectors = eigs
        .values
        .iter()
        .enumerate()
        .take_while(|(_, &lambda)| lambda >= theta)
        .take(m_max)
        .map(|(q, &lambda)| {
            let mut vector: Vec<f64> = eigs.vectors.column(q).iter().copied().collect();
            if let Some(reference) = sign {
                let s = canonical_sign(&vector, reference);
                if s < 0.0 {
                    vector.iter_mut().for_each(|x| *x = -*x);
                }
            }
            Detector { vector, eigenvalue: lambda, numerator, denominator, rank: q }
        })
        .collect();
    Ok(detectors)
}
