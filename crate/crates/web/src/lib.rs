//! Browser demo: decision maps of 2-D tasks, the generalized eigenvectors
//! of a 2x2 moment pair, and the random Fourier kernel approximation.
//!
//! The plain functions are usable (and tested) natively; the
//! `wasm_bindgen` wrappers only convert errors and results.

use gem::geneig;
use gem::moments;
use gem::pipeline::{self, ClassifierParams, LayerParams, RffParams};
use gem::rff::{gaussian_kernel, RffMap};
use gem::synth;
use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMap {
    /// Grid side length.
    pub res: usize,
    /// The grid spans `[-extent, extent]` on both axes.
    pub extent: f64,
    /// Row-major `res x res` probability of class 1, top row first.
    pub probs: Vec<f64>,
    /// Training points as `x, y, label` triples.
    pub points: Vec<f64>,
    /// First-layer detectors as `x, y` pairs; empty after random features.
    pub detectors: Vec<f64>,
    pub train_error: f64,
    pub test_error: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn decision_map(
    task: &str,
    n: usize,
    seed: u64,
    gamma: f64,
    theta: f64,
    m_max: usize,
    rff_features: usize,
    sigma: f64,
    res: usize,
) -> Result<DecisionMap, String> {
    let (make, extent): (fn(usize, u64) -> gem::error::Result<_>, f64) = match task {
        "axis" => (synth::axis_pair_task, 6.0),
        "circle-ring" => (synth::circle_ring, 1.8),
        other => return Err(format!("unknown task {other:?}")),
    };
    if !(2..=400).contains(&res) || n < 4 || n > 20_000 {
        return Err("need 2 <= res <= 400 and 4 <= n <= 20000".into());
    }
    let train = make(n, seed).map_err(|e| e.to_string())?;
    let test = make(n, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
    let layer = LayerParams { gamma, theta, m_max, ..Default::default() };
    let clf = ClassifierParams { l2: 1e-3, ..Default::default() };
    let model = if rff_features > 0 {
        pipeline::fit_gem_rff(&train, &RffParams { features: rff_features, sigma, seed }, &layer, &clf)
    } else {
        pipeline::fit_gem(&train, &layer, &clf)
    }
    .map_err(|e| e.to_string())?;
    let step = 2.0 * extent / (res - 1) as f64;
    let grid = DMatrix::from_fn(res * res, 2, |i, c| {
        let (row, col) = (i / res, i % res);
        if c == 0 {
            -extent + col as f64 * step
        } else {
            extent - row as f64 * step
        }
    });
    let p = model.predict_proba_matrix(&grid).map_err(|e| e.to_string())?;
    let probs = p.column(1).iter().copied().collect();
    let points = train.rows().flat_map(|(r, y)| {
        let v = r.to_dense(2);
        [v[0], v[1], y as f64]
    });
    let detectors = if rff_features > 0 {
        Vec::new()
    } else {
        model.detector_bank().into_iter().flat_map(|(_, d)| d.vector.clone()).collect()
    };
    Ok(DecisionMap {
        res,
        extent,
        probs,
        points: points.collect(),
        detectors,
        train_error: model.train_metrics.error_rate,
        test_error: model.evaluate(&test).map_err(|e| e.to_string())?.error_rate,
    })
}

fn sym2(m: &[f64]) -> Result<DMatrix<f64>, String> {
    match m {
        &[a, b, c] if a > 0.0 && c > 0.0 && a * c - b * b > 0.0 => Ok(DMatrix::from_row_slice(2, 2, &[a, b, b, c])),
        _ => Err("each moment must be [a, b, c] with a > 0 and ac > b^2".into()),
    }
}

/// Generalized eigenpairs of `(S, N + gamma/2 tr(N) I)` for 2x2 moments
/// given as `[a, b, c]` (the matrix `[[a, b], [b, c]]`). Returns
/// `[lambda_1, x_1, y_1, lambda_2, x_2, y_2]`, descending.
pub fn pair_directions(signal: &[f64], noise: &[f64], gamma: f64) -> Result<Vec<f64>, String> {
    let s = sym2(signal)?;
    let n = moments::regularize(&sym2(noise)?, gamma).map_err(|e| e.to_string())?;
    let e = geneig::solve_pair(&s, &n).map_err(|e| e.to_string())?;
    Ok((0..2).flat_map(|q| [e.values[q], e.vectors[(0, q)], e.vectors[(1, q)]]).collect())
}

/// Exact and approximated Gaussian kernel between the origin and points
/// at growing distance along the diagonal. Returns `r, exact, approx`
/// triples for `r` from 0 to `3 sigma`.
pub fn rff_curve(sigma: f64, features: usize, seed: u64, steps: usize) -> Result<Vec<f64>, String> {
    if steps < 2 || steps > 2000 {
        return Err("need 2 <= steps <= 2000".into());
    }
    let map = RffMap::sample(2, features, sigma, seed).map_err(|e| e.to_string())?;
    let origin = [0.0, 0.0];
    let z0 = map.apply(&origin).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * steps);
    for t in 0..steps {
        let r = 3.0 * sigma * t as f64 / (steps - 1) as f64;
        let y = [r / 2f64.sqrt(), r / 2f64.sqrt()];
        let zy = map.apply(&y).map_err(|e| e.to_string())?;
        let approx: f64 = z0.iter().zip(&zy).map(|(a, b)| a * b).sum();
        out.extend([r, gaussian_kernel(&origin, &y, sigma), approx]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct MapResult(DecisionMap);

#[wasm_bindgen]
impl MapResult {
    #[wasm_bindgen(getter)]
    pub fn res(&self) -> usize {
        self.0.res
    }

    #[wasm_bindgen(getter)]
    pub fn extent(&self) -> f64 {
        self.0.extent
    }

    #[wasm_bindgen(getter)]
    pub fn probs(&self) -> Vec<f64> {
        self.0.probs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.0.points.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn detectors(&self) -> Vec<f64> {
        self.0.detectors.clone()
    }

    #[wasm_bindgen(getter, js_name = trainError)]
    pub fn train_error(&self) -> f64 {
        self.0.train_error
    }

    #[wasm_bindgen(getter, js_name = testError)]
    pub fn test_error(&self) -> f64 {
        self.0.test_error
    }
}

#[wasm_bindgen(js_name = decisionMap)]
#[allow(clippy::too_many_arguments)]
pub fn decision_map_js(
    task: &str,
    n: usize,
    seed: u32,
    gamma: f64,
    theta: f64,
    m_max: usize,
    rff_features: usize,
    sigma: f64,
    res: usize,
) -> Result<MapResult, JsError> {
    decision_map(task, n, seed as u64, gamma, theta, m_max, rff_features, sigma, res)
        .map(MapResult)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = pairDirections)]
pub fn pair_directions_js(signal: &[f64], noise: &[f64], gamma: f64) -> Result<Vec<f64>, JsError> {
    pair_directions(signal, noise, gamma).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rffCurve)]
pub fn rff_curve_js(sigma: f64, features: usize, seed: u32, steps: usize) -> Result<Vec<f64>, JsError> {
    rff_curve(sigma, features, seed as u64, steps).map_err(|e| JsError::new(&e))
}
