//! Grid search over hyperparameters on a held-out validation split.
//!
//! Candidates are ranked by validation cross-entropy; ties keep the
//! earliest candidate in grid order.

use super::{fit, GemModel, PipelineSpec, RffParams};
use crate::classifier::Metrics;
use crate::error::{GemError, Result};
use crate::ingest::{self, LabeledDataset};

/// Values to try. An empty list keeps the base spec's value. Layer values
/// apply to every GEM layer; `sigma` and `features` need an RFF stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub m_max: Vec<usize>,
    pub l2: Vec<f64>,
    pub sigma: Vec<f64>,
    pub features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub validation_fraction: f64,
    pub split_seed: u64,
    /// Refit the winner on train + validation.
    pub retrain: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { validation_fraction: 0.1, split_seed: 0, retrain: false }
    }
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub spec: PipelineSpec,
    /// Validation metrics, or the reason the fit failed.
    pub outcome: std::result::Result<Metrics, String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trials: Vec<Trial>,
    pub best: usize,
    pub model: GemModel,
}

impl SearchOutcome {
    pub fn best_spec(&self) -> &PipelineSpec {
        &self.trials[self.best].spec
    }
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Every grid point applied to `base`, in lexicographic order over
/// (gamma, theta, m_max, l2, sigma, features).
pub fn candidates(base: &PipelineSpec, grid: &Grid) -> Result<Vec<PipelineSpec>> {
    if base.rff.is_none() && !(grid.sigma.is_empty() && grid.features.is_empty()) {
        return Err(GemError::invalid("sigma/features grids need a random feature stage"));
    }
    let first = base.layers.first().cloned().unwrap_or_default();
    let rff = base.rff.unwrap_or(RffParams { features: 1, sigma: 1.0, seed: 0 });
    let mut out = Vec::new();
    for &gamma in &axis(&grid.gamma, first.gamma) {
        for &theta in &axis(&grid.theta, first.theta) {
            for &m_max in &axis(&grid.m_max, first.m_max) {
                for &l2 in &axis(&grid.l2, base.classifier.l2) {
                    for &sigma in &axis(&grid.sigma, rff.sigma) {
                        for &features in &axis(&grid.features, rff.features) {
                            let mut s = base.clone();
                            for layer in &mut s.layers {
                                if !grid.gamma.is_empty() {
                                    layer.gamma = gamma;
                                }
                                if !grid.theta.is_empty() {
                                    layer.theta = theta;
                                }
                                if !grid.m_max.is_empty() {
                                    layer.m_max = m_max;
                                }
                            }
                            s.classifier.l2 = l2;
                            if let Some(r) = &mut s.rff {
                                r.sigma = sigma;
                                r.features = features;
                            }
                            s.validate()?;
                            out.push(s);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Splits `data` into train/validation, fits every candidate, and returns
/// the best one (refitted on all of `data` when `opts.retrain`).
pub fn grid_search(data: &LabeledDataset, base: &PipelineSpec, grid: &Grid, opts: &SearchOptions) -> Result<SearchOutcome> {
    let f = opts.validation_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(GemError::invalid(format!("validation fraction must lie in (0, 1), got {f}")));
    }
    let parts = ingest::split(data, &[1.0 - f, f], opts.split_seed)?;
    let (train, valid) = (&parts[0], &parts[1]);
    let specs = candidates(base, grid)?;
    let mut trials = Vec::with_capacity(specs.len());
    let mut best: Option<(usize, f64, GemModel)> = None;
    for (idx, spec) in specs.into_iter().enumerate() {
        let outcome = fit(train, &spec).and_then(|m| m.evaluate(valid).map(|metrics| (m, metrics)));
        match outcome {
            Ok((model, metrics)) => {
                log::info!(
                    "candidate {idx}: validation error {:.4}, cross-entropy {:.4}",
                    metrics.error_rate,
                    metrics.cross_entropy
                );
                if best.as_ref().map_or(true, |b| metrics.cross_entropy < b.1) {
                    best = Some((idx, metrics.cross_entropy, model));
                }
                trials.push(Trial { spec, outcome: Ok(metrics) });
            }
            Err(e) => {
                log::warn!("candidate {idx} failed: {e}");
                trials.push(Trial { spec, outcome: Err(e.to_string()) });
            }
        }
    }
    let Some((best, _, model)) = best else {
        return Err(GemError::invalid("every grid candidate failed"));
    };
    let model = if opts.retrain { fit(data, &trials[best].spec)? } else { model };
    Ok(SearchOutcome { trials, best, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::LayerParams;
    use crate::synth;

    #[test]
    fn candidate_count_and_order() {
        let grid = Grid { gamma: vec![0.01, 0.1], l2: vec![1e-3, 1e-2, 1e-1], ..Default::default() };
        let c = candidates(&PipelineSpec::default(), &grid).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c[0].layers[0].gamma, 0.01);
        assert_eq!(c[2].classifier.l2, 1e-1);
        assert_eq!(c[3].layers[0].gamma, 0.1);
    }

    #[test]
    fn rff_axes_need_rff_stage() {
        let grid = Grid { sigma: vec![1.0], ..Default::default() };
        assert!(candidates(&PipelineSpec::default(), &grid).is_err());
    }

    #[test]
    fn failing_candidates_are_skipped() {
        let data = synth::axis_pair_task(400, 8).unwrap();
        let base = PipelineSpec::gem(LayerParams::default(), Default::default());
        let grid = Grid { theta: vec![1e9, 1.0], ..Default::default() };
        let out = grid_search(&data, &base, &grid, &SearchOptions::default()).unwrap();
        assert!(out.trials[0].outcome.is_err());
        assert_eq!(out.best, 1);
    }
}
