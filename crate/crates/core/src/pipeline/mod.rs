//! End-to-end training and inference.
//!
//! A model is a chain of stages (random Fourier maps and GEM layers)
//! followed by a multinomial logistic classifier. Every fit is a pure
//! function of the data, the hyperparameters and the seeds they carry.

mod container;
pub mod search;

use nalgebra::DMatrix;

use crate::classifier::{self, LbfgsOptions, Metrics, MultiLogitModel, TrainOptions};
use crate::error::{GemError, Result};
use crate::featmap::{FeatureLayout, Standardizer};
use crate::geneig::{self, Detector, SignReference};
use crate::ingest::{LabelMap, LabeledDataset};
use crate::moments::{self, MomentStats};
use crate::pairsel::{self, PairPlan, Strategy};
use crate::par;
use crate::rff::{RffMap, RffSpec};

pub use container::MODEL_VERSION;

/// Rows per moment shard. Shards are merged in index order.
const SHARD_ROWS: usize = 4096;
/// Rows per batch at inference time.
const PREDICT_ROWS: usize = 8192;

/// How the class pairs of a layer are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum PairSpec {
    All,
    Hypercube { seed: u64 },
    Uniform { count: usize, seed: u64 },
    Stratified { count: usize, seed: u64 },
    Fixed(PairPlan),
}

impl PairSpec {
    pub fn plan(&self, k: usize) -> Result<PairPlan> {
        match self {
            PairSpec::All => pairsel::all_pairs(k),
            PairSpec::Hypercube { seed } => pairsel::hypercube_pairs(k, *seed),
            PairSpec::Uniform { count, seed } => pairsel::random_pairs(k, *count, *seed, false),
            PairSpec::Stratified { count, seed } => pairsel::random_pairs(k, *count, *seed, true),
            PairSpec::Fixed(plan) => {
                if let Some(&(i, j)) = plan.pairs.iter().find(|&&(i, j)| i >= k || j >= k || i == j) {
                    return Err(GemError::invalid(format!("pair ({}, {}) is not valid for {k} classes", i + 1, j + 1)));
                }
                Ok(plan.clone())
            }
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, PairSpec::Hypercube { .. } | PairSpec::Uniform { .. } | PairSpec::Stratified { .. })
    }

    /// Same strategy with a different seed; non-random specs are unchanged.
    pub fn reseeded(&self, new_seed: u64) -> PairSpec {
        match self {
            PairSpec::Hypercube { .. } => PairSpec::Hypercube { seed: new_seed },
            PairSpec::Uniform { count, .. } => PairSpec::Uniform { count: *count, seed: new_seed },
            PairSpec::Stratified { count, .. } => PairSpec::Stratified { count: *count, seed: new_seed },
            other => other.clone(),
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            PairSpec::All => Strategy::AllPairs,
            PairSpec::Hypercube { .. } => Strategy::Hypercube,
            PairSpec::Uniform { .. } => Strategy::Uniform,
            PairSpec::Stratified { .. } => Strategy::Stratified,
            PairSpec::Fixed(_) => Strategy::Fixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub gamma: f64,
    pub theta: f64,
    pub m_max: usize,
    pub pairs: PairSpec,
    pub passthrough: bool,
}

impl Default for LayerParams {
    fn default() -> Self {
        LayerParams { gamma: 0.1, theta: 1.0, m_max: 3, pairs: PairSpec::All, passthrough: false }
    }
}

impl LayerParams {
    fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(GemError::invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(GemError::invalid(format!("theta must be finite and >= 0, got {}", self.theta)));
        }
        if self.m_max == 0 {
            return Err(GemError::invalid("m_max must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub l2: f64,
    /// Standardize the final representation (zero mean, unit variance).
    pub standardize: bool,
    pub lbfgs: LbfgsOptions,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams { l2: 1e-4, standardize: true, lbfgs: LbfgsOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub rff: Option<RffParams>,
    pub layers: Vec<LayerParams>,
    pub classifier: ClassifierParams,
    /// Upper bound on `layers.len()`.
    pub max_layers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RffParams {
    pub features: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec::gem(LayerParams::default(), ClassifierParams::default())
    }
}

impl PipelineSpec {
    pub fn gem(layer: LayerParams, classifier: ClassifierParams) -> Self {
        PipelineSpec { rff: None, layers: vec![layer], classifier, max_layers: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() > self.max_layers {
            return Err(GemError::invalid(format!(
                "{} GEM layers requested but at most {} are allowed",
                self.layers.len(),
                self.max_layers
            )));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        let l2 = self.classifier.l2;
        if !(l2 >= 0.0) || !l2.is_finite() {
            return Err(GemError::invalid(format!("l2 must be finite and >= 0, got {l2}")));
        }
        if let Some(r) = &self.rff {
            if r.features == 0 || !(r.sigma > 0.0) || !r.sigma.is_finite() {
                return Err(GemError::invalid("random features need D > 0 and sigma > 0"));
            }
        }
        Ok(())
    }
}

/// One GEM feature-extraction layer, frozen after fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct GemLayer {
    pub gamma: f64,
    pub theta: f64,
    pub m_max: usize,
    pub plan: PairPlan,
    pub layout: FeatureLayout,
    /// Applied to the expanded output.
    pub standardizer: Standardizer,
}

impl GemLayer {
    pub fn detectors(&self) -> &[Detector] {
        self.layout.detectors()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut z = self.layout.expand_rows(x)?;
        self.standardizer.apply_in_place(&mut z);
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Rff(RffMap),
    Gem(GemLayer),
}

impl Stage {
    pub fn input_dim(&self) -> usize {
        match self {
            Stage::Rff(m) => m.input_dim(),
            Stage::Gem(g) => g.layout.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Stage::Rff(m) => m.output_dim(),
            Stage::Gem(g) => g.layout.output_dim(),
        }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Stage::Rff(m) => m.apply_rows(x),
            Stage::Gem(g) => g.transform(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Rff(_) => "rff",
            Stage::Gem(_) => "gem",
        }
    }
}

/// A trained model: stage chain plus classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GemModel {
    pub label_map: LabelMap,
    pub input_dim: usize,
    pub stages: Vec<Stage>,
    pub classifier: MultiLogitModel,
    /// Whether the classifier input was standardized (recorded for reports).
    pub standardize: bool,
    /// Metrics on the training set, recomputed through the inference path.
    pub train_metrics: Metrics,
}

impl GemModel {
    pub fn num_classes(&self) -> usize {
        self.classifier.classes
    }

    pub fn gem_layers(&self) -> impl Iterator<Item = &GemLayer> {
        self.stages.iter().filter_map(|s| match s {
            Stage::Gem(g) => Some(g),
            Stage::Rff(_) => None,
        })
    }

    /// Input width of every stage followed by the classifier width.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(self.stages.iter().map(Stage::output_dim));
        w
    }

    /// Checks that adjacent widths agree.
    pub fn check_widths(&self) -> Result<()> {
        let mut width = self.input_dim;
        for stage in &self.stages {
            if stage.input_dim() != width {
                return Err(GemError::Format(format!(
                    "{} stage expects width {} but receives {width}",
                    stage.name(),
                    stage.input_dim()
                )));
            }
            width = stage.output_dim();
        }
        if self.classifier.width != width {
            return Err(GemError::Format(format!(
                "classifier expects width {} but receives {width}",
                self.classifier.width
            )));
        }
        Ok(())
    }

    /// Runs `x` (`n x input_dim`) through the stage chain.
    pub fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            return Err(GemError::DimensionMismatch { expected: self.input_dim, got: x.ncols() });
        }
        let mut cur = x.clone();
        for stage in &self.stages {
            cur = stage.transform(&cur)?;
        }
        Ok(cur)
    }

    pub fn predict_proba_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.classifier.predict_proba_rows(&self.features(x)?)
    }

    /// `n x k` probabilities. Sparse data narrower than the model is
    /// zero-padded.
    pub fn predict_proba(&self, data: &LabeledDataset) -> Result<DMatrix<f64>> {
        if data.dim() > self.input_dim {
            return Err(GemError::DimensionMismatch { expected: self.input_dim, got: data.dim() });
        }
        if data.dim() < self.input_dim && !data.is_sparse() {
            return Err(GemError::DimensionMismatch { expected: self.input_dim, got: data.dim() });
        }
        let n = data.len();
        let mut out = DMatrix::zeros(n, self.num_classes());
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_ROWS).min(n);
            let mut x = DMatrix::zeros(end - start, self.input_dim);
            x.columns_mut(0, data.dim()).copy_from(&data.matrix_rows(start, end));
            out.rows_mut(start, end - start).copy_from(&self.predict_proba_matrix(&x)?);
            start = end;
        }
        Ok(out)
    }

    pub fn evaluate(&self, data: &LabeledDataset) -> Result<Metrics> {
        classifier::evaluate(&self.predict_proba(data)?, data.labels())
    }

    /// Detectors of every GEM layer with their layer index.
    pub fn detector_bank(&self) -> Vec<(usize, &Detector)> {
        self.gem_layers().enumerate().flat_map(|(l, g)| g.detectors().iter().map(move |d| (l, d))).collect()
    }
}

/// Per-class second moments of the rows of `x`, accumulated in fixed-size
/// shards and merged in shard order.
pub fn class_moments(x: &DMatrix<f64>, labels: &[usize], k: usize) -> Result<MomentStats> {
    let n = x.nrows();
    let shards: Vec<(usize, usize)> = (0..n).step_by(SHARD_ROWS).map(|s| (s, (s + SHARD_ROWS).min(n))).collect();
    let parts = par::map(&shards, |&(s, e)| {
        let mut stats = MomentStats::new(x.ncols(), k);
        stats.accumulate_matrix(&x.rows(s, e - s).into_owned(), &labels[s..e]).map(|_| stats)
    });
    let mut total = MomentStats::new(x.ncols(), k);
    for part in parts {
        total.merge_from(&part?)?;
    }
    Ok(total)
}

/// Sign reference backed by the rows of one class.
struct ClassRows<'a> {
    x: &'a DMatrix<f64>,
    members: &'a [usize],
    mean: Vec<f64>,
}

impl<'a> ClassRows<'a> {
    fn new(x: &'a DMatrix<f64>, members: &'a [usize]) -> Self {
        let mut mean = vec![0.0; x.ncols()];
        for &i in members {
            for (m, v) in mean.iter_mut().zip(x.row(i).iter()) {
                *m += v;
            }
        }
        let n = members.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        ClassRows { x, members, mean }
    }
}

impl SignReference for ClassRows<'_> {
    fn mean_projection(&self, v: &[f64]) -> (f64, f64) {
        let m: f64 = self.mean.iter().zip(v).map(|(a, b)| a * b).sum();
        let scale: f64 = self.mean.iter().zip(v).map(|(a, b)| (a * b).abs()).sum();
        (m, 1e-12 * scale)
    }

    fn cubic_projection(&self, v: &[f64]) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .members
            .iter()
            .map(|&i| {
                let p: f64 = self.x.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
                p * p * p
            })
            .sum();
        sum / self.members.len() as f64
    }
}

/// Fits the detectors of one layer on `x` and returns the layer together
/// with its (standardized) output on `x`.
pub fn fit_layer(
    x: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    params: &LayerParams,
    center: bool,
    standardize: bool,
) -> Result<(GemLayer, DMatrix<f64>)> {
    params.validate()?;
    let mut plan = params.pairs.plan(k)?;
    let stats = class_moments(x, labels, k)?;
    plan.pairs.retain(|&(i, j)| {
        let keep = stats.count(i) > 0 && stats.count(j) > 0;
        if !keep {
            log::warn!("skipping pair ({}, {}): a class has no training examples", i + 1, j + 1);
        }
        keep
    });
    let classes: Vec<usize> = plan.classes().into_iter().collect();
    let mut raw = vec![None; k];
    let mut reg = vec![None; k];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    for &c in &classes {
        let m = stats.finalize(c)?;
        reg[c] = Some(moments::regularize(&m, params.gamma)?);
        raw[c] = Some(m);
    }
    let per_pair = par::map(&plan.pairs, |&(i, j)| -> Result<Vec<Detector>> {
        let s = raw[i].as_ref().expect("numerator finalized");
        let n = reg[j].as_ref().expect("denominator finalized");
        let eigs = geneig::solve_pair(s, n)?.with_pair(i, j);
        let reference = ClassRows::new(x, &members[i]);
        geneig::select_detectors(&eigs, params.theta, params.m_max, Some(&reference))
    });
    let mut detectors = Vec::new();
    for (&(i, j), found) in plan.pairs.iter().zip(per_pair) {
        let found = found?;
        log::debug!("pair ({}, {}): {} detectors", i + 1, j + 1, found.len());
        detectors.extend(found);
    }
    if detectors.is_empty() {
        return Err(GemError::EmptyDetectorBank { theta: params.theta });
    }
    let layout = FeatureLayout::new(x.ncols(), detectors, params.passthrough)?;
    let mut z = layout.expand_rows(x)?;
    let standardizer = if standardize {
        Standardizer::fit(&z, center)
    } else {
        Standardizer::identity(z.ncols())
    };
    standardizer.apply_in_place(&mut z);
    let layer = GemLayer {
        gamma: params.gamma,
        theta: params.theta,
        m_max: params.m_max,
        plan,
        layout,
        standardizer,
    };
    Ok((layer, z))
}

/// Fits the chain described by `spec` on `data`.
pub fn fit(data: &LabeledDataset, spec: &PipelineSpec) -> Result<GemModel> {
    spec.validate()?;
    let k = data.num_classes();
    if k < 2 {
        return Err(GemError::invalid(format!("need at least 2 classes, got {k}")));
    }
    if data.is_empty() {
        return Err(GemError::invalid("training set is empty"));
    }
    let labels = data.labels();
    let mut stages = Vec::new();
    let mut x = data.to_matrix();
    if let Some(r) = &spec.rff {
        let map = RffMap::from_spec(RffSpec { input_dim: data.dim(), features: r.features, sigma: r.sigma, seed: r.seed })?;
        x = map.apply_rows(&x)?;
        stages.push(Stage::Rff(map));
    }
    let last = spec.layers.len();
    for (l, params) in spec.layers.iter().enumerate() {
        // Intermediate layers are only rescaled: a diagonal scaling is
        // linear, so the next layer's second moments stay uncentered and
        // its detectors are unchanged at gamma = 0.
        let final_layer = l + 1 == last;
        let standardize = !final_layer || spec.classifier.standardize;
        let (layer, z) = fit_layer(&x, labels, k, params, final_layer, standardize)?;
        log::info!("layer {}: {} detectors, width {}", l + 1, layer.detectors().len(), z.ncols());
        stages.push(Stage::Gem(layer));
        x = z;
    }
    let opts = TrainOptions { lbfgs: spec.classifier.lbfgs.clone(), init: None };
    let (clf, _) = classifier::train(&x, labels, k, spec.classifier.l2, &opts)?;
    let train_metrics = classifier::evaluate(&clf.predict_proba_rows(&x)?, labels)?;
    let model = GemModel {
        label_map: data.label_map().clone(),
        input_dim: data.dim(),
        stages,
        classifier: clf,
        standardize: spec.classifier.standardize,
        train_metrics,
    };
    model.check_widths()?;
    Ok(model)
}

pub fn fit_gem(data: &LabeledDataset, layer: &LayerParams, clf: &ClassifierParams) -> Result<GemModel> {
    fit(data, &PipelineSpec::gem(layer.clone(), clf.clone()))
}

/// Two GEM layers; the second is fitted on the output of the first.
pub fn fit_deep_gem(
    data: &LabeledDataset,
    first: &LayerParams,
    second: &LayerParams,
    clf: &ClassifierParams,
) -> Result<GemModel> {
    let spec = PipelineSpec { rff: None, layers: vec![first.clone(), second.clone()], classifier: clf.clone(), max_layers: 2 };
    fit(data, &spec)
}

/// Random Fourier features followed by one GEM layer.
pub fn fit_gem_rff(data: &LabeledDataset, rff: &RffParams, layer: &LayerParams, clf: &ClassifierParams) -> Result<GemModel> {
    let spec = PipelineSpec { rff: Some(*rff), layers: vec![layer.clone()], classifier: clf.clone(), max_layers: 2 };
    fit(data, &spec)
}

/// Random Fourier features fed straight to the classifier.
pub fn fit_rff(data: &LabeledDataset, rff: &RffParams, clf: &ClassifierParams) -> Result<GemModel> {
    let spec = PipelineSpec { rff: Some(*rff), layers: Vec::new(), classifier: clf.clone(), max_layers: 2 };
    fit(data, &spec)
}

/// `spec` with every randomized pair plan reseeded to `seed`.
pub fn member_spec(spec: &PipelineSpec, seed: u64) -> PipelineSpec {
    let mut s = spec.clone();
    for layer in &mut s.layers {
        layer.pairs = layer.pairs.reseeded(seed);
    }
    s
}

/// `members` models whose pair plans use seeds `base_seed + m`.
pub fn fit_ensemble(data: &LabeledDataset, spec: &PipelineSpec, members: usize, base_seed: u64) -> Result<Vec<GemModel>> {
    if members == 0 {
        return Err(GemError::invalid("ensemble needs at least one member"));
    }
    if members > 1 && !spec.layers.iter().any(|l| l.pairs.is_randomized()) {
        return Err(GemError::invalid("ensemble members would be identical; use a hypercube or random pair strategy"));
    }
    let specs: Vec<PipelineSpec> = (0..members as u64).map(|m| member_spec(spec, base_seed.wrapping_add(m))).collect();
    par::map(&specs, |s| fit(data, s)).into_iter().collect()
}

/// Geometric-mean combination of the members' probabilities.
pub fn predict_ensemble(models: &[GemModel], data: &LabeledDataset) -> Result<DMatrix<f64>> {
    let first = models.first().ok_or_else(|| GemError::invalid("ensemble needs at least one member"))?;
    if let Some(m) = models.iter().find(|m| m.label_map != first.label_map) {
        return Err(GemError::ShapeMismatch(format!(
            "ensemble members disagree on classes ({} vs {})",
            m.num_classes(),
            first.num_classes()
        )));
    }
    let probs: Vec<DMatrix<f64>> = models.iter().map(|m| m.predict_proba(data)).collect::<Result<_>>()?;
    if probs.len() == 1 {
        return Ok(probs.into_iter().next().expect("one member"));
    }
    classifier::ensemble_geomean_rows(&probs)
}

pub fn evaluate_ensemble(models: &[GemModel], data: &LabeledDataset) -> Result<Metrics> {
    classifier::evaluate(&predict_ensemble(models, data)?, data.labels())
}
