//! Subcommand implementations. Each returns the staged outputs and a short
//! console message; nothing is written until the whole command succeeded.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gem::classifier::{self, argmax, Metrics};
use gem::ingest::{self, LabeledDataset, LoadOptions};
use gem::pipeline::search::grid_search;
use gem::pipeline::{self, GemModel, PipelineSpec, Stage};
use gem::synth;
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{DataSource, RunConfig, Settings};
use crate::error::{CliError, CliResult};
use crate::export::{self, Shape};
use crate::output::Outputs;

pub fn load_data(src: &DataSource, opts: &LoadOptions) -> CliResult<LabeledDataset> {
    ingest::load(&src.path, &src.format, opts).map_err(|e| CliError::Input(format!("{}: {e}", src.path.display())))
}

pub fn load_model(path: &Path) -> CliResult<GemModel> {
    GemModel::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Loads a set of models that must agree on classes and input width.
pub fn load_models(paths: &[PathBuf]) -> CliResult<Vec<GemModel>> {
    let models = paths.iter().map(|p| load_model(p)).collect::<CliResult<Vec<_>>>()?;
    let first = models.first().ok_or_else(|| CliError::Input("no model given".into()))?;
    for (m, p) in models.iter().zip(paths).skip(1) {
        if m.label_map != first.label_map || m.input_dim != first.input_dim {
            return Err(CliError::Input(format!("{} does not share classes and input width with {}", p.display(), paths[0].display())));
        }
    }
    Ok(models)
}

/// Training and test sets as configured.
fn datasets(s: &Settings) -> CliResult<(LabeledDataset, Option<LabeledDataset>, String)> {
    let data = load_data(&s.data, &LoadOptions::default())?;
    if let Some(t) = &s.test {
        let opts = LoadOptions { label_map: Some(data.label_map().clone()), dim: Some(data.dim()) };
        let test = load_data(t, &opts)?;
        return Ok((data, Some(test), t.path.display().to_string()));
    }
    if s.test_split > 0.0 {
        let parts = ingest::split(&data, &[1.0 - s.test_split, s.test_split], s.split_seed).map_err(CliError::input)?;
        let [train, test]: [LabeledDataset; 2] = parts.try_into().expect("two parts");
        let desc = format!("{:.0}% split of the data, seed {}", 100.0 * s.test_split, s.split_seed);
        return Ok((train, Some(test), desc));
    }
    Ok((data, None, "none".into()))
}

fn metrics_json(m: &Metrics) -> Value {
    json!({
        "examples": m.examples,
        "errors": m.errors,
        "error_rate": m.error_rate,
        "cross_entropy": m.cross_entropy,
    })
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "error {:.2}% ({}/{}), cross-entropy {:.4}",
        100.0 * m.error_rate,
        m.errors,
        m.examples,
        m.cross_entropy
    )
}

fn describe_model(model: &GemModel) -> Vec<String> {
    let widths: Vec<String> = model.widths().iter().map(usize::to_string).collect();
    let mut lines = vec![format!("widths: {} -> classifier", widths.join(" -> "))];
    let mut gem_index = 0;
    for stage in &model.stages {
        match stage {
            Stage::Rff(m) => {
                let s = m.spec();
                lines.push(format!("random features: D = {}, sigma = {}, seed = {}", s.features, s.sigma, s.seed));
            }
            Stage::Gem(g) => {
                gem_index += 1;
                lines.push(format!(
                    "GEM layer {gem_index}: gamma = {}, theta = {}, m_max = {}, {} pairs ({}, seed {}), {} detectors",
                    g.gamma,
                    g.theta,
                    g.m_max,
                    g.plan.len(),
                    g.plan.strategy,
                    g.plan.seed,
                    g.detectors().len()
                ));
            }
        }
    }
    let c = &model.classifier;
    lines.push(format!(
        "classifier: l2 = {}, standardized input = {}, {} iterations, objective {:.6}",
        c.l2, model.standardize, c.iterations, c.objective
    ));
    lines
}

fn model_json(model: &GemModel) -> Value {
    json!({
        "widths": model.widths(),
        "detectors_per_layer": model.gem_layers().map(|g| g.detectors().len()).collect::<Vec<_>>(),
        "pairs_per_layer": model.gem_layers().map(|g| g.plan.len()).collect::<Vec<_>>(),
        "classifier_iterations": model.classifier.iterations,
        "train": metrics_json(&model.train_metrics),
    })
}

fn layout_dump(model: &GemModel) -> String {
    let mut s = String::new();
    for (l, g) in model.gem_layers().enumerate() {
        s.push_str(&format!("# layer {} ({} -> {})\n", l + 1, g.layout.input_dim(), g.layout.output_dim()));
        s.push_str(&g.layout.describe());
    }
    s
}

fn model_name(m: usize, members: usize) -> String {
    if members == 1 {
        "model.gem".into()
    } else {
        format!("model-{:02}.gem", m + 1)
    }
}

pub fn train(cfg: &RunConfig) -> CliResult<(Outputs, String)> {
    let s = cfg.resolve()?;
    let (train, test, test_desc) = datasets(&s)?;
    let spec = s.spec(train.num_classes())?;
    let start = Instant::now();
    let models = if s.ensemble == 1 {
        vec![pipeline::fit(&train, &spec).map_err(CliError::from_fit)?]
    } else {
        pipeline::fit_ensemble(&train, &spec, s.ensemble, s.ensemble_seed).map_err(CliError::from_fit)?
    };
    let fit_secs = start.elapsed().as_secs_f64();

    let mut report = vec![
        "gem train".to_string(),
        format!(
            "data: {} ({} examples, {} features, {} classes)",
            s.data.path.display(),
            train.len(),
            train.dim(),
            train.num_classes()
        ),
        format!("test: {test_desc}"),
    ];
    let mut outputs = Outputs::new();
    let mut members = Vec::new();
    for (m, model) in models.iter().enumerate() {
        let name = model_name(m, models.len());
        let bytes = model.to_bytes().map_err(CliError::compute)?;
        if models.len() > 1 {
            report.push(format!("member {} ({name}):", m + 1));
        }
        report.extend(describe_model(model));
        report.push(format!("train: {}", metrics_line(&model.train_metrics)));
        let mut entry = model_json(model);
        entry["file"] = json!(name);
        if let Some(t) = &test {
            let tm = model.evaluate(t).map_err(CliError::from_fit)?;
            report.push(format!("test: {}", metrics_line(&tm)));
            entry["test"] = metrics_json(&tm);
        }
        members.push(entry);
        outputs.add(name, bytes);
    }
    let mut summary = json!({
        "command": "train",
        "data": s.data.path.display().to_string(),
        "examples": train.len(),
        "features": train.dim(),
        "classes": train.label_map().names(),
        "models": members,
        "fit_seconds": fit_secs,
    });
    if models.len() > 1 {
        let tr = pipeline::evaluate_ensemble(&models, &train).map_err(CliError::from_fit)?;
        report.push(format!("ensemble of {} (geometric mean):", models.len()));
        report.push(format!("train: {}", metrics_line(&tr)));
        summary["ensemble"] = json!({ "train": metrics_json(&tr) });
        if let Some(t) = &test {
            let tm = pipeline::evaluate_ensemble(&models, t).map_err(CliError::from_fit)?;
            report.push(format!("test: {}", metrics_line(&tm)));
            summary["ensemble"]["test"] = metrics_json(&tm);
        }
    }
    report.push(format!("fit time: {fit_secs:.2} s"));
    if s.dump_layout {
        outputs.add("layout.txt", layout_dump(&models[0]));
    }
    let report = report.join("\n") + "\n";
    outputs.add("report.txt", report.clone());
    outputs.add("summary.json", serde_json::to_string_pretty(&summary).expect("json") + "\n");
    outputs.add("config.resolved", cfg.to_text());
    Ok((outputs, report))
}

/// Per-example probabilities of one model or the geometric-mean ensemble
/// of several.
fn probabilities(models: &[GemModel], data: &LabeledDataset) -> CliResult<DMatrix<f64>> {
    if models.len() == 1 {
        models[0].predict_proba(data).map_err(CliError::from_fit)
    } else {
        pipeline::predict_ensemble(models, data).map_err(CliError::from_fit)
    }
}

pub fn predict(models: &[PathBuf], data: &DataSource) -> CliResult<String> {
    let models = load_models(models)?;
    let dataset = load_data(data, &LoadOptions::default())?;
    let p = probabilities(&models, &dataset)?;
    let names = models[0].label_map.names();
    let mut s = String::from("# predicted");
    for n in names {
        s.push_str(&format!(" p({n})"));
    }
    s.push('\n');
    for i in 0..p.nrows() {
        s.push_str(&names[argmax(p.row(i).iter().copied())]);
        for v in p.row(i).iter() {
            s.push_str(&format!(" {v:e}"));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn eval(models: &[PathBuf], data: &DataSource) -> CliResult<(Metrics, Value)> {
    let models = load_models(models)?;
    let opts = LoadOptions { label_map: Some(models[0].label_map.clone()), dim: None };
    let dataset = load_data(data, &opts)?;
    let p = probabilities(&models, &dataset)?;
    let m = classifier::evaluate(&p, dataset.labels()).map_err(CliError::compute)?;
    let summary = json!({
        "command": "eval",
        "data": data.path.display().to_string(),
        "models": models.len(),
        "metrics": metrics_json(&m),
    });
    Ok((m, summary))
}

pub fn eval_text(m: &Metrics) -> String {
    format!(
        "examples {}\nerrors {}\nerror_rate {:.6}\ncross_entropy {:.4}\n",
        m.examples, m.errors, m.error_rate, m.cross_entropy
    )
}

pub fn export_detectors(model: &Path, shape: Option<Shape>) -> CliResult<(Outputs, Vec<String>)> {
    let model = load_model(model)?;
    let mut out = Outputs::new();
    let warnings = export::export(&model, shape, &mut out)?;
    Ok((out, warnings))
}

/// The config with the winning grid values written back.
fn best_config(cfg: &RunConfig, best: &PipelineSpec) -> CliResult<RunConfig> {
    let mut c = cfg.clone();
    if let Some(layer) = best.layers.first() {
        c.set("gamma", layer.gamma.to_string())?;
        c.set("theta", layer.theta.to_string())?;
        c.set("m_max", layer.m_max.to_string())?;
    }
    if let Some(layer) = best.layers.get(1) {
        c.set("layer2.gamma", layer.gamma.to_string())?;
        c.set("layer2.theta", layer.theta.to_string())?;
        c.set("layer2.m_max", layer.m_max.to_string())?;
    }
    c.set("l2", best.classifier.l2.to_string())?;
    if let Some(r) = &best.rff {
        c.set("rff.sigma", r.sigma.to_string())?;
        c.set("rff.features", r.features.to_string())?;
    }
    for k in ["grid.gamma", "grid.theta", "grid.m_max", "grid.l2", "grid.sigma", "grid.features"] {
        c.set(k, String::new())?;
    }
    Ok(c)
}

pub fn search(cfg: &RunConfig) -> CliResult<(Outputs, String)> {
    let s = cfg.resolve()?;
    if s.ensemble > 1 {
        return Err(CliError::Input("search fits single models; set ensemble = 1".into()));
    }
    let (train, test, test_desc) = datasets(&s)?;
    let spec = s.spec(train.num_classes())?;
    let start = Instant::now();
    let found = grid_search(&train, &spec, &s.grid, &s.search).map_err(CliError::from_fit)?;
    let secs = start.elapsed().as_secs_f64();

    let mut table = String::from("# candidate gamma theta m_max l2 sigma features validation_error validation_cross_entropy\n");
    let mut trials = Vec::new();
    for (i, t) in found.trials.iter().enumerate() {
        let l = t.spec.layers.first().cloned().unwrap_or_default();
        let (sigma, features) = t.spec.rff.map_or(("-".to_string(), "-".to_string()), |r| (r.sigma.to_string(), r.features.to_string()));
        let result = match &t.outcome {
            Ok(m) => format!("{:.6} {:.6}", m.error_rate, m.cross_entropy),
            Err(e) => format!("failed: {e}"),
        };
        let mark = if i == found.best { "*" } else { "" };
        table.push_str(&format!(
            "{}{mark} {} {} {} {} {sigma} {features} {result}\n",
            i + 1,
            l.gamma,
            l.theta,
            l.m_max,
            t.spec.classifier.l2
        ));
        trials.push(json!({
            "gamma": l.gamma,
            "theta": l.theta,
            "m_max": l.m_max,
            "l2": t.spec.classifier.l2,
            "validation": t.outcome.as_ref().map(metrics_json).unwrap_or_else(|e| json!({ "error": e })),
        }));
    }
    let best_cfg = best_config(cfg, found.best_spec())?;
    let mut report = vec![
        "gem search".to_string(),
        format!("data: {} ({} examples)", s.data.path.display(), train.len()),
        format!("test: {test_desc}"),
        format!(
            "{} candidates, validation fraction {}, best candidate {}{}",
            found.trials.len(),
            s.search.validation_fraction,
            found.best + 1,
            if s.search.retrain { " (refitted on all training data)" } else { "" }
        ),
    ];
    report.extend(describe_model(&found.model));
    let mut summary = json!({
        "command": "search",
        "trials": trials,
        "best": found.best + 1,
        "model": model_json(&found.model),
        "seconds": secs,
    });
    if let Some(t) = &test {
        let tm = found.model.evaluate(t).map_err(CliError::from_fit)?;
        report.push(format!("test: {}", metrics_line(&tm)));
        summary["model"]["test"] = metrics_json(&tm);
    }
    report.push(format!("search time: {secs:.2} s"));
    let report = report.join("\n") + "\n";
    let mut outputs = Outputs::new();
    outputs.add("model.gem", found.model.to_bytes().map_err(CliError::compute)?);
    outputs.add("search.txt", table);
    outputs.add("best.conf", best_cfg.to_text());
    outputs.add("report.txt", report.clone());
    outputs.add("summary.json", serde_json::to_string_pretty(&summary).expect("json") + "\n");
    outputs.add("config.resolved", cfg.to_text());
    Ok((outputs, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    /// Two Gaussians with second moments diag(4, 1) and diag(1, 4).
    Axis,
    /// A circle band against an inner disk plus outer ring.
    CircleRing,
    /// Random full-rank Gaussian classes.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TextFormat {
    Csv,
    Libsvm,
}

pub fn generate(task: Task, n: usize, seed: u64, dim: usize, classes: usize, format: TextFormat) -> CliResult<Vec<u8>> {
    let data = match task {
        Task::Axis => synth::axis_pair_task(n, seed),
        Task::CircleRing => synth::circle_ring(n, seed),
        Task::Gaussian => {
            if dim == 0 || classes < 2 {
                return Err(CliError::Input("gaussian data needs dim >= 1 and classes >= 2".into()));
            }
            synth::gaussian_mixture(&synth::random_gaussian_classes(dim, classes, 1.0, seed), n, seed.wrapping_add(1))
        }
    }
    .map_err(CliError::input)?;
    let mut bytes = Vec::new();
    match format {
        TextFormat::Csv => ingest::write_csv(&data, &mut bytes),
        TextFormat::Libsvm => ingest::write_libsvm(&data, &mut bytes),
    }
    .map_err(CliError::compute)?;
    Ok(bytes)
}
