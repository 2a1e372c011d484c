//! Flat `key = value` run configuration.
//!
//! Every key has a default; files and `--set` overrides may only name keys
//! from [`KEYS`]. The resolved configuration (all keys, in table order) is
//! written next to every run's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gem::ingest::{Format, LabelColumn};
use gem::pairsel::PairPlan;
use gem::pipeline::search::{Grid, SearchOptions};
use gem::pipeline::{ClassifierParams, LayerParams, PairSpec, PipelineSpec, RffParams};

use crate::error::{CliError, CliResult};

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const KEYS: &[Key] = &[
    key("data", "", "training data file"),
    key("format", "csv", "csv (label first), csv-last, libsvm or idx"),
    key("labels", "", "idx label file for `data`"),
    key("test_data", "", "test data file, same format as `data`"),
    key("test_labels", "", "idx label file for `test_data`"),
    key("test_split", "0", "fraction of `data` held out as test when `test_data` is empty"),
    key("split_seed", "0", "seed of the test split"),
    key("rff.features", "0", "random Fourier features before the GEM layers; 0 disables"),
    key("rff.sigma", "1", "Gaussian kernel bandwidth"),
    key("rff.seed", "0", "seed of the random feature draw"),
    key("layers", "1", "number of GEM layers (0 trains the classifier on the input or random features)"),
    key("max_layers", "2", "upper bound on `layers`"),
    key("gamma", "0.1", "denominator ridge, as a fraction of the mean eigenvalue"),
    key("theta", "1", "minimum generalized eigenvalue of a kept detector"),
    key("m_max", "3", "detectors kept per class pair"),
    key("pairs", "all", "all, hypercube, uniform, stratified or fixed"),
    key("pairs.count", "0", "number of pairs for uniform and stratified plans"),
    key("pairs.seed", "0", "seed of randomized pair plans"),
    key("pairs.file", "", "pair list for fixed plans, one `i j` per line (1-based)"),
    key("passthrough", "false", "append the layer input to its features"),
    key("layer2.gamma", "", "gamma of the second layer; empty copies `gamma`"),
    key("layer2.theta", "", "theta of the second layer; empty copies `theta`"),
    key("layer2.m_max", "", "m_max of the second layer; empty copies `m_max`"),
    key("l2", "1e-4", "ridge penalty of the logistic regression"),
    key("standardize", "true", "standardize the classifier input"),
    key("max_iter", "500", "L-BFGS iteration cap"),
    key("grad_tol", "1e-6", "L-BFGS gradient tolerance (max norm)"),
    key("ensemble", "1", "ensemble members; each reseeds the pair plans"),
    key("ensemble.seed", "0", "seed of the first member; member m uses seed + m"),
    key("grid.gamma", "", "search: comma-separated gamma values"),
    key("grid.theta", "", "search: comma-separated theta values"),
    key("grid.m_max", "", "search: comma-separated m_max values"),
    key("grid.l2", "", "search: comma-separated l2 values"),
    key("grid.sigma", "", "search: comma-separated rff.sigma values"),
    key("grid.features", "", "search: comma-separated rff.features values"),
    key("search.validation", "0.1", "search: validation fraction"),
    key("search.seed", "0", "search: validation split seed"),
    key("search.retrain", "true", "search: refit the winner on all training data"),
    key("out", "gem-out", "output directory"),
    key("threads", "0", "worker threads; 0 uses every core"),
    key("dump_layout", "false", "write the feature layout of every layer to layout.txt"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn lookup(name: &str) -> CliResult<&'static Key> {
    KEYS.iter().find(|k| k.name == name).ok_or_else(|| CliError::Input(format!("unknown configuration key {name:?}")))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("{origin}:{}: expected `key = value`", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect() }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
            let mut seen = std::collections::BTreeSet::new();
            for (k, v) in parse_pairs(&text, &path.display().to_string())? {
                if !seen.insert(k.clone()) {
                    return Err(CliError::Input(format!("{}: key {k:?} set twice", path.display())));
                }
                cfg.set(&k, v)?;
            }
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| CliError::Input(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim().to_string())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, name: &str, value: String) -> CliResult<()> {
        let key = lookup(name)?;
        self.values.insert(key.name, value);
        Ok(())
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("key {name} missing from table"))
    }

    fn parse<T: FromStr>(&self, name: &str) -> CliResult<T> {
        let raw = self.raw(name);
        raw.parse().map_err(|_| CliError::Input(format!("{name} = {raw:?} is not a valid value")))
    }

    fn flag(&self, name: &str) -> CliResult<bool> {
        match self.raw(name) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(CliError::Input(format!("{name} = {other:?} is not a boolean"))),
        }
    }

    fn list<T: FromStr>(&self, name: &str) -> CliResult<Vec<T>> {
        let raw = self.raw(name);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| s.trim().parse().map_err(|_| CliError::Input(format!("{name}: {s:?} is not a valid value"))))
            .collect()
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        let raw = self.raw(name);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// Every key in table order, as a loadable config file.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            s.push_str(&format!("{} = {}\n", k.name, self.raw(k.name)));
        }
        s
    }

    /// Type-checks and validates every key without touching any data.
    pub fn resolve(&self) -> CliResult<Settings> {
        let format = self.raw("format").to_string();
        let data = self.path("data").ok_or_else(|| CliError::Input("`data` is required".into()))?;
        let data = DataSource::new(data, &format, self.path("labels"))?;
        let test = self.path("test_data").map(|p| DataSource::new(p, &format, self.path("test_labels"))).transpose()?;
        let test_split: f64 = self.parse("test_split")?;
        if !(0.0..1.0).contains(&test_split) {
            return Err(CliError::Input(format!("test_split must lie in [0, 1), got {test_split}")));
        }
        if test.is_some() && test_split > 0.0 {
            return Err(CliError::Input("set either test_data or test_split, not both".into()));
        }
        let pairs = match self.raw("pairs") {
            "all" => PairChoice::Spec(PairSpec::All),
            "hypercube" => PairChoice::Spec(PairSpec::Hypercube { seed: self.parse("pairs.seed")? }),
            "uniform" => PairChoice::Spec(PairSpec::Uniform { count: self.positive("pairs.count")?, seed: self.parse("pairs.seed")? }),
            "stratified" => {
                PairChoice::Spec(PairSpec::Stratified { count: self.positive("pairs.count")?, seed: self.parse("pairs.seed")? })
            }
            "fixed" => PairChoice::File(self.path("pairs.file").ok_or_else(|| CliError::Input("pairs = fixed needs pairs.file".into()))?),
            other => return Err(CliError::Input(format!("unknown pair strategy {other:?}"))),
        };
        let first = LayerParams {
            gamma: self.parse("gamma")?,
            theta: self.parse("theta")?,
            m_max: self.parse("m_max")?,
            pairs: PairSpec::All,
            passthrough: self.flag("passthrough")?,
        };
        let or_first = |name: &str, base: f64| -> CliResult<f64> {
            if self.raw(name).is_empty() {
                Ok(base)
            } else {
                self.parse(name)
            }
        };
        let second = LayerParams {
            gamma: or_first("layer2.gamma", first.gamma)?,
            theta: or_first("layer2.theta", first.theta)?,
            m_max: if self.raw("layer2.m_max").is_empty() { first.m_max } else { self.parse("layer2.m_max")? },
            ..first.clone()
        };
        let layers: usize = self.parse("layers")?;
        let features: usize = self.parse("rff.features")?;
        let mut clf = ClassifierParams { l2: self.parse("l2")?, standardize: self.flag("standardize")?, ..Default::default() };
        clf.lbfgs.max_iter = self.parse("max_iter")?;
        clf.lbfgs.grad_tol = self.parse("grad_tol")?;
        let template = PipelineSpec {
            rff: (features > 0).then(|| -> CliResult<RffParams> {
                Ok(RffParams { features, sigma: self.parse("rff.sigma")?, seed: self.parse("rff.seed")? })
            }).transpose()?,
            layers: (0..layers).map(|l| if l == 0 { first.clone() } else { second.clone() }).collect(),
            classifier: clf,
            max_layers: self.parse("max_layers")?,
        };
        template.validate().map_err(CliError::input)?;
        let ensemble: usize = self.parse("ensemble")?;
        if ensemble == 0 {
            return Err(CliError::Input("ensemble must be at least 1".into()));
        }
        let randomized = matches!(&pairs, PairChoice::Spec(p) if p.is_randomized());
        if ensemble > 1 && !(randomized && layers > 0) {
            return Err(CliError::Input("ensemble > 1 needs a GEM layer with a randomized pair plan".into()));
        }
        let grid = Grid {
            gamma: self.list("grid.gamma")?,
            theta: self.list("grid.theta")?,
            m_max: self.list("grid.m_max")?,
            l2: self.list("grid.l2")?,
            sigma: self.list("grid.sigma")?,
            features: self.list("grid.features")?,
        };
        let search = SearchOptions {
            validation_fraction: self.parse("search.validation")?,
            split_seed: self.parse("search.seed")?,
            retrain: self.flag("search.retrain")?,
        };
        Ok(Settings {
            data,
            test,
            test_split,
            split_seed: self.parse("split_seed")?,
            template,
            pairs,
            ensemble,
            ensemble_seed: self.parse("ensemble.seed")?,
            grid,
            search,
            out: PathBuf::from(self.raw("out")),
            threads: self.parse("threads")?,
            dump_layout: self.flag("dump_layout")?,
        })
    }

    fn positive(&self, name: &str) -> CliResult<usize> {
        let v: usize = self.parse(name)?;
        if v == 0 {
            return Err(CliError::Input(format!("{name} must be positive")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub path: PathBuf,
    pub format: Format,
}

/// Parses a format name; idx needs its label file.
pub fn parse_format(name: &str, labels: Option<PathBuf>) -> CliResult<Format> {
    Ok(match name {
        "csv" => Format::Csv { label: LabelColumn::First },
        "csv-last" => Format::Csv { label: LabelColumn::Last },
        "libsvm" => Format::Libsvm,
        "idx" => Format::Idx { labels: labels.ok_or_else(|| CliError::Input("idx data needs a label file".into()))? },
        other => return Err(CliError::Input(format!("unknown data format {other:?}"))),
    })
}

impl DataSource {
    pub fn new(path: PathBuf, format: &str, labels: Option<PathBuf>) -> CliResult<Self> {
        Ok(DataSource { path, format: parse_format(format, labels)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairChoice {
    Spec(PairSpec),
    File(PathBuf),
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data: DataSource,
    pub test: Option<DataSource>,
    pub test_split: f64,
    pub split_seed: u64,
    /// Pipeline with every layer's pairs still set to `All`.
    pub template: PipelineSpec,
    pub pairs: PairChoice,
    pub ensemble: usize,
    pub ensemble_seed: u64,
    pub grid: Grid,
    pub search: SearchOptions,
    pub out: PathBuf,
    pub threads: usize,
    pub dump_layout: bool,
}

impl Settings {
    /// The pipeline for `k` classes, with the pair plan filled in.
    pub fn spec(&self, k: usize) -> CliResult<PipelineSpec> {
        let pairs = match &self.pairs {
            PairChoice::Spec(p) => p.clone(),
            PairChoice::File(path) => {
                let file = std::fs::File::open(path)
                    .map_err(|e| CliError::Input(format!("cannot open pair file {}: {e}", path.display())))?;
                let plan: PairPlan = PairPlan::from_text(std::io::BufReader::new(file), k).map_err(CliError::input)?;
                PairSpec::Fixed(plan)
            }
        };
        let mut spec = self.template.clone();
        for layer in &mut spec.layers {
            layer.pairs = pairs.clone();
        }
        Ok(spec)
    }
}
