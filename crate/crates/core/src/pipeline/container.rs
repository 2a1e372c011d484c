//! Single-file model container.
//!
//! ```text
//! "GEMMODEL"  u32 version
//! section*    4-byte tag, u64 payload length, payload
//! ```
//!
//! Sections appear in the order `HEAD`, `STGS`, `CLSF`, `MTRC`, `END.`.
//! Integers are u64 and floats f64, all little-endian; flags are single
//! bytes. Strings are a u64 byte length followed by UTF-8.
//!
//! * `HEAD`: input width, class count, one string per class name.
//! * `STGS`: stage count, then per stage a kind byte (1 = random Fourier
//!   map, 2 = GEM layer) and its payload.
//!   - map: input width, D, sigma, seed (frequencies are regenerated).
//!   - layer: gamma, theta, m_max, passthrough flag, strategy byte, plan
//!     seed, pair count, pairs `(i, j)`, input width, detector count, per
//!     detector `(i, j, rank, lambda, vector)`, output width, standardizer
//!     means, standardizer scales.
//! * `CLSF`: classes, width, l2, iterations, objective, standardize flag,
//!   `classes x (width + 1)` weights row-major (bias last).
//! * `MTRC`: training examples, errors, error rate, cross-entropy.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GemLayer, GemModel, Stage};
use crate::classifier::{Metrics, MultiLogitModel};
use crate::error::{GemError, Result};
use crate::featmap::{FeatureLayout, Standardizer};
use crate::geneig::Detector;
use crate::ingest::LabelMap;
use crate::pairsel::{PairPlan, Strategy};
use crate::rff::{RffMap, RffSpec};

const MAGIC: &[u8; 8] = b"GEMMODEL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Default)]
struct Buf(Vec<u8>);

impl Buf {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], section: &'static str) -> Self {
        Cursor { data, pos: 0, section }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(GemError::Format(format!("section {} is truncated", self.section)));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    /// A count or width; rejects values that cannot fit in the remaining
    /// payload when each unit needs at least `unit` bytes.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let v = self.u64()?;
        let left = (self.data.len() - self.pos) as u64;
        if unit > 0 && v > left / unit as u64 {
            return Err(GemError::Format(format!("implausible length {v} in section {}", self.section)));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| GemError::Format(format!("invalid UTF-8 in section {}", self.section)))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(GemError::Format(format!("trailing bytes in section {}", self.section)));
        }
        Ok(())
    }
}

fn strategy_code(s: Strategy) -> u8 {
    match s {
        Strategy::AllPairs => 0,
        Strategy::Hypercube => 1,
        Strategy::Uniform => 2,
        Strategy::Stratified => 3,
        Strategy::Fixed => 4,
    }
}

fn strategy_from(code: u8) -> Result<Strategy> {
    Ok(match code {
        0 => Strategy::AllPairs,
        1 => Strategy::Hypercube,
        2 => Strategy::Uniform,
        3 => Strategy::Stratified,
        4 => Strategy::Fixed,
        c => return Err(GemError::Format(format!("unknown pair strategy code {c}"))),
    })
}

fn write_section(w: &mut impl Write, tag: &[u8; 4], payload: &[u8]) -> Result<()> {
    w.write_all(tag)?;
    w.write_all(&(payload.len() as u64).to_le_bytes())?;
    w.write_all(payload)?;
    Ok(())
}

fn read_section(r: &mut impl Read, tag: &[u8; 4]) -> Result<Vec<u8>> {
    let mut t = [0u8; 4];
    r.read_exact(&mut t)?;
    if &t != tag {
        return Err(GemError::Format(format!(
            "expected section {} but found {}",
            String::from_utf8_lossy(tag),
            String::from_utf8_lossy(&t)
        )));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8);
    let mut payload = Vec::new();
    r.take(len).read_to_end(&mut payload)?;
    if payload.len() as u64 != len {
        return Err(GemError::Format(format!("section {} is truncated", String::from_utf8_lossy(tag))));
    }
    Ok(payload)
}

fn write_layer(b: &mut Buf, g: &GemLayer) {
    b.f64(g.gamma);
    b.f64(g.theta);
    b.usize(g.m_max);
    b.u8(g.layout.passthrough() as u8);
    b.u8(strategy_code(g.plan.strategy));
    b.u64(g.plan.seed);
    b.usize(g.plan.pairs.len());
    for &(i, j) in &g.plan.pairs {
        b.usize(i);
        b.usize(j);
    }
    b.usize(g.layout.input_dim());
    b.usize(g.layout.detectors().len());
    for d in g.layout.detectors() {
        b.usize(d.numerator);
        b.usize(d.denominator);
        b.usize(d.rank);
        b.f64(d.eigenvalue);
        b.f64s(&d.vector);
    }
    b.usize(g.standardizer.width());
    b.f64s(&g.standardizer.mean);
    b.f64s(&g.standardizer.scale);
}

fn read_layer(c: &mut Cursor<'_>) -> Result<GemLayer> {
    let gamma = c.f64()?;
    let theta = c.f64()?;
    let m_max = c.u64()? as usize;
    let passthrough = c.u8()? != 0;
    let strategy = strategy_from(c.u8()?)?;
    let seed = c.u64()?;
    let npairs = c.len(16)?;
    let mut pairs = Vec::with_capacity(npairs);
    for _ in 0..npairs {
        pairs.push((c.u64()? as usize, c.u64()? as usize));
    }
    let input_dim = c.len(0)?;
    let ndet = c.len(32)?;
    let mut detectors = Vec::with_capacity(ndet);
    for _ in 0..ndet {
        let numerator = c.u64()? as usize;
        let denominator = c.u64()? as usize;
        let rank = c.u64()? as usize;
        let eigenvalue = c.f64()?;
        if input_dim > (c.data.len() - c.pos) / 8 {
            return Err(GemError::Format("detector vector is truncated".into()));
        }
        let vector = c.f64s(input_dim)?;
        detectors.push(Detector { vector, eigenvalue, numerator, denominator, rank });
    }
    let layout = FeatureLayout::new(input_dim, detectors, passthrough)?;
    let width = c.len(16)?;
    if width != layout.output_dim() {
        return Err(GemError::Format(format!(
            "standardizer width {width} does not match layer width {}",
            layout.output_dim()
        )));
    }
    let mean = c.f64s(width)?;
    let scale = c.f64s(width)?;
    Ok(GemLayer {
        gamma,
        theta,
        m_max,
        plan: PairPlan { pairs, strategy, seed },
        layout,
        standardizer: Standardizer { mean, scale },
    })
}

impl GemModel {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        self.check_widths()?;
        w.write_all(MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;

        let mut b = Buf::default();
        b.usize(self.input_dim);
        b.usize(self.label_map.len());
        for name in self.label_map.names() {
            b.str(name);
        }
        write_section(&mut w, b"HEAD", &b.0)?;

        let mut b = Buf::default();
        b.usize(self.stages.len());
        for stage in &self.stages {
            match stage {
                Stage::Rff(m) => {
                    let s = m.spec();
                    b.u8(1);
                    b.usize(s.input_dim);
                    b.usize(s.features);
                    b.f64(s.sigma);
                    b.u64(s.seed);
                }
                Stage::Gem(g) => {
                    b.u8(2);
                    write_layer(&mut b, g);
                }
            }
        }
        write_section(&mut w, b"STGS", &b.0)?;

        let m = &self.classifier;
        let mut b = Buf::default();
        b.usize(m.classes);
        b.usize(m.width);
        b.f64(m.l2);
        b.usize(m.iterations);
        b.f64(m.objective);
        b.u8(self.standardize as u8);
        b.f64s(&m.weights);
        write_section(&mut w, b"CLSF", &b.0)?;

        let t = &self.train_metrics;
        let mut b = Buf::default();
        b.usize(t.examples);
        b.usize(t.errors);
        b.f64(t.error_rate);
        b.f64(t.cross_entropy);
        write_section(&mut w, b"MTRC", &b.0)?;
        write_section(&mut w, b"END.", &[])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<GemModel> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(GemError::Format("not a model file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != MODEL_VERSION {
            return Err(GemError::Format(format!("unsupported model version {version}")));
        }

        let head = read_section(&mut r, b"HEAD")?;
        let mut c = Cursor::new(&head, "HEAD");
        let input_dim = c.len(0)?;
        let k = c.len(8)?;
        let names = (0..k).map(|_| c.str()).collect::<Result<Vec<_>>>()?;
        c.finish()?;

        let stgs = read_section(&mut r, b"STGS")?;
        let mut c = Cursor::new(&stgs, "STGS");
        let nstages = c.len(1)?;
        let mut stages = Vec::with_capacity(nstages);
        for _ in 0..nstages {
            match c.u8()? {
                1 => {
                    let input_dim = c.len(0)?;
                    let features = c.len(0)?;
                    let sigma = c.f64()?;
                    let seed = c.u64()?;
                    stages.push(Stage::Rff(RffMap::from_spec(RffSpec { input_dim, features, sigma, seed })?));
                }
                2 => stages.push(Stage::Gem(read_layer(&mut c)?)),
                kind => return Err(GemError::Format(format!("unknown stage kind {kind}"))),
            }
        }
        c.finish()?;

        let clsf = read_section(&mut r, b"CLSF")?;
        let mut c = Cursor::new(&clsf, "CLSF");
        let classes = c.len(0)?;
        let width = c.len(0)?;
        let l2 = c.f64()?;
        let iterations = c.u64()? as usize;
        let objective = c.f64()?;
        let standardize = c.u8()? != 0;
        let count = classes
            .checked_mul(width + 1)
            .filter(|&n| n <= (clsf.len() - c.pos) / 8)
            .ok_or_else(|| GemError::Format("classifier weights are truncated".into()))?;
        let weights = c.f64s(count)?;
        c.finish()?;
        if classes != k {
            return Err(GemError::Format(format!("classifier has {classes} classes but header lists {k}")));
        }

        let mtrc = read_section(&mut r, b"MTRC")?;
        let mut c = Cursor::new(&mtrc, "MTRC");
        let train_metrics = Metrics {
            examples: c.u64()? as usize,
            errors: c.u64()? as usize,
            error_rate: c.f64()?,
            cross_entropy: c.f64()?,
        };
        c.finish()?;
        if !read_section(&mut r, b"END.")?.is_empty() {
            return Err(GemError::Format("END. section must be empty".into()));
        }

        let model = GemModel {
            label_map: LabelMap::new(names),
            input_dim,
            stages,
            classifier: MultiLogitModel { classes, width, weights, l2, iterations, objective },
            standardize,
            train_metrics,
        };
        model.check_widths()?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<GemModel> {
        GemModel::read_from(BufReader::new(File::open(path)?))
    }
}
