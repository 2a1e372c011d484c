//! Labeled datasets and the on-disk formats they are read from.
//!
//! Labels on disk are arbitrary tokens (`0`-`9` for MNIST, `1`-`7` for
//! Covertype, strings elsewhere). They are remapped to contiguous class
//! indices `0..k` on load and the original tokens are kept in a
//! [`LabelMap`] so models can report predictions in the caller's terms.
//! Text interfaces that print classes (pair plans, detector dumps) use the
//! 1-based index `c + 1`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{GemError, Result};
use crate::seeded_rng;

/// Ordered list of the original label tokens; position is the class index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Self {
        LabelMap { names }
    }

    /// `0..k` rendered as decimal strings.
    pub fn identity(k: usize) -> Self {
        LabelMap { names: (0..k).map(|c| c.to_string()).collect() }
    }

    /// Builds a map from raw tokens. Numeric tokens sort numerically,
    /// otherwise lexicographically.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut names: Vec<String> = tokens.into_iter().map(str::to_owned).collect();
        names.sort();
        names.dedup();
        let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
        if let Some(values) = numeric {
            let mut paired: Vec<(f64, String)> = values.into_iter().zip(names).collect();
            paired.sort_by(|a, b| a.0.total_cmp(&b.0));
            names = paired.into_iter().map(|(_, s)| s).collect();
        }
        LabelMap { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.names.iter().position(|n| n == token)
    }

    fn lookup(&self) -> HashMap<&str, usize> {
        self.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Row-major `n x d`.
    Dense(Vec<f64>),
    /// Compressed sparse rows.
    Sparse { indptr: Vec<usize>, indices: Vec<u32>, values: Vec<f64> },
}

/// Borrowed view of one example.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse { indices: &'a [u32], values: &'a [f64] },
}

impl<'a> Row<'a> {
    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            Row::Dense(x) => x.iter().zip(w).map(|(a, b)| a * b).sum(),
            Row::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&i, v)| v * w[i as usize]).sum()
            }
        }
    }

    pub fn write_dense(&self, out: &mut [f64]) {
        match *self {
            Row::Dense(x) => out.copy_from_slice(x),
            Row::Sparse { indices, values } => {
                out.fill(0.0);
                for (&i, &v) in indices.iter().zip(values) {
                    out[i as usize] = v;
                }
            }
        }
    }

    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.write_dense(&mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    storage: Storage,
    labels: Vec<usize>,
    label_map: LabelMap,
    tag: Option<String>,
}

impl LabeledDataset {
    /// Dense dataset from row-major values. Labels are class indices into
    /// `label_map`.
    pub fn from_dense(
        dim: usize,
        values: Vec<f64>,
        labels: Vec<usize>,
        label_map: LabelMap,
    ) -> Result<Self> {
        if dim == 0 && !labels.is_empty() {
            return Err(GemError::invalid("feature width must be positive"));
        }
        if values.len() != dim * labels.len() {
            return Err(GemError::ShapeMismatch(format!(
                "{} values for {} rows of width {}",
                values.len(),
                labels.len(),
                dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GemError::NonFinite);
        }
        check_labels(&labels, label_map.len())?;
        Ok(LabeledDataset { dim, storage: Storage::Dense(values), labels, label_map, tag: None })
    }

    /// Dense dataset with labels `0..k` and identity label names.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, k: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(GemError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        let values = rows.concat();
        Self::from_dense(dim, values, labels, LabelMap::identity(k))
    }

    pub fn from_sparse(
        dim: usize,
        indptr: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
        labels: Vec<usize>,
        label_map: LabelMap,
    ) -> Result<Self> {
        if indptr.len() != labels.len() + 1 || indices.len() != values.len() {
            return Err(GemError::ShapeMismatch("inconsistent sparse arrays".into()));
        }
        if indptr.last() != Some(&indices.len()) || indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(GemError::ShapeMismatch("malformed sparse row pointers".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i as usize >= dim) {
            return Err(GemError::DimensionMismatch { expected: dim, got: i as usize + 1 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GemError::NonFinite);
        }
        check_labels(&labels, label_map.len())?;
        Ok(LabeledDataset {
            dim,
            storage: Storage::Sparse { indptr, indices, values },
            labels,
            label_map,
            tag: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn tag(&self) -> Option<&str> {
        self.tag.as_deref()
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense(v) => Row::Dense(&v[i * self.dim..(i + 1) * self.dim]),
            Storage::Sparse { indptr, indices, values } => {
                let (a, b) = (indptr[i], indptr[i + 1]);
                Row::Sparse { indices: &indices[a..b], values: &values[a..b] }
            }
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = (Row<'_>, usize)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.labels[i]))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Row-major dense copy of the features.
    pub fn to_dense_values(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(v) => v.clone(),
            Storage::Sparse { .. } => {
                let mut out = vec![0.0; self.len() * self.dim];
                for i in 0..self.len() {
                    self.row(i).write_dense(&mut out[i * self.dim..(i + 1) * self.dim]);
                }
                out
            }
        }
    }

    /// Rows `start..end` as an `(end - start) x d` matrix.
    pub fn matrix_rows(&self, start: usize, end: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(end - start, self.dim);
        let mut buf = vec![0.0; self.dim];
        for i in start..end {
            self.row(i).write_dense(&mut buf);
            for (c, v) in buf.iter().enumerate() {
                m[(i - start, c)] = *v;
            }
        }
        m
    }

    /// All features as an `n x d` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        self.matrix_rows(0, self.len())
    }

    /// Rows at `indices`, in that order. Storage kind and label map are kept.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let storage = match &self.storage {
            Storage::Dense(v) => {
                let mut out = Vec::with_capacity(indices.len() * self.dim);
                for &i in indices {
                    out.extend_from_slice(&v[i * self.dim..(i + 1) * self.dim]);
                }
                Storage::Dense(out)
            }
            Storage::Sparse { indptr, indices: idx, values } => {
                let mut p = vec![0];
                let (mut ni, mut nv) = (Vec::new(), Vec::new());
                for &i in indices {
                    ni.extend_from_slice(&idx[indptr[i]..indptr[i + 1]]);
                    nv.extend_from_slice(&values[indptr[i]..indptr[i + 1]]);
                    p.push(ni.len());
                }
                Storage::Sparse { indptr: p, indices: ni, values: nv }
            }
        };
        LabeledDataset { dim: self.dim, storage, labels, label_map: self.label_map.clone(), tag: None }
    }

    /// Concatenates two datasets with the same width and label map.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.dim != other.dim {
            return Err(GemError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        if self.label_map != other.label_map {
            return Err(GemError::ShapeMismatch("label maps differ".into()));
        }
        let labels = [self.labels.as_slice(), other.labels.as_slice()].concat();
        let mut values = self.to_dense_values();
        values.extend(other.to_dense_values());
        LabeledDataset::from_dense(self.dim, values, labels, self.label_map.clone())
    }

    /// Appends a constant-1 feature to every row.
    pub fn with_bias_feature(&self) -> LabeledDataset {
        let d = self.dim + 1;
        let mut out = Vec::with_capacity(self.len() * d);
        let mut buf = vec![0.0; self.dim];
        for i in 0..self.len() {
            self.row(i).write_dense(&mut buf);
            out.extend_from_slice(&buf);
            out.push(1.0);
        }
        LabeledDataset {
            dim: d,
            storage: Storage::Dense(out),
            labels: self.labels.clone(),
            label_map: self.label_map.clone(),
            tag: self.tag.clone(),
        }
    }

    /// Widens sparse data (or validates dense data) to `dim` columns.
    pub fn with_dim(mut self, dim: usize) -> Result<LabeledDataset> {
        if dim == self.dim {
            return Ok(self);
        }
        match &self.storage {
            Storage::Sparse { .. } if dim > self.dim => {
                self.dim = dim;
                Ok(self)
            }
            _ => Err(GemError::DimensionMismatch { expected: dim, got: self.dim }),
        }
    }
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= k) {
        Some(&y) => Err(GemError::LabelOutOfRange { label: y, classes: k }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Format {
    /// Comma-separated dense rows.
    Csv { label: LabelColumn },
    /// `label idx:value ...` with 1-based indices.
    Libsvm,
    /// IDX image file plus a separate IDX label file (optionally gzipped).
    Idx { labels: std::path::PathBuf },
}

/// Options that fix the interpretation of a file relative to an existing
/// model: the label map to use and the expected feature width.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_map: Option<LabelMap>,
    pub dim: Option<usize>,
}

pub fn load(path: &Path, format: &Format, opts: &LoadOptions) -> Result<LabeledDataset> {
    let data = match format {
        Format::Csv { label } => read_csv(open(path)?, *label, opts.label_map.as_ref())?,
        Format::Libsvm => read_libsvm(open(path)?, opts.label_map.as_ref())?,
        Format::Idx { labels } => read_idx(path, labels, opts.label_map.as_ref())?,
    };
    match opts.dim {
        Some(d) => data.with_dim(d),
        None => Ok(data),
    }
}

/// Buffered reader over `path`, transparently gunzipping when the file
/// starts with the gzip magic.
fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = BufReader::new(File::open(path)?);
    if file.fill_buf()?.starts_with(&[0x1f, 0x8b]) {
        return Ok(Box::new(BufReader::new(flate2::bufread::MultiGzDecoder::new(file))));
    }
    Ok(Box::new(file))
}

struct LabelCollector<'m> {
    fixed: Option<(&'m LabelMap, HashMap<&'m str, usize>)>,
    tokens: Vec<String>,
}

impl<'m> LabelCollector<'m> {
    fn new(map: Option<&'m LabelMap>) -> Self {
        LabelCollector { fixed: map.map(|m| (m, m.lookup())), tokens: Vec::new() }
    }

    fn push(&mut self, token: &str, line: usize) -> Result<()> {
        if let Some((_, lookup)) = &self.fixed {
            if !lookup.contains_key(token) {
                return Err(GemError::Parse { line, message: format!("unknown label {token:?}") });
            }
        }
        self.tokens.push(token.to_owned());
        Ok(())
    }

    fn finish(self) -> (Vec<usize>, LabelMap) {
        let map = match self.fixed {
            Some((m, _)) => m.clone(),
            None => LabelMap::from_tokens(self.tokens.iter().map(String::as_str)),
        };
        let lookup = map.lookup();
        let labels = self.tokens.iter().map(|t| lookup[t.as_str()]).collect();
        (labels, map)
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| GemError::Parse { line, message: format!("bad number {tok:?}") })?;
    if !v.is_finite() {
        return Err(GemError::Parse { line, message: "non-finite value".into() });
    }
    Ok(v)
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn read_csv(
    reader: impl BufRead,
    label: LabelColumn,
    label_map: Option<&LabelMap>,
) -> Result<LabeledDataset> {
    let mut labels = LabelCollector::new(label_map);
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = no + 1;
        if is_skippable(&line) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(GemError::Parse { line: line_no, message: "need a label and at least one feature".into() });
        }
        let (tok, feats) = match label {
            LabelColumn::First => (fields[0], &fields[1..]),
            LabelColumn::Last => (fields[fields.len() - 1], &fields[..fields.len() - 1]),
        };
        match dim {
            None => dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(GemError::Parse {
                    line: line_no,
                    message: format!("expected {d} features, found {}", feats.len()),
                })
            }
            _ => {}
        }
        for f in feats {
            values.push(parse_value(f, line_no)?);
        }
        labels.push(tok, line_no)?;
    }
    let (labels, map) = labels.finish();
    LabeledDataset::from_dense(dim.unwrap_or(0), values, labels, map)
}

pub fn read_libsvm(reader: impl BufRead, label_map: Option<&LabelMap>) -> Result<LabeledDataset> {
    let mut labels = LabelCollector::new(label_map);
    let mut indptr = vec![0];
    let mut indices: Vec<u32> = Vec::new();
    let mut values = Vec::new();
    let mut dim = 0usize;
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = no + 1;
        if is_skippable(&line) {
            continue;
        }
        let content = line.split('#').next().unwrap_or("");
        let mut parts = content.split_whitespace();
        let tok = parts.next().ok_or(GemError::Parse { line: line_no, message: "missing label".into() })?;
        let start = indices.len();
        let mut last: Option<u32> = None;
        for p in parts {
            let (i, v) = p
                .split_once(':')
                .ok_or_else(|| GemError::Parse { line: line_no, message: format!("expected idx:value, got {p:?}") })?;
            let i: u32 = i
                .parse()
                .map_err(|_| GemError::Parse { line: line_no, message: format!("bad index {i:?}") })?;
            if i == 0 {
                return Err(GemError::Parse { line: line_no, message: "indices are 1-based".into() });
            }
            if last.is_some_and(|l| i <= l) {
                return Err(GemError::Parse { line: line_no, message: "indices must increase".into() });
            }
            last = Some(i);
            let v = parse_value(v, line_no)?;
            dim = dim.max(i as usize);
            indices.push(i - 1);
            values.push(v);
        }
        debug_assert!(start <= indices.len());
        indptr.push(indices.len());
        labels.push(tok, line_no)?;
    }
    let (labels, map) = labels.finish();
    LabeledDataset::from_sparse(dim, indptr, indices, values, labels, map)
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn idx_header(bytes: &[u8], expect_dims: u8) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(GemError::Format("unknown idx magic".into()));
    }
    if bytes[2] != 0x08 {
        return Err(GemError::Format(format!("unsupported idx element type 0x{:02x}", bytes[2])));
    }
    if bytes[3] != expect_dims {
        return Err(GemError::Format(format!("expected {expect_dims} idx dimensions, found {}", bytes[3])));
    }
    let ndim = expect_dims as usize;
    let head = 4 + 4 * ndim;
    if bytes.len() < head {
        return Err(GemError::Format("truncated idx header".into()));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let body = &bytes[head..];
    if body.len() != dims.iter().product::<usize>() {
        return Err(GemError::Format("idx payload size does not match header".into()));
    }
    Ok((dims, body))
}

/// Reads an IDX image file (`u8`, 3 dimensions) and label file (`u8`, 1
/// dimension). Pixels are scaled to `[0, 1]`.
pub fn read_idx(images: &Path, labels: &Path, label_map: Option<&LabelMap>) -> Result<LabeledDataset> {
    let img = read_maybe_gz(images)?;
    let lab = read_maybe_gz(labels)?;
    let (idims, pixels) = idx_header(&img, 3)?;
    let (ldims, ybytes) = idx_header(&lab, 1)?;
    if idims[0] != ldims[0] {
        return Err(GemError::Format(format!("{} images but {} labels", idims[0], ldims[0])));
    }
    let dim = idims[1] * idims[2];
    let values = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let mut collector = LabelCollector::new(label_map);
    for (i, y) in ybytes.iter().enumerate() {
        collector.push(&y.to_string(), i + 1)?;
    }
    let (labels, map) = collector.finish();
    LabeledDataset::from_dense(dim, values, labels, map)
}

pub fn write_csv(data: &LabeledDataset, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let mut buf = vec![0.0; data.dim()];
    for (row, y) in data.rows() {
        row.write_dense(&mut buf);
        write!(w, "{}", data.label_map().name(y))?;
        for v in &buf {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_libsvm(data: &LabeledDataset, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (row, y) in data.rows() {
        write!(w, "{}", data.label_map().name(y))?;
        match row {
            Row::Dense(x) => {
                for (i, v) in x.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                    write!(w, " {}:{v}", i + 1)?;
                }
            }
            Row::Sparse { indices, values } => {
                for (i, v) in indices.iter().zip(values) {
                    write!(w, " {}:{v}", i + 1)?;
                }
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Seeded permutation followed by contiguous slicing. Split sizes are the
/// differences of `round(n * cumulative fraction)`.
pub fn split(data: &LabeledDataset, fractions: &[f64], seed: u64) -> Result<Vec<LabeledDataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(GemError::invalid("split fractions must lie in [0, 1]"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(GemError::invalid(format!("split fractions sum to {total}, not 1")));
    }
    let n = data.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(seed));
    let mut out = Vec::with_capacity(fractions.len());
    let mut cum = 0.0;
    let mut start = 0;
    for (s, f) in fractions.iter().enumerate() {
        cum += f;
        let end = if s + 1 == fractions.len() { n } else { ((cum * n as f64).round() as usize).min(n) };
        out.push(data.subset(&perm[start..end]));
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_label_first() {
        let d = read_csv("1,0.5,2.0\n".as_bytes(), LabelColumn::First, None).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.label_map().name(d.labels()[0]), "1");
        assert_eq!(d.row(0).to_dense(2), vec![0.5, 2.0]);
    }

    #[test]
    fn csv_label_last_and_comments() {
        let text = "# header\n0.1,0.2,7\n\n0.3,0.4,3\n";
        let d = read_csv(text.as_bytes(), LabelColumn::Last, None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.label_map().names(), &["3".to_string(), "7".to_string()]);
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn csv_reports_line_of_bad_record() {
        let err = read_csv("1,0.5\n2,abc\n".as_bytes(), LabelColumn::First, None).unwrap_err();
        assert!(matches!(err, GemError::Parse { line: 2, .. }), "{err}");
        let err = read_csv("1,0.5\n2,1,3\n".as_bytes(), LabelColumn::First, None).unwrap_err();
        assert!(matches!(err, GemError::Parse { line: 2, .. }));
    }

    #[test]
    fn libsvm_sparse_row() {
        let d = read_libsvm("3 1:0.5 7:2.0\n".as_bytes(), None).unwrap();
        assert!(d.is_sparse());
        assert!(d.dim() >= 7);
        let x = d.row(0).to_dense(d.dim());
        assert_eq!(x[0], 0.5);
        assert_eq!(x[6], 2.0);
        assert_eq!(d.label_map().name(0), "3");
    }

    #[test]
    fn libsvm_rejects_zero_and_unordered_indices() {
        assert!(read_libsvm("1 0:1\n".as_bytes(), None).is_err());
        assert!(read_libsvm("1 3:1 2:1\n".as_bytes(), None).is_err());
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let m = LabelMap::from_tokens(["10", "9", "1"]);
        assert_eq!(m.names(), &["1", "9", "10"]);
    }

    #[test]
    fn fixed_label_map_rejects_unknown_tokens() {
        let map = LabelMap::new(vec!["a".into(), "b".into()]);
        let err = read_csv("c,1\n".as_bytes(), LabelColumn::First, Some(&map)).unwrap_err();
        assert!(matches!(err, GemError::Parse { line: 1, .. }));
        let ok = read_csv("b,1\n".as_bytes(), LabelColumn::First, Some(&map)).unwrap();
        assert_eq!(ok.labels(), &[1]);
        assert_eq!(ok.num_classes(), 2);
    }

    fn toy(n: usize) -> LabeledDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, 1.0]).collect();
        let labels = (0..n).map(|i| i % 3).collect();
        LabeledDataset::from_rows(&rows, labels, 3).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy(1000);
        let parts = split(&d, &[0.9, 0.1], 7).unwrap();
        assert_eq!(parts[0].len(), 900);
        assert_eq!(parts[1].len(), 100);
        let again = split(&d, &[0.9, 0.1], 7).unwrap();
        assert_eq!(parts, again);
    }

    #[test]
    fn split_is_a_partition() {
        let d = toy(257);
        let parts = split(&d, &[0.5, 0.3, 0.2], 3).unwrap();
        let mut seen: Vec<u64> = parts
            .iter()
            .flat_map(|p| p.rows().map(|(r, _)| r.to_dense(2)[0] as u64).collect::<Vec<_>>())
            .collect();
        seen.sort();
        assert_eq!(seen, (0..257).collect::<Vec<u64>>());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let d = toy(10);
        assert!(split(&d, &[0.5, 0.4], 0).is_err());
        assert!(split(&d, &[1.5, -0.5], 0).is_err());
    }

    #[test]
    fn idx_round_trip_with_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend([0u8, 255, 51, 102, 255, 0, 0, 0]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 5, 0];
        let ip = dir.path().join("img.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&ip).unwrap(), flate2::Compression::fast());
        enc.write_all(&img).unwrap();
        enc.finish().unwrap();
        let lp = dir.path().join("lab");
        std::fs::write(&lp, &lab).unwrap();
        let d = read_idx(&ip, &lp, None).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 4));
        assert_eq!(d.row(0).to_dense(4), vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(d.label_map().names(), &["0", "5"]);
        assert_eq!(d.labels(), &[1, 0]);

        std::fs::write(&lp, [0, 0, 9, 1, 0, 0, 0, 0]).unwrap();
        assert!(matches!(read_idx(&ip, &lp, None), Err(GemError::Format(_))));
        std::fs::write(&lp, [1, 2, 8, 1, 0, 0, 0, 0]).unwrap();
        assert!(matches!(read_idx(&ip, &lp, None), Err(GemError::Format(_))));
    }

    #[test]
    fn gzipped_csv_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&p).unwrap(), flate2::Compression::fast());
        enc.write_all(b"0.5,2.0,7\n1.0,-1.0,3\n").unwrap();
        enc.finish().unwrap();
        let d = load(&p, &Format::Csv { label: LabelColumn::Last }, &LoadOptions::default()).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        assert_eq!(d.label_map().names(), &["3", "7"]);
        assert_eq!(d.labels(), &[1, 0]);
    }
}
