//! Detector export: a text matrix dump and, for image-shaped inputs, one
//! diverging-color PNG per detector plus a grid of all of them.

use gem::geneig::Detector;
use gem::pipeline::{GemModel, Stage};

use crate::error::{CliError, CliResult};
use crate::output::Outputs;

/// Height and width of an image-shaped input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
}

impl std::str::FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("{s:?} is not HxW"))?;
        let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| format!("{s:?} is not HxW"));
        Ok(Shape { height: parse(h)?, width: parse(w)? })
    }
}

/// Detectors of the first stage, which must be a GEM layer on raw input.
pub fn first_layer(model: &GemModel) -> CliResult<&[Detector]> {
    match model.stages.first() {
        Some(Stage::Gem(g)) => Ok(g.detectors()),
        Some(Stage::Rff(_)) => Err(CliError::Input("the first stage is a random feature map; only raw-input detectors can be exported".into())),
        None => Err(CliError::Input("the model has no GEM layer".into())),
    }
}

pub const DUMP_HEADER: &str = "# numerator denominator rank eigenvalue v_1 .. v_d";

/// One line per detector: class names, 1-based rank, eigenvalue, vector.
/// Numbers use the shortest representation that parses back exactly.
pub fn detector_dump(model: &GemModel, detectors: &[Detector]) -> String {
    let mut s = String::from(DUMP_HEADER);
    s.push('\n');
    for d in detectors {
        s.push_str(&format!(
            "{} {} {} {:e}",
            model.label_map.name(d.numerator),
            model.label_map.name(d.denominator),
            d.rank + 1,
            d.eigenvalue
        ));
        for v in &d.vector {
            s.push_str(&format!(" {v:e}"));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub numerator: String,
    pub denominator: String,
    pub rank: usize,
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
}

pub fn parse_dump(text: &str) -> Result<Vec<DumpRow>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(no, line)| {
            let bad = |what: &str| format!("line {}: bad {what}", no + 1);
            let mut it = line.split_whitespace();
            let numerator = it.next().ok_or_else(|| bad("numerator"))?.to_string();
            let denominator = it.next().ok_or_else(|| bad("denominator"))?.to_string();
            let rank = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("rank"))?;
            let eigenvalue = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("eigenvalue"))?;
            let vector = it.map(|t| t.parse().map_err(|_| bad("vector entry"))).collect::<Result<_, _>>()?;
            Ok(DumpRow { numerator, denominator, rank, eigenvalue, vector })
        })
        .collect()
}

/// Blue for negative, white at zero, red for positive, scaled so that the
/// largest magnitude saturates.
fn diverging(v: f64, scale: f64) -> [u8; 3] {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |a: f64| (255.0 * (1.0 - a.abs())).round() as u8;
    if t >= 0.0 {
        [255, fade(t), fade(t)]
    } else {
        [fade(t), fade(t), 255]
    }
}

fn encode_rgb(width: usize, height: usize, rgb: &[u8]) -> CliResult<Vec<u8>> {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(CliError::compute)?;
        w.write_image_data(rgb).map_err(CliError::compute)?;
    }
    Ok(bytes)
}

/// `height x width` PNG of a row-major vector.
pub fn detector_png(vector: &[f64], shape: Shape) -> CliResult<Vec<u8>> {
    let scale = vector.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rgb: Vec<u8> = vector.iter().flat_map(|&v| diverging(v, scale)).collect();
    encode_rgb(shape.width, shape.height, &rgb)
}

/// One row per class pair, one column per rank, separated by 1-pixel
/// gray gutters. Each tile has its own symmetric scale.
pub fn detector_grid(detectors: &[Detector], shape: Shape) -> CliResult<Vec<u8>> {
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for d in detectors {
        if !rows.contains(&(d.numerator, d.denominator)) {
            rows.push((d.numerator, d.denominator));
        }
    }
    let cols = detectors.iter().map(|d| d.rank + 1).max().unwrap_or(1);
    let (tw, th) = (shape.width + 1, shape.height + 1);
    let (w, h) = (cols * tw + 1, rows.len() * th + 1);
    let mut rgb = vec![160u8; w * h * 3];
    for d in detectors {
        let r = rows.iter().position(|&p| p == (d.numerator, d.denominator)).unwrap();
        let scale = d.vector.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for y in 0..shape.height {
            for x in 0..shape.width {
                let px = (r * th + 1 + y) * w + d.rank * tw + 1 + x;
                rgb[3 * px..3 * px + 3].copy_from_slice(&diverging(d.vector[y * shape.width + x], scale));
            }
        }
    }
    encode_rgb(w, h, &rgb)
}

/// Stages the text dump and, when `shape` matches the input width, the
/// images. A mismatched shape falls back to text only with a warning.
pub fn export(model: &GemModel, shape: Option<Shape>, out: &mut Outputs) -> CliResult<Vec<String>> {
    let detectors = first_layer(model)?;
    out.add("detectors.txt", detector_dump(model, detectors));
    let mut warnings = Vec::new();
    match shape {
        Some(s) if s.height * s.width == model.input_dim => {
            for (i, d) in detectors.iter().enumerate() {
                out.add(format!("detector-{:03}.png", i + 1), detector_png(&d.vector, s)?);
            }
            out.add("detectors.png", detector_grid(detectors, s)?);
        }
        Some(s) => warnings.push(format!(
            "{}x{} does not match input width {}; writing the text dump only",
            s.height, s.width, model.input_dim
        )),
        None => {}
    }
    Ok(warnings)
}
