//! Attention maps: dense pixel grids built from eye fixations, precomputed
//! spatial attention, or object-proposal attention, plus the standardization
//! and similarity operations the metric needs.
//!
//! All comparisons happen on a square `size x size` grid (256 by default).
//! Fixation maps follow the usual saliency recipe: a unit impulse per
//! fixation (coordinates rescaled from image space), smoothed with an
//! isotropic Gaussian truncated at four sigmas, then divided by the maximum
//! so values lie in [0, 1]. Proposal attention is rasterized as density:
//! each box spreads its weight uniformly over the pixels it covers.
//!
//! Pixel membership everywhere uses the pixel-center rule: pixel (row j,
//! col i) belongs to a rectangle iff its center (i+0.5, j+0.5) lies inside
//! the half-open rect. Two boxes sharing an edge never double-count a pixel.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::BoundingBox;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map size must be at least 1")]
    BadSize,
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("image dimensions must be positive, got {0}x{1}")]
    BadImageDims(f64, f64),
    #[error("fixation CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("fixation CSV has header {got:?}, expected {want:?}")]
    CsvHeader { got: Vec<String>, want: Vec<String> },
    #[error("fixation CSV record {record}: {msg}")]
    CsvRecord { record: u64, msg: String },
    #[error("temporal bins must be ascending and non-overlapping: {0}")]
    BadBins(String),
    #[error("proposal list is empty")]
    NoProposals,
    #[error("proposal {index} has invalid weight {weight}")]
    BadWeight { index: usize, weight: f64 },
    #[error("proposal weights sum to {0}, expected 1 within 1e-6")]
    WeightSum(f64),
    #[error("proposal {index} covers no pixel at {size}x{size} (rescaled box too small)")]
    ZeroCoverage { index: usize, size: usize },
    #[error("grid dimensions {h}x{w} don't match data length {len}")]
    GridShape { h: usize, w: usize, len: usize },
    #[error("dense map is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dense map CSV row {row}: {msg}")]
    DenseCsv { row: usize, msg: String },
    #[error("map contains a non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("map contains a negative value {value} at row {row}, col {col}")]
    Negative { row: usize, col: usize, value: f64 },
    #[error("maps have different shapes: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("correlation undefined: {0} map is constant")]
    ConstantMap(&'static str),
}

/// Dense row-major grid of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(h: usize, w: usize) -> Grid {
        Grid {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn from_data(h: usize, w: usize, data: Vec<f64>) -> Result<Grid, MapError> {
        if data.len() != h * w || h == 0 || w == 0 {
            return Err(MapError::GridShape {
                h,
                w,
                len: data.len(),
            });
        }
        Ok(Grid { h, w, data })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.w + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.w + col] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Mean and population standard deviation (two-pass).
    pub fn moments(&self) -> (f64, f64) {
        let mean = self.mean();
        let var = self
            .data
            .iter()
            .map(|v| {
                let d = v - mean;
                d * d
            })
            .sum::<f64>()
            / self.data.len() as f64;
        (mean, var.sqrt())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Parse the `{h, w, data}` JSON document form.
    pub fn from_json(text: &str) -> Result<Grid, MapError> {
        #[derive(Deserialize)]
        struct Doc {
            h: usize,
            w: usize,
            data: Vec<f64>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        Grid::from_data(doc.h, doc.w, doc.data)
    }

    /// Parse the row-major CSV form (one row per line).
    pub fn from_csv(text: &str) -> Result<Grid, MapError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (row_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for cell in line.split(',') {
                let v = cell.trim().parse::<f64>().map_err(|_| MapError::DenseCsv {
                    row: row_no + 1,
                    msg: format!("bad number {cell:?}"),
                })?;
                row.push(v);
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(MapError::DenseCsv {
                        row: row_no + 1,
                        msg: format!("expected {} columns, found {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        let h = rows.len();
        let w = rows.first().map(Vec::len).unwrap_or(0);
        Grid::from_data(h, w, rows.into_iter().flatten().collect())
    }

    /// Bilinear resample to `size x size` (pixel centers aligned). Used to
    /// bring coarse dense attention (e.g. a 7x7 grid) up to scoring
    /// resolution; the choice of bilinear is a documented convention, noted
    /// in reports whenever it fires.
    pub fn resample_bilinear(&self, size: usize) -> Grid {
        let mut out = Grid::zeros(size, size);
        let sy = self.h as f64 / size as f64;
        let sx = self.w as f64 / size as f64;
        for j in 0..size {
            let fy = ((j as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.h - 1);
            let ty = fy - y0 as f64;
            for i in 0..size {
                let fx = ((i as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.w - 1);
                let tx = fx - x0 as f64;
                let top = self.get(y0, x0) * (1.0 - tx) + self.get(y0, x1) * tx;
                let bot = self.get(y1, x0) * (1.0 - tx) + self.get(y1, x1) * tx;
                out.set(j, i, top * (1.0 - ty) + bot * ty);
            }
        }
        out
    }

    /// Reject non-finite or negative entries (attention is a nonnegative
    /// quantity).
    pub fn validate_attention(&self) -> Result<(), MapError> {
        for row in 0..self.h {
            for col in 0..self.w {
                let v = self.get(row, col);
                if !v.is_finite() {
                    return Err(MapError::NonFinite { row, col });
                }
                if v < 0.0 {
                    return Err(MapError::Negative { row, col, value: v });
                }
            }
        }
        Ok(())
    }
}

/// Where an attention map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSource {
    HumanCorrect,
    HumanIncorrect,
    HumanTotal,
    Machine,
}

impl MapSource {
    pub const ALL: [MapSource; 4] = [
        MapSource::HumanCorrect,
        MapSource::HumanIncorrect,
        MapSource::HumanTotal,
        MapSource::Machine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapSource::HumanCorrect => "human-correct",
            MapSource::HumanIncorrect => "human-incorrect",
            MapSource::HumanTotal => "human-total",
            MapSource::Machine => "machine",
        }
    }
}

impl fmt::Display for MapSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapSource {
    type Err = ();

    fn from_str(s: &str) -> Result<MapSource, ()> {
        MapSource::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub grid: Grid,
    pub source: MapSource,
    /// True when values have been scaled so the maximum is 1 (all maps built
    /// by this module are; the all-zero map is the one exception and is
    /// still marked normalized by convention).
    pub normalized: bool,
}

/// Z-scored attention map. `degenerate` marks a constant input (zero
/// variance), for which every value is defined as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedMap {
    pub grid: Grid,
    pub degenerate: bool,
}

const DEGENERATE_STD: f64 = 1e-12;

/// Standardize to zero mean, unit population standard deviation.
pub fn standardize_map(m: &AttentionMap) -> StandardizedMap {
    let (mean, std) = m.grid.moments();
    if !(std > DEGENERATE_STD) {
        return StandardizedMap {
            grid: Grid::zeros(m.grid.h(), m.grid.w()),
            degenerate: true,
        };
    }
    StandardizedMap {
        grid: m.grid.map(|v| (v - mean) / std),
        degenerate: false,
    }
}

/// Pearson correlation between two equally-shaped maps, over all pixels.
pub fn map_pearson(a: &AttentionMap, b: &AttentionMap) -> Result<f64, MapError> {
    let (ga, gb) = (&a.grid, &b.grid);
    if ga.h() != gb.h() || ga.w() != gb.w() {
        return Err(MapError::ShapeMismatch(ga.h(), ga.w(), gb.h(), gb.w()));
    }
    if ga.data().windows(2).all(|w| w[0] == w[1]) {
        return Err(MapError::ConstantMap("first"));
    }
    if gb.data().windows(2).all(|w| w[0] == w[1]) {
        return Err(MapError::ConstantMap("second"));
    }
    let (ma, mb) = (ga.mean(), gb.mean());
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in ga.data().iter().zip(gb.data()) {
        let dx = x - ma;
        let dy = y - mb;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MapError::ConstantMap("first"));
    }
    if syy == 0.0 {
        return Err(MapError::ConstantMap("second"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// One eye fixation, in image pixel coordinates and milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub question_id: String,
    pub participant_id: String,
    pub x: f64,
    pub y: f64,
    pub start_ms: f64,
    pub end_ms: f64,
    pub answer: String,
    pub is_correct: bool,
}

const FIXATION_HEADER: [&str; 8] = [
    "question_id",
    "participant_id",
    "x",
    "y",
    "start_ms",
    "end_ms",
    "answer",
    "is_correct",
];

/// Parse the fixation CSV (`question_id,participant_id,x,y,start_ms,end_ms,answer,is_correct`).
pub fn parse_fixations<R: Read>(reader: R) -> Result<Vec<Fixation>, MapError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers != FIXATION_HEADER {
        return Err(MapError::CsvHeader {
            got: headers,
            want: FIXATION_HEADER.iter().map(|s| (*s).to_owned()).collect(),
        });
    }

    let mut out = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let record_no = i as u64 + 2; // header is line 1
        let record = result?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let num = |idx: usize, name: &str| -> Result<f64, MapError> {
            field(idx).parse::<f64>().map_err(|_| MapError::CsvRecord {
                record: record_no,
                msg: format!("bad {name} {:?}", field(idx)),
            })
        };
        let x = num(2, "x")?;
        let y = num(3, "y")?;
        let start_ms = num(4, "start_ms")?;
        let end_ms = num(5, "end_ms")?;
        if !(x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0) {
            return Err(MapError::CsvRecord {
                record: record_no,
                msg: format!("coordinates ({x}, {y}) out of range"),
            });
        }
        if !(start_ms >= 0.0 && start_ms < end_ms) {
            return Err(MapError::CsvRecord {
                record: record_no,
                msg: format!("times must satisfy 0 <= start < end, got [{start_ms}, {end_ms})"),
            });
        }
        let is_correct = match field(7).to_ascii_lowercase().as_str() {
            "true" | "1" => true,
            "false" | "0" => false,
            other => {
                return Err(MapError::CsvRecord {
                    record: record_no,
                    msg: format!("bad is_correct {other:?}"),
                })
            }
        };
        out.push(Fixation {
            question_id: field(0).to_owned(),
            participant_id: field(1).to_owned(),
            x,
            y,
            start_ms,
            end_ms,
            answer: field(6).to_owned(),
            is_correct,
        });
    }
    Ok(out)
}

/// Render the CSV form back out (used by the synthetic-corpus generator).
pub fn fixations_to_csv(fixations: &[Fixation]) -> String {
    let mut out = String::from("question_id,participant_id,x,y,start_ms,end_ms,answer,is_correct\n");
    for f in fixations {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            f.question_id, f.participant_id, f.x, f.y, f.start_ms, f.end_ms, f.answer, f.is_correct
        ));
    }
    out
}

/// Normalized 1-D Gaussian taps for offsets -r..=r with r = floor(4*sigma).
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).floor() as i64;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// Separable convolution, truncating at the grid border (mass near the edge
/// leaks off the map instead of reflecting).
fn convolve_separable(grid: &Grid, taps: &[f64]) -> Grid {
    let r = (taps.len() / 2) as i64;
    let (h, w) = (grid.h() as i64, grid.w() as i64);
    // horizontal pass
    let mut mid = Grid::zeros(grid.h(), grid.w());
    for j in 0..h {
        for i in 0..w {
            let v = grid.get(j as usize, i as usize);
            if v == 0.0 {
                continue;
            }
            for (ti, t) in taps.iter().enumerate() {
                let x = i + ti as i64 - r;
                if x >= 0 && x < w {
                    let cur = mid.get(j as usize, x as usize);
                    mid.set(j as usize, x as usize, cur + v * t);
                }
            }
        }
    }
    // vertical pass
    let mut out = Grid::zeros(grid.h(), grid.w());
    for j in 0..h {
        for i in 0..w {
            let v = mid.get(j as usize, i as usize);
            if v == 0.0 {
                continue;
            }
            for (ti, t) in taps.iter().enumerate() {
                let y = j + ti as i64 - r;
                if y >= 0 && y < h {
                    let cur = out.get(y as usize, i as usize);
                    out.set(y as usize, i as usize, cur + v * t);
                }
            }
        }
    }
    out
}

/// Build a fixation map: unit impulses at rescaled fixation positions,
/// Gaussian smoothing, then division by the maximum. An empty fixation list
/// yields the all-zero map.
pub fn fixations_to_map(
    fixations: &[Fixation],
    image_w: f64,
    image_h: f64,
    size: usize,
    sigma: f64,
    source: MapSource,
) -> Result<AttentionMap, MapError> {
    if size == 0 {
        return Err(MapError::BadSize);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(MapError::BadSigma(sigma));
    }
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(MapError::BadImageDims(image_w, image_h));
    }

    let mut impulses = Grid::zeros(size, size);
    let last = (size - 1) as f64;
    for f in fixations {
        let col = ((f.x / image_w) * size as f64).floor().clamp(0.0, last) as usize;
        let row = ((f.y / image_h) * size as f64).floor().clamp(0.0, last) as usize;
        let cur = impulses.get(row, col);
        impulses.set(row, col, cur + 1.0);
    }

    let taps = gaussian_kernel(sigma);
    let smoothed = convolve_separable(&impulses, &taps);
    let max = smoothed.max();
    let grid = if max > 0.0 {
        smoothed.map(|v| v / max)
    } else {
        smoothed
    };
    Ok(AttentionMap {
        grid,
        source,
        normalized: true,
    })
}

/// Split fixations into `[lo, hi)` time bins by start time. Returns the
/// per-bin lists plus how many fixations fell outside every bin.
pub fn slice_fixations_temporal(
    fixations: &[Fixation],
    bins: &[(f64, f64)],
) -> Result<(Vec<Vec<Fixation>>, usize), MapError> {
    validate_bins(bins)?;
    let mut out: Vec<Vec<Fixation>> = vec![Vec::new(); bins.len()];
    let mut dropped = 0;
    for f in fixations {
        match bins.iter().position(|(lo, hi)| f.start_ms >= *lo && f.start_ms < *hi) {
            Some(i) => out[i].push(f.clone()),
            None => dropped += 1,
        }
    }
    Ok((out, dropped))
}

pub fn validate_bins(bins: &[(f64, f64)]) -> Result<(), MapError> {
    if bins.is_empty() {
        return Err(MapError::BadBins("no bins given".into()));
    }
    for (i, (lo, hi)) in bins.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(MapError::BadBins(format!("bin {i} [{lo}, {hi}) is empty")));
        }
        if i > 0 && bins[i - 1].1 > *lo {
            return Err(MapError::BadBins(format!(
                "bin {i} starts at {lo} before bin {} ends at {}",
                i - 1,
                bins[i - 1].1
            )));
        }
    }
    Ok(())
}

/// Object-proposal attention: boxes in image coordinates with nonnegative
/// weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalAttention {
    proposals: Vec<(BoundingBox, f64)>,
}

impl ProposalAttention {
    pub fn new(proposals: Vec<(BoundingBox, f64)>) -> Result<ProposalAttention, MapError> {
        if proposals.is_empty() {
            return Err(MapError::NoProposals);
        }
        let mut total = 0.0;
        for (index, (_, weight)) in proposals.iter().enumerate() {
            if !(weight.is_finite() && *weight >= 0.0) {
                return Err(MapError::BadWeight {
                    index,
                    weight: *weight,
                });
            }
            total += weight;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(MapError::WeightSum(total));
        }
        Ok(ProposalAttention { proposals })
    }

    pub fn proposals(&self) -> &[(BoundingBox, f64)] {
        &self.proposals
    }

    pub fn from_json(text: &str) -> Result<ProposalAttention, MapError> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(rename = "box")]
            bbox: BoundingBox,
            weight: f64,
        }
        let list: Vec<Doc> = serde_json::from_str(text)?;
        ProposalAttention::new(list.into_iter().map(|d| (d.bbox, d.weight)).collect())
    }
}

/// Columns (or rows) whose pixel centers fall inside `[lo, hi)` after
/// rescaling by `scale`.
pub(crate) fn covered_range(lo: f64, hi: f64, scale: f64, size: usize) -> std::ops::Range<usize> {
    let rlo = lo * scale;
    let rhi = hi * scale;
    // first index with center >= rlo, i.e. i + 0.5 >= rlo
    let start = (rlo - 0.5).ceil().max(0.0) as usize;
    let mut start = start.min(size);
    // centers are strictly below rhi
    let mut end = ((rhi - 0.5).floor() as i64 + 1).max(0) as usize;
    end = end.min(size);
    // guard against float edge cases: enforce the predicate exactly
    while start < end && (start as f64 + 0.5) < rlo {
        start += 1;
    }
    while end > start && ((end - 1) as f64 + 0.5) >= rhi {
        end -= 1;
    }
    start..end
}

/// Rasterize proposal attention as additive density on a `size x size`
/// grid: each proposal spreads `weight / covered_pixels` over its rescaled
/// box, so the pre-normalization integral equals the total weight exactly.
/// The result is then divided by its maximum like every other map.
pub fn rasterize_proposal_attention(
    pa: &ProposalAttention,
    image_w: f64,
    image_h: f64,
    size: usize,
) -> Result<AttentionMap, MapError> {
    if size == 0 {
        return Err(MapError::BadSize);
    }
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(MapError::BadImageDims(image_w, image_h));
    }
    let sx = size as f64 / image_w;
    let sy = size as f64 / image_h;
    let mut grid = Grid::zeros(size, size);
    for (index, (b, weight)) in pa.proposals.iter().enumerate() {
        let cols = covered_range(b.x, b.x + b.w, sx, size);
        let rows = covered_range(b.y, b.y + b.h, sy, size);
        let n = cols.len() * rows.len();
        if n == 0 {
            return Err(MapError::ZeroCoverage { index, size });
        }
        let density = weight / n as f64;
        for j in rows {
            for i in cols.clone() {
                let cur = grid.get(j, i);
                grid.set(j, i, cur + density);
            }
        }
    }
    let max = grid.max();
    let grid = if max > 0.0 { grid.map(|v| v / max) } else { grid };
    Ok(AttentionMap {
        grid,
        source: MapSource::Machine,
        normalized: true,
    })
}

/// Group fixations by question id, preserving order within each group.
pub fn fixations_by_question(fixations: &[Fixation]) -> BTreeMap<String, Vec<Fixation>> {
    let mut out: BTreeMap<String, Vec<Fixation>> = BTreeMap::new();
    for f in fixations {
        out.entry(f.question_id.clone()).or_default().push(f.clone());
    }
    out
}
