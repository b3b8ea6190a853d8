//! Glyph segmentation of a single line of script.
//!
//! Two adjacent glyphs are cut apart wherever an ink-free vertical corridor
//! at least `min_gap_width` columns wide runs between them. With the bridge
//! exception enabled the corridor only has to be ink-free inside the core
//! band, so glyphs joined by a horizontal stroke along the top or bottom of
//! the line are still separated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{column_profile_in, BinaryRaster, RowBand};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
    #[error("correction out of range: {0}")]
    CorrectionOutOfRange(String),
    #[error("correction produces an empty glyph: {0}")]
    EmptyGlyph(String),
}

impl SegmentError {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            SegmentError::InvalidParams(_) => "invalid_params",
            SegmentError::CorrectionOutOfRange(_) => "correction_out_of_range",
            SegmentError::EmptyGlyph(_) => "correction_produces_empty_glyph",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    pub min_gap_width: usize,
    pub band_top_frac: f64,
    pub band_bottom_frac: f64,
    pub bridge_exception_enabled: bool,
    pub min_glyph_width: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            min_gap_width: 2,
            band_top_frac: 0.15,
            band_bottom_frac: 0.85,
            bridge_exception_enabled: true,
            min_glyph_width: 2,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.min_gap_width < 1 {
            return Err(SegmentError::InvalidParams("min_gap_width must be >= 1".into()));
        }
        if self.min_glyph_width < 1 {
            return Err(SegmentError::InvalidParams("min_glyph_width must be >= 1".into()));
        }
        let (t, b) = (self.band_top_frac, self.band_bottom_frac);
        if !(t.is_finite() && b.is_finite() && 0.0 <= t && t < b && b <= 1.0) {
            return Err(SegmentError::InvalidParams(format!(
                "band fractions must satisfy 0 <= top < bottom <= 1 (got {t}, {b})"
            )));
        }
        Ok(())
    }

    /// Core band rows for a raster of the given height.
    pub fn core_band(&self, height: usize) -> Result<RowBand, SegmentError> {
        self.validate()?;
        RowBand::from_fractions(height, self.band_top_frac, self.band_bottom_frac)
            .map_err(|e| SegmentError::InvalidParams(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// No ink in any row.
    PlainGap,
    /// No ink in the core band, some ink above or below it.
    BridgedGap,
}

/// Half-open column range `[start_col, end_col)` where a cut may be made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CutInterval {
    pub start_col: usize,
    pub end_col: usize,
    pub kind: GapKind,
}

impl CutInterval {
    pub fn width(&self) -> usize {
        self.end_col - self.start_col
    }
}

/// Pixel bounds, inclusive-exclusive. Serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct GlyphBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl From<[usize; 4]> for GlyphBox {
    fn from(v: [usize; 4]) -> Self {
        GlyphBox {
            x0: v[0],
            y0: v[1],
            x1: v[2],
            y1: v[3],
        }
    }
}

impl From<GlyphBox> for [usize; 4] {
    fn from(b: GlyphBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl GlyphBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn union(&self, other: &GlyphBox) -> GlyphBox {
        GlyphBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

/// Half-open column range owned by a glyph between two cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct ColumnSpan {
    pub start: usize,
    pub end: usize,
}

impl From<[usize; 2]> for ColumnSpan {
    fn from(v: [usize; 2]) -> Self {
        ColumnSpan {
            start: v[0],
            end: v[1],
        }
    }
}

impl From<ColumnSpan> for [usize; 2] {
    fn from(s: ColumnSpan) -> Self {
        [s.start, s.end]
    }
}

impl ColumnSpan {
    pub fn width(&self) -> usize {
        self.end - self.start
    }
}

/// One segmented glyph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphOccurrence {
    pub index_in_line: usize,
    pub span: ColumnSpan,
    pub bbox: GlyphBox,
    /// Line raster cropped to `bbox`.
    pub raster: BinaryRaster,
}

impl GlyphOccurrence {
    fn from_box(index: usize, span: ColumnSpan, bbox: GlyphBox, line: &BinaryRaster) -> Self {
        GlyphOccurrence {
            index_in_line: index,
            span,
            bbox,
            raster: line.crop(bbox.x0, bbox.y0, bbox.x1, bbox.y1),
        }
    }

    /// Columns whose ink belongs to this glyph: its span plus any bridged
    /// extension columns attached to it.
    fn owned_columns(&self) -> (usize, usize) {
        (self.span.start.min(self.bbox.x0), self.span.end.max(self.bbox.x1))
    }
}

/// Cuts and glyphs of one line. Glyph spans and cuts tile `[0, width)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineSegmentation {
    pub cuts: Vec<CutInterval>,
    pub occurrences: Vec<GlyphOccurrence>,
}

pub fn find_cut_intervals(
    r: &BinaryRaster,
    p: &SegmentationParams,
) -> Result<Vec<CutInterval>, SegmentError> {
    let core = p.core_band(r.height())?;
    let full = column_profile_in(r, RowBand::full(r.height()));
    let core_counts = column_profile_in(r, core);
    let width = r.width();

    let open = |x: usize| {
        if p.bridge_exception_enabled {
            core_counts.counts[x] == 0
        } else {
            full.counts[x] == 0
        }
    };

    let mut cuts = Vec::new();
    let mut x = 0;
    while x < width {
        if !open(x) {
            x += 1;
            continue;
        }
        let start = x;
        while x < width && open(x) {
            x += 1;
        }
        let end = x;
        // Margins are cut intervals regardless of width.
        let margin = start == 0 || end == width;
        if end - start >= p.min_gap_width || margin {
            let bridged = (start..end).any(|c| full.counts[c] > 0);
            cuts.push(CutInterval {
                start_col: start,
                end_col: end,
                kind: if bridged {
                    GapKind::BridgedGap
                } else {
                    GapKind::PlainGap
                },
            });
        }
    }
    Ok(cuts)
}

pub fn segment_line(
    r: &BinaryRaster,
    p: &SegmentationParams,
) -> Result<Vec<GlyphOccurrence>, SegmentError> {
    Ok(segment_line_detailed(r, p)?.occurrences)
}

pub fn segment_line_detailed(
    r: &BinaryRaster,
    p: &SegmentationParams,
) -> Result<LineSegmentation, SegmentError> {
    let core = p.core_band(r.height())?;
    let core_counts = column_profile_in(r, core).counts;
    let cuts = find_cut_intervals(r, p)?;

    let mut raw_spans = Vec::new();
    let mut x = 0;
    for cut in &cuts {
        if cut.start_col > x {
            raw_spans.push(ColumnSpan {
                start: x,
                end: cut.start_col,
            });
        }
        x = cut.end_col;
    }
    if x < r.width() {
        raw_spans.push(ColumnSpan {
            start: x,
            end: r.width(),
        });
    }

    let has_core_ink = |s: &ColumnSpan| (s.start..s.end).any(|c| core_counts[c] > 0);
    let deficient = |s: &ColumnSpan| s.width() < p.min_glyph_width || !has_core_ink(s);

    // Deficient spans merge into their left neighbour; a leading one merges
    // right.
    let mut spans: Vec<ColumnSpan> = Vec::new();
    let mut carry: Option<ColumnSpan> = None;
    for span in raw_spans {
        let span = ColumnSpan {
            start: carry.take().map_or(span.start, |c| c.start),
            end: span.end,
        };
        if deficient(&span) {
            match spans.last_mut() {
                Some(last) => last.end = span.end,
                None => carry = Some(span),
            }
        } else {
            spans.push(span);
        }
    }
    // Every span was deficient; keep a lone narrow glyph if it has ink.
    if let Some(span) = carry {
        if has_core_ink(&span) {
            spans.push(span);
        }
    }

    let cuts: Vec<CutInterval> = cuts
        .into_iter()
        .filter(|c| !spans.iter().any(|s| c.start_col >= s.start && c.end_col <= s.end))
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; r.width()];
    for (i, s) in spans.iter().enumerate() {
        owner[s.start..s.end].iter_mut().for_each(|o| *o = Some(i));
    }
    for cut in cuts.iter().filter(|c| c.kind == GapKind::BridgedGap) {
        let left = spans.iter().position(|s| s.end == cut.start_col);
        let right = spans.iter().position(|s| s.start == cut.end_col);
        for c in cut.start_col..cut.end_col {
            let to_left = c - cut.start_col + 1;
            let to_right = cut.end_col - c;
            owner[c] = match (left, right) {
                (Some(l), Some(_)) if to_left <= to_right => Some(l),
                (_, Some(rt)) => Some(rt),
                (l, None) => l,
            };
        }
    }

    let mut boxes: Vec<Option<GlyphBox>> = vec![None; spans.len()];
    for y in 0..r.height() {
        for (x, o) in owner.iter().enumerate() {
            let Some(i) = *o else { continue };
            if !r.get(x, y) {
                continue;
            }
            let b = boxes[i].get_or_insert(GlyphBox {
                x0: x,
                y0: y,
                x1: x + 1,
                y1: y + 1,
            });
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x + 1);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y + 1);
        }
    }

    let occurrences = spans
        .iter()
        .zip(boxes)
        .enumerate()
        .map(|(i, (span, bbox))| {
            GlyphOccurrence::from_box(i, *span, bbox.expect("span has core ink"), r)
        })
        .collect();
    Ok(LineSegmentation { cuts, occurrences })
}

/// Forbids the cut between occurrence `left_index` and `left_index + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForbiddenCut {
    pub left_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxOverride {
    pub index: usize,
    #[serde(rename = "box")]
    pub bbox: GlyphBox,
}

/// Human adjudication of one line's segmentation.
///
/// Forced cuts are raster columns. Forbidden-cut indices refer to the
/// ordering after forced cuts; box-override indices refer to the ordering
/// after forbidden cuts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionSet {
    pub line_id: String,
    #[serde(default)]
    pub forced_cuts: Vec<usize>,
    #[serde(default)]
    pub forbidden_cuts: Vec<ForbiddenCut>,
    #[serde(default)]
    pub box_overrides: Vec<BoxOverride>,
    /// Hash of the image the corrections were made against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster_sha256: Option<String>,
}

impl CorrectionSet {
    pub fn new(line_id: impl Into<String>) -> Self {
        Self {
            line_id: line_id.into(),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.forced_cuts.is_empty() && self.forbidden_cuts.is_empty() && self.box_overrides.is_empty()
    }
}

fn ink_box(r: &BinaryRaster, x0: usize, x1: usize) -> Option<GlyphBox> {
    let mut b: Option<GlyphBox> = None;
    for y in 0..r.height() {
        for x in x0..x1 {
            if r.get(x, y) {
                let bb = b.get_or_insert(GlyphBox {
                    x0: x,
                    y0: y,
                    x1: x + 1,
                    y1: y + 1,
                });
                bb.x0 = bb.x0.min(x);
                bb.x1 = bb.x1.max(x + 1);
                bb.y1 = y + 1;
            }
        }
    }
    b
}

fn box_has_core_ink(r: &BinaryRaster, b: &GlyphBox, core: RowBand) -> bool {
    (b.y0.max(core.top)..b.y1.min(core.bottom + 1))
        .any(|y| (b.x0..b.x1).any(|x| r.get(x, y)))
}

pub fn apply_corrections(
    occs: &[GlyphOccurrence],
    r: &BinaryRaster,
    p: &SegmentationParams,
    c: &CorrectionSet,
) -> Result<Vec<GlyphOccurrence>, SegmentError> {
    let core = p.core_band(r.height())?;
    let mut out: Vec<GlyphOccurrence> = occs.to_vec();

    for &col in &c.forced_cuts {
        let Some(i) = out
            .iter()
            .position(|o| o.span.start < col && col < o.span.end)
        else {
            return Err(SegmentError::CorrectionOutOfRange(format!(
                "forced cut at column {col} is not strictly inside any glyph span"
            )));
        };
        let occ = &out[i];
        let (own0, own1) = occ.owned_columns();
        let pieces = [
            (ColumnSpan { start: occ.span.start, end: col }, own0, col),
            (ColumnSpan { start: col, end: occ.span.end }, col, own1),
        ];
        let mut split = Vec::with_capacity(2);
        for (span, x0, x1) in pieces {
            match ink_box(r, x0, x1) {
                Some(b) if box_has_core_ink(r, &b, core) => {
                    split.push(GlyphOccurrence::from_box(0, span, b, r))
                }
                _ => {
                    return Err(SegmentError::EmptyGlyph(format!(
                        "forced cut at column {col} leaves columns {x0}..{x1} without core-band ink"
                    )))
                }
            }
        }
        out.splice(i..=i, split);
    }

    if !c.forbidden_cuts.is_empty() {
        let mut joined = vec![false; out.len().saturating_sub(1)];
        for f in &c.forbidden_cuts {
            if f.left_index + 1 >= out.len() {
                return Err(SegmentError::CorrectionOutOfRange(format!(
                    "forbidden cut after occurrence {} but the line has {} occurrences",
                    f.left_index,
                    out.len()
                )));
            }
            joined[f.left_index] = true;
        }
        let mut merged: Vec<GlyphOccurrence> = Vec::new();
        for (i, occ) in out.into_iter().enumerate() {
            if i > 0 && joined[i - 1] {
                let last = merged.last_mut().expect("joined implies a predecessor");
                let bbox = last.bbox.union(&occ.bbox);
                let span = ColumnSpan {
                    start: last.span.start,
                    end: occ.span.end,
                };
                *last = GlyphOccurrence::from_box(0, span, bbox, r);
            } else {
                merged.push(occ);
            }
        }
        out = merged;
    }

    for o in &c.box_overrides {
        let b = o.bbox;
        if o.index >= out.len() {
            return Err(SegmentError::CorrectionOutOfRange(format!(
                "box override for occurrence {} but the line has {} occurrences",
                o.index,
                out.len()
            )));
        }
        if b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > r.width() || b.y1 > r.height() {
            return Err(SegmentError::CorrectionOutOfRange(format!(
                "box {:?} is empty or outside the {}x{} raster",
                <[usize; 4]>::from(b),
                r.width(),
                r.height()
            )));
        }
        let prev_end = if o.index > 0 { out[o.index - 1].bbox.x1 } else { 0 };
        let next_start = out.get(o.index + 1).map_or(r.width(), |n| n.bbox.x0);
        if b.x0 < prev_end || b.x1 > next_start {
            return Err(SegmentError::CorrectionOutOfRange(format!(
                "box {:?} overlaps a neighbouring glyph",
                <[usize; 4]>::from(b)
            )));
        }
        if !box_has_core_ink(r, &b, core) {
            return Err(SegmentError::EmptyGlyph(format!(
                "box {:?} contains no core-band ink",
                <[usize; 4]>::from(b)
            )));
        }
        let span = out[o.index].span;
        out[o.index] = GlyphOccurrence::from_box(o.index, span, b, r);
    }

    for (i, occ) in out.iter_mut().enumerate() {
        occ.index_in_line = i;
    }
    Ok(out)
}
