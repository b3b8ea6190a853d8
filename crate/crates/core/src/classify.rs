//! Token classes: grouping glyph occurrences into the identities that become
//! `<token_i>` placeholders.
//!
//! Occurrences are scaled onto a fixed square grid and compared by the
//! fraction of agreeing cells. Clustering is greedy leader clustering in
//! corpus order, so class ids follow first appearance.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BinaryRaster;
use crate::rle::{RleBitmap, RleError};
use crate::segment::{ColumnSpan, GlyphBox, GlyphOccurrence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("cannot normalize an empty glyph")]
    EmptyGlyph,
    #[error("grid sides differ: {0} vs {1}")]
    SideMismatch(usize, usize),
    #[error("invalid classifier parameters: {0}")]
    InvalidParams(String),
    #[error("unknown class id {0}")]
    UnknownClass(usize),
    #[error("invalid class action: {0}")]
    InvalidAction(String),
    #[error("bad exemplar bitmap: {0}")]
    BadBitmap(String),
}

impl ClassifyError {
    pub fn code(&self) -> &'static str {
        match self {
            ClassifyError::EmptyGlyph => "empty_glyph",
            ClassifyError::SideMismatch(..) => "side_mismatch",
            ClassifyError::InvalidParams(_) => "invalid_params",
            ClassifyError::UnknownClass(_) => "unknown_class",
            ClassifyError::InvalidAction(_) => "invalid_class_action",
            ClassifyError::BadBitmap(_) => "bad_bitmap",
        }
    }
}

/// A glyph scaled onto a `side × side` grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "RleBitmap", try_from = "RleBitmap")]
pub struct NormalizedGlyph {
    side: usize,
    grid: Vec<bool>,
}

impl From<NormalizedGlyph> for RleBitmap {
    fn from(g: NormalizedGlyph) -> Self {
        RleBitmap::encode(g.side, g.side, &g.grid)
    }
}

impl TryFrom<RleBitmap> for NormalizedGlyph {
    type Error = ClassifyError;

    fn try_from(r: RleBitmap) -> Result<Self, Self::Error> {
        if r.width != r.height {
            return Err(ClassifyError::BadBitmap(format!(
                "exemplar must be square, got {}x{}",
                r.width, r.height
            )));
        }
        let grid = r
            .decode()
            .map_err(|e: RleError| ClassifyError::BadBitmap(e.to_string()))?;
        NormalizedGlyph::new(r.width, grid)
    }
}

impl NormalizedGlyph {
    pub fn new(side: usize, grid: Vec<bool>) -> Result<Self, ClassifyError> {
        if side == 0 || grid.len() != side * side {
            return Err(ClassifyError::BadBitmap(format!(
                "grid of {} cells does not match side {side}",
                grid.len()
            )));
        }
        Ok(Self { side, grid })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn grid(&self) -> &[bool] {
        &self.grid
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.grid[y * self.side + x]
    }

    pub fn hflip(&self) -> Self {
        let s = self.side;
        let grid = (0..s * s).map(|i| self.grid[(i / s) * s + (s - 1 - i % s)]).collect();
        Self { side: s, grid }
    }

    /// Shifts content `dx` columns right (negative: left), filling with
    /// background.
    pub fn shifted(&self, dx: isize) -> Self {
        let s = self.side as isize;
        let grid = (0..s * s)
            .map(|i| {
                let (x, y) = (i % s - dx, i / s);
                (0..s).contains(&x) && self.grid[(y * s + x) as usize]
            })
            .collect();
        Self {
            side: self.side,
            grid,
        }
    }
}

/// Aspect-preserving nearest-neighbour scale so the larger dimension equals
/// `side`, centred on a background canvas.
pub fn normalize_raster(r: &BinaryRaster, side: usize) -> Result<NormalizedGlyph, ClassifyError> {
    if side == 0 {
        return Err(ClassifyError::InvalidParams("normalize side must be >= 1".into()));
    }
    if r.ink_count() == 0 {
        return Err(ClassifyError::EmptyGlyph);
    }
    let (w, h) = (r.width(), r.height());
    let m = w.max(h);
    let scaled = |d: usize| ((d * side * 2 + m) / (2 * m)).clamp(1, side);
    let (nw, nh) = (scaled(w), scaled(h));
    let (ox, oy) = ((side - nw) / 2, (side - nh) / 2);

    let mut grid = vec![false; side * side];
    for dy in 0..nh {
        let sy = dy * h / nh;
        for dx in 0..nw {
            let sx = dx * w / nw;
            grid[(oy + dy) * side + ox + dx] = r.get(sx, sy);
        }
    }
    if !grid.iter().any(|&b| b) {
        // Sampling skipped every ink pixel; keep the first one.
        let i = r.ink().iter().position(|&b| b).expect("ink present");
        let (sx, sy) = (i % w, i / w);
        grid[(oy + sy * nh / h) * side + ox + sx * nw / w] = true;
    }
    Ok(NormalizedGlyph { side, grid })
}

pub fn normalize_glyph(occ: &GlyphOccurrence, side: usize) -> Result<NormalizedGlyph, ClassifyError> {
    normalize_raster(&occ.raster, side)
}

/// Fraction of cells on which the two grids agree.
pub fn glyph_similarity(a: &NormalizedGlyph, b: &NormalizedGlyph) -> Result<f64, ClassifyError> {
    if a.side != b.side {
        return Err(ClassifyError::SideMismatch(a.side, b.side));
    }
    let same = a.grid.iter().zip(&b.grid).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.grid.len() as f64)
}

/// Similarity of `a` to the horizontal reflection of `b`, allowing a
/// one-column shift to absorb centring parity.
pub fn mirror_similarity(a: &NormalizedGlyph, b: &NormalizedGlyph) -> Result<f64, ClassifyError> {
    let flipped = b.hflip();
    let mut best = glyph_similarity(a, &flipped)?;
    for dx in [-1, 1] {
        best = best.max(glyph_similarity(a, &flipped.shifted(dx))?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub similarity_threshold: f64,
    pub normalize_side: usize,
    pub mirror_detection_enabled: bool,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.90,
            normalize_side: 32,
            mirror_detection_enabled: false,
        }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let t = self.similarity_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(ClassifyError::InvalidParams(format!(
                "similarity threshold must be in (0, 1], got {t}"
            )));
        }
        if self.normalize_side == 0 {
            return Err(ClassifyError::InvalidParams("normalize side must be >= 1".into()));
        }
        Ok(())
    }
}

/// Identifies one glyph occurrence in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OccurrenceRef {
    pub line_id: String,
    pub index: usize,
}

impl OccurrenceRef {
    pub fn new(line_id: impl Into<String>, index: usize) -> Self {
        Self {
            line_id: line_id.into(),
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenClass {
    pub class_id: usize,
    pub exemplar: NormalizedGlyph,
    pub member_refs: Vec<OccurrenceRef>,
    pub mirror_of: Option<usize>,
}

impl TokenClass {
    pub fn placeholder(&self) -> String {
        placeholder(self.class_id)
    }
}

pub fn placeholder(class_id: usize) -> String {
    format!("<token_{class_id}>")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub classes: Vec<TokenClass>,
    pub assignment: BTreeMap<OccurrenceRef, usize>,
}

/// Greedy leader clustering over pre-normalized glyphs, in the given order.
pub fn cluster_normalized(
    entries: &[(OccurrenceRef, NormalizedGlyph)],
    p: &ClassifierParams,
) -> Result<Clustering, ClassifyError> {
    p.validate()?;
    let mut classes: Vec<TokenClass> = Vec::new();
    let mut assignment = BTreeMap::new();
    for (r, g) in entries {
        let mut found = None;
        for c in &classes {
            if glyph_similarity(&c.exemplar, g)? >= p.similarity_threshold {
                found = Some(c.class_id);
                break;
            }
        }
        let id = match found {
            Some(id) => id,
            None => {
                classes.push(TokenClass {
                    class_id: classes.len(),
                    exemplar: g.clone(),
                    member_refs: Vec::new(),
                    mirror_of: None,
                });
                classes.len() - 1
            }
        };
        classes[id].member_refs.push(r.clone());
        assignment.insert(r.clone(), id);
    }
    Ok(Clustering {
        classes,
        assignment,
    })
}

/// One line's occurrences as clustering input.
#[derive(Debug, Clone, Copy)]
pub struct CorpusLine<'a> {
    pub line_id: &'a str,
    pub occurrences: &'a [GlyphOccurrence],
}

pub fn cluster_tokens(corpus: &[CorpusLine<'_>], p: &ClassifierParams) -> Result<Clustering, ClassifyError> {
    p.validate()?;
    let mut entries = Vec::new();
    for line in corpus {
        for occ in line.occurrences {
            entries.push((
                OccurrenceRef::new(line.line_id, occ.index_in_line),
                normalize_glyph(occ, p.normalize_side)?,
            ));
        }
    }
    cluster_normalized(&entries, p)
}

/// Finds horizontal mirror pairs among class exemplars and links them via
/// `mirror_of`. Self-symmetric classes never pair; each class pairs at most
/// once, with its most similar unpaired partner (lowest id on ties).
pub fn detect_mirror_pairs(
    classes: &mut [TokenClass],
    p: &ClassifierParams,
) -> Result<Vec<(usize, usize)>, ClassifyError> {
    p.validate()?;
    let tau = p.similarity_threshold;
    let mut symmetric = Vec::with_capacity(classes.len());
    for c in classes.iter() {
        symmetric.push(mirror_similarity(&c.exemplar, &c.exemplar)? >= tau);
    }
    let mut paired = vec![false; classes.len()];
    let mut pairs = Vec::new();
    for a in 0..classes.len() {
        if symmetric[a] || paired[a] {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for b in a + 1..classes.len() {
            if symmetric[b] || paired[b] {
                continue;
            }
            let s = mirror_similarity(&classes[a].exemplar, &classes[b].exemplar)?;
            if s >= tau && best.map_or(true, |(_, bs)| s > bs) {
                best = Some((b, s));
            }
        }
        if let Some((b, _)) = best {
            paired[a] = true;
            paired[b] = true;
            pairs.push((a, b));
        }
    }
    for c in classes.iter_mut() {
        c.mirror_of = None;
    }
    for &(a, b) in &pairs {
        classes[a].mirror_of = Some(b);
        classes[b].mirror_of = Some(a);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryOccurrence {
    pub index: usize,
    pub span: ColumnSpan,
    #[serde(rename = "box")]
    pub bbox: GlyphBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryLine {
    pub line_id: String,
    #[serde(default)]
    pub raster_sha256: String,
    pub width: usize,
    pub height: usize,
    pub occurrences: Vec<InventoryOccurrence>,
}

/// Everything downstream needs to know about the token classes of a corpus.
/// Field order is stable so files diff cleanly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenInventory {
    pub params: ClassifierParams,
    #[serde(default)]
    pub lines: Vec<InventoryLine>,
    pub classes: Vec<TokenClass>,
}

impl TokenInventory {
    pub fn from_classes(params: ClassifierParams, classes: Vec<TokenClass>) -> Self {
        Self {
            params,
            lines: Vec::new(),
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, id: usize) -> Result<&TokenClass, ClassifyError> {
        self.classes.get(id).ok_or(ClassifyError::UnknownClass(id))
    }

    /// Occurrence → class id.
    pub fn class_map(&self) -> HashMap<&OccurrenceRef, usize> {
        self.classes
            .iter()
            .flat_map(|c| c.member_refs.iter().map(move |r| (r, c.class_id)))
            .collect()
    }

    pub fn mirror_pairs(&self) -> Vec<(usize, usize)> {
        self.classes
            .iter()
            .filter_map(|c| c.mirror_of.filter(|&m| m > c.class_id).map(|m| (c.class_id, m)))
            .collect()
    }

    /// Checks ids are dense, membership is a partition and mirror links are
    /// a fixed-point-free involution.
    pub fn check_invariants(&self) -> Result<(), ClassifyError> {
        let mut seen = std::collections::HashSet::new();
        for (i, c) in self.classes.iter().enumerate() {
            if c.class_id != i {
                return Err(ClassifyError::InvalidAction(format!(
                    "class at position {i} has id {}",
                    c.class_id
                )));
            }
            if c.member_refs.is_empty() {
                return Err(ClassifyError::InvalidAction(format!("class {i} has no members")));
            }
            for r in &c.member_refs {
                if !seen.insert(r) {
                    return Err(ClassifyError::InvalidAction(format!(
                        "occurrence {}#{} is in more than one class",
                        r.line_id, r.index
                    )));
                }
            }
            if let Some(m) = c.mirror_of {
                let back = self.classes.get(m).and_then(|o| o.mirror_of);
                if m == i || back != Some(i) {
                    return Err(ClassifyError::InvalidAction(format!(
                        "mirror link {i} -> {m} is not symmetric"
                    )));
                }
            }
        }
        Ok(())
    }

    fn corpus_position(&self) -> impl Fn(&OccurrenceRef) -> (usize, String, usize) {
        let order: HashMap<String, usize> = self
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| (l.line_id.clone(), i))
            .collect();
        move |r| {
            let pos = order.get(r.line_id.as_str()).copied().unwrap_or(usize::MAX);
            (pos, r.line_id.clone(), r.index)
        }
    }

    /// Sorts members into corpus order and renumbers classes by first
    /// appearance.
    fn renumber(&mut self) {
        let pos = self.corpus_position();
        let mut classes = std::mem::take(&mut self.classes);
        for c in &mut classes {
            c.member_refs.sort_by_key(|r| pos(r));
        }
        classes.sort_by_key(|c| pos(&c.member_refs[0]));
        let remap: HashMap<usize, usize> = classes
            .iter()
            .enumerate()
            .map(|(new, c)| (c.class_id, new))
            .collect();
        for (new, c) in classes.iter_mut().enumerate() {
            c.class_id = new;
            c.mirror_of = c.mirror_of.map(|m| remap[&m]);
        }
        self.classes = classes;
    }

    fn unlink_mirror(&mut self, id: usize) {
        if let Some(m) = self.classes[id].mirror_of.take() {
            self.classes[m].mirror_of = None;
        }
    }

    /// Merges class `b` into `a`. The class appearing first in the corpus
    /// keeps its exemplar; ids are renumbered afterwards.
    pub fn merge(&mut self, a: usize, b: usize) -> Result<(), ClassifyError> {
        self.class(a)?;
        self.class(b)?;
        if a == b {
            return Err(ClassifyError::InvalidAction("cannot merge a class with itself".into()));
        }
        let pos = self.corpus_position();
        let (keep, drop_id) = if pos(&self.classes[a].member_refs[0]) <= pos(&self.classes[b].member_refs[0]) {
            (a, b)
        } else {
            (b, a)
        };
        let partner = self.classes[keep]
            .mirror_of
            .filter(|&m| m != drop_id)
            .or(self.classes[drop_id].mirror_of.filter(|&m| m != keep));
        self.unlink_mirror(keep);
        self.unlink_mirror(drop_id);
        if let Some(p) = partner {
            self.classes[keep].mirror_of = Some(p);
            self.classes[p].mirror_of = Some(keep);
        }
        let moved = std::mem::take(&mut self.classes[drop_id].member_refs);
        self.classes[keep].member_refs.extend(moved);
        self.classes.remove(drop_id);
        for c in &mut self.classes {
            c.mirror_of = c.mirror_of.map(|m| if m > drop_id { m - 1 } else { m });
            if c.class_id > drop_id {
                c.class_id -= 1;
            }
        }
        self.renumber();
        Ok(())
    }

    /// Moves `members` out of `class_id` into a new class. Exemplars of both
    /// parts are the glyph of their first member.
    pub fn split(
        &mut self,
        class_id: usize,
        members: &[OccurrenceRef],
        glyph_of: impl Fn(&OccurrenceRef) -> Option<NormalizedGlyph>,
    ) -> Result<(), ClassifyError> {
        let c = self.class(class_id)?;
        if members.is_empty() {
            return Err(ClassifyError::InvalidAction("split needs at least one member".into()));
        }
        if let Some(r) = members.iter().find(|r| !c.member_refs.contains(r)) {
            return Err(ClassifyError::InvalidAction(format!(
                "occurrence {}#{} is not a member of class {class_id}",
                r.line_id, r.index
            )));
        }
        let (moved, kept): (Vec<_>, Vec<_>) =
            c.member_refs.iter().cloned().partition(|r| members.contains(r));
        if kept.is_empty() {
            return Err(ClassifyError::InvalidAction("split would leave the class empty".into()));
        }
        let pos = self.corpus_position();
        let first = |refs: &[OccurrenceRef]| refs.iter().min_by_key(|r| pos(r)).cloned().unwrap();
        let (first_kept, first_moved) = (first(&kept), first(&moved));
        let glyph = |r: &OccurrenceRef| {
            glyph_of(r).ok_or_else(|| {
                ClassifyError::InvalidAction(format!("no glyph for occurrence {}#{}", r.line_id, r.index))
            })
        };
        let kept_exemplar = glyph(&first_kept)?;
        let moved_exemplar = glyph(&first_moved)?;
        self.classes[class_id].member_refs = kept;
        self.classes[class_id].exemplar = kept_exemplar;
        let new_id = self.classes.len();
        self.classes.push(TokenClass {
            class_id: new_id,
            exemplar: moved_exemplar,
            member_refs: moved,
            mirror_of: None,
        });
        self.renumber();
        Ok(())
    }

    /// Links `a` and `b` as mirror images, or clears `a`'s link when `b` is
    /// `None`. Existing links of either class are dropped.
    pub fn set_mirror(&mut self, a: usize, b: Option<usize>) -> Result<(), ClassifyError> {
        self.class(a)?;
        if let Some(b) = b {
            self.class(b)?;
            if a == b {
                return Err(ClassifyError::InvalidAction("a class cannot mirror itself".into()));
            }
            self.unlink_mirror(a);
            self.unlink_mirror(b);
            self.classes[a].mirror_of = Some(b);
            self.classes[b].mirror_of = Some(a);
        } else {
            self.unlink_mirror(a);
        }
        Ok(())
    }
}
