use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::store::{ClassAction, Edit};
use super::{io_err, read_json, write_json_atomic, Project, ProjectConfig, ProjectError};
use crate::classify::{
    cluster_tokens, detect_mirror_pairs, normalize_glyph, ClassifierParams, CorpusLine,
    InventoryLine, InventoryOccurrence, NormalizedGlyph, OccurrenceRef, TokenInventory,
};
use crate::dataset::{encode_placeholders, PuzzleDocument};
use crate::raster::{binarize, encode_png, load_line_image, resolve_threshold, sha256_hex, BinaryRaster, GrayRaster};
use crate::segment::{
    apply_corrections, segment_line_detailed, CorrectionSet, CutInterval, GlyphOccurrence,
};

/// The automatic segmentation of one line as written by `segment`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub line_id: String,
    pub raster_sha256: String,
    pub width: usize,
    pub height: usize,
    pub threshold: u8,
    pub cuts: Vec<CutInterval>,
    pub occurrences: Vec<InventoryOccurrence>,
}

fn inventory_occurrences(occs: &[GlyphOccurrence]) -> Vec<InventoryOccurrence> {
    occs.iter()
        .map(|o| InventoryOccurrence {
            index: o.index_in_line,
            span: o.span,
            bbox: o.bbox,
        })
        .collect()
}

/// One line with its automatic and corrected segmentation.
#[derive(Debug, Clone)]
pub struct LineState {
    pub line_id: String,
    pub gray: GrayRaster,
    pub binary: BinaryRaster,
    pub raster_sha256: String,
    pub threshold: u8,
    pub cuts: Vec<CutInterval>,
    pub automatic: Vec<GlyphOccurrence>,
    pub occurrences: Vec<GlyphOccurrence>,
    pub corrections: Option<CorrectionSet>,
}

impl LineState {
    pub fn png(&self) -> Vec<u8> {
        encode_png(&self.gray)
    }
}

/// Everything derived from the project files plus a set of corrections and
/// class actions.
#[derive(Debug, Clone)]
pub struct ReviewState {
    pub config: ProjectConfig,
    pub lines: Vec<LineState>,
    pub inventory: TokenInventory,
}

impl ReviewState {
    pub fn line(&self, line_id: &str) -> Option<&LineState> {
        self.lines.iter().find(|l| l.line_id == line_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineCount {
    pub line_id: String,
    /// Occurrences in the previous inventory, if there was one.
    pub before: Option<usize>,
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedPuzzle {
    pub puzzle_id: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewOutput {
    pub inventory: TokenInventory,
    pub encoded: Vec<EncodedPuzzle>,
    pub line_counts: Vec<LineCount>,
}

fn line_id_of(path: &Path) -> Result<String, ProjectError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or_else(|| ProjectError::Io(format!("{}: cannot derive a line id", path.display())))
}

impl Project {
    /// Copies `src` into `images/` (unless it is already there) and returns
    /// its line id. The image is stored as 8-bit grayscale PNG, inverted
    /// first when `invert` is set (light ink on a dark background).
    pub fn add_image(&self, src: &Path, invert: bool) -> Result<String, ProjectError> {
        let id = line_id_of(src)?;
        let dest = self.image_path(&id);
        let same = dest.exists()
            && std::fs::canonicalize(src).ok() == std::fs::canonicalize(&dest).ok();
        if !same {
            let gray = load_line_image(src)?;
            let gray = if invert { gray.inverted() } else { gray };
            super::write_atomic(&dest, &encode_png(&gray))?;
        }
        Ok(id)
    }

    /// Segments `sources` (or every image already in the project when empty)
    /// and writes `segments/<line>.json`. Saves `cfg` as the project config.
    pub fn segment(&self, sources: &[PathBuf], cfg: &ProjectConfig) -> Result<Vec<SegmentFile>, ProjectError> {
        self.segment_with(sources, cfg, false)
    }

    /// [`Project::segment`], inverting newly imported sources when `invert` is set.
    pub fn segment_with(
        &self,
        sources: &[PathBuf],
        cfg: &ProjectConfig,
        invert: bool,
    ) -> Result<Vec<SegmentFile>, ProjectError> {
        cfg.segmentation.validate()?;
        let ids = if sources.is_empty() {
            let dir = self.images_dir();
            let mut ids = Vec::new();
            for e in std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                let path = e.map_err(|e| io_err(&dir, e))?.path();
                if path.extension().is_some_and(|x| x == "png") {
                    ids.push(line_id_of(&path)?);
                }
            }
            if ids.is_empty() {
                return Err(ProjectError::Io(format!("no images in {}", dir.display())));
            }
            ids.sort();
            ids
        } else {
            let mut seen = std::collections::HashSet::new();
            for s in sources {
                let id = line_id_of(s)?;
                if !seen.insert(id.clone()) {
                    return Err(ProjectError::DuplicateLine(id));
                }
            }
            sources.iter().map(|s| self.add_image(s, invert)).collect::<Result<Vec<_>, _>>()?
        };
        self.save_config(cfg)?;
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let gray = load_line_image(&self.image_path(&id))?;
            let threshold = resolve_threshold(&gray, cfg.threshold);
            let seg = segment_line_detailed(&binarize(&gray, cfg.threshold), &cfg.segmentation)?;
            let file = SegmentFile {
                line_id: id.clone(),
                raster_sha256: sha256_hex(gray.pixels()),
                width: gray.width(),
                height: gray.height(),
                threshold,
                cuts: seg.cuts,
                occurrences: inventory_occurrences(&seg.occurrences),
            };
            write_json_atomic(&self.segment_path(&id), &file)?;
            out.push(file);
        }
        Ok(out)
    }

    fn load_line(
        &self,
        line_id: &str,
        cfg: &ProjectConfig,
        correction: Option<&CorrectionSet>,
    ) -> Result<LineState, ProjectError> {
        let seg_file: SegmentFile = read_json(&self.segment_path(line_id))?;
        let gray = load_line_image(&self.image_path(line_id))?;
        let sha = sha256_hex(gray.pixels());
        if sha != seg_file.raster_sha256 {
            return Err(ProjectError::MissingStep {
                what: format!("an up-to-date segmentation of {line_id} (the image changed)"),
                step: "segment",
            });
        }
        let threshold = resolve_threshold(&gray, cfg.threshold);
        let binary = binarize(&gray, cfg.threshold);
        let seg = segment_line_detailed(&binary, &cfg.segmentation)?;
        let occurrences = match correction {
            Some(c) => {
                if let Some(expected) = &c.raster_sha256 {
                    if *expected != sha {
                        return Err(ProjectError::StaleCorrection {
                            line_id: line_id.to_string(),
                            expected: expected.clone(),
                            actual: sha,
                        });
                    }
                }
                apply_corrections(&seg.occurrences, &binary, &cfg.segmentation, c)?
            }
            None => seg.occurrences.clone(),
        };
        Ok(LineState {
            line_id: line_id.to_string(),
            gray,
            binary,
            raster_sha256: sha,
            threshold,
            cuts: seg.cuts,
            automatic: seg.occurrences,
            occurrences,
            corrections: correction.cloned(),
        })
    }

    /// Replays `corrections` through the segmenter, clusters, then applies
    /// `actions` in order. Pure given the project files and arguments.
    pub fn build_state(
        &self,
        corrections: &BTreeMap<String, CorrectionSet>,
        actions: &[ClassAction],
    ) -> Result<ReviewState, ProjectError> {
        let config = self.config()?;
        config.classifier.validate()?;
        let ids = self.line_ids()?;
        if let Some(unknown) = corrections.keys().find(|k| !ids.contains(k)) {
            return Err(ProjectError::UnknownLine(unknown.clone()));
        }
        let lines = ids
            .iter()
            .map(|id| self.load_line(id, &config, corrections.get(id)))
            .collect::<Result<Vec<_>, _>>()?;
        let corpus: Vec<CorpusLine<'_>> = lines
            .iter()
            .map(|l| CorpusLine {
                line_id: &l.line_id,
                occurrences: &l.occurrences,
            })
            .collect();
        let params: ClassifierParams = config.classifier;
        let clustering = cluster_tokens(&corpus, &params)?;
        let mut inventory = TokenInventory {
            params,
            lines: lines
                .iter()
                .map(|l| InventoryLine {
                    line_id: l.line_id.clone(),
                    raster_sha256: l.raster_sha256.clone(),
                    width: l.gray.width(),
                    height: l.gray.height(),
                    occurrences: inventory_occurrences(&l.occurrences),
                })
                .collect(),
            classes: clustering.classes,
        };
        if params.mirror_detection_enabled {
            detect_mirror_pairs(&mut inventory.classes, &params)?;
        }
        if !actions.is_empty() {
            let glyphs: HashMap<OccurrenceRef, &GlyphOccurrence> = lines
                .iter()
                .flat_map(|l| {
                    l.occurrences
                        .iter()
                        .map(|o| (OccurrenceRef::new(l.line_id.clone(), o.index_in_line), o))
                })
                .collect();
            let glyph_of = |r: &OccurrenceRef| -> Option<NormalizedGlyph> {
                glyphs
                    .get(r)
                    .and_then(|o| normalize_glyph(o, params.normalize_side).ok())
            };
            for (index, a) in actions.iter().enumerate() {
                a.apply(&mut inventory, glyph_of)
                    .map_err(|message| ProjectError::ClassAction { index, message })?;
            }
        }
        inventory.check_invariants()?;
        Ok(ReviewState {
            config,
            lines,
            inventory,
        })
    }

    /// State from the saved corrections and class actions.
    pub fn replay(&self) -> Result<ReviewState, ProjectError> {
        self.build_state(&self.load_corrections()?, &self.load_class_actions()?)
    }

    /// Puzzle documents in `puzzles/`, in file name order.
    pub fn load_puzzles(&self) -> Result<Vec<PuzzleDocument>, ProjectError> {
        let dir = self.puzzles_dir();
        let Ok(entries) = std::fs::read_dir(&dir) else {
            return Ok(Vec::new());
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| read_json(p)).collect()
    }

    pub fn encoded_path(&self, puzzle_id: &str) -> PathBuf {
        self.build_dir().join("encoded").join(format!("{puzzle_id}.json"))
    }

    /// Rebuilds the inventory and placeholder texts from the saved
    /// corrections. Used by both `classify` and the review service.
    pub fn apply_review(&self) -> Result<ReviewOutput, ProjectError> {
        let previous: Option<TokenInventory> = self
            .inventory_path()
            .exists()
            .then(|| self.load_inventory())
            .transpose()?;
        let state = self.replay()?;
        let puzzles = self.load_puzzles()?;
        let encoded = puzzles
            .iter()
            .map(|doc| {
                Ok(EncodedPuzzle {
                    puzzle_id: doc.puzzle_id.clone(),
                    lines: encode_placeholders(doc, &state.inventory)?,
                })
            })
            .collect::<Result<Vec<_>, ProjectError>>()?;
        write_json_atomic(&self.inventory_path(), &state.inventory)?;
        for e in &encoded {
            write_json_atomic(&self.encoded_path(&e.puzzle_id), e)?;
        }
        let line_counts = state
            .inventory
            .lines
            .iter()
            .map(|l| LineCount {
                line_id: l.line_id.clone(),
                before: previous.as_ref().and_then(|p| {
                    p.lines
                        .iter()
                        .find(|o| o.line_id == l.line_id)
                        .map(|o| o.occurrences.len())
                }),
                after: l.occurrences.len(),
            })
            .collect();
        Ok(ReviewOutput {
            inventory: state.inventory,
            encoded,
            line_counts,
        })
    }

    /// Runs clustering with `params` (saved to the project config) and
    /// writes the inventory.
    pub fn classify(&self, params: ClassifierParams) -> Result<ReviewOutput, ProjectError> {
        params.validate()?;
        self.line_ids()?;
        let mut cfg = self.config()?;
        cfg.classifier = params;
        self.save_config(&cfg)?;
        self.apply_review()
    }

    /// Validates `c` against the live raster and the rest of the saved
    /// review, then persists it. An empty set clears the line's corrections.
    pub fn submit_correction(&self, mut c: CorrectionSet) -> Result<ReviewState, ProjectError> {
        let ids = self.line_ids()?;
        if !ids.contains(&c.line_id) {
            return Err(ProjectError::UnknownLine(c.line_id.clone()));
        }
        if c.raster_sha256.is_none() {
            let gray = load_line_image(&self.image_path(&c.line_id))?;
            c.raster_sha256 = Some(sha256_hex(gray.pixels()));
        }
        let mut all = self.load_corrections()?;
        if c.is_empty() {
            all.remove(&c.line_id);
        } else {
            all.insert(c.line_id.clone(), c.clone());
        }
        let state = self.build_state(&all, &self.load_class_actions()?)?;
        self.store_correction(&c)?;
        self.append_edit(Edit::Correction(c))?;
        Ok(state)
    }

    /// Validates and appends one class action.
    pub fn submit_class_action(&self, action: ClassAction) -> Result<ReviewState, ProjectError> {
        let mut actions = self.load_class_actions()?;
        actions.push(action.clone());
        let state = self.build_state(&self.load_corrections()?, &actions)?;
        self.store_class_actions(&actions)?;
        self.append_edit(Edit::ClassAction(action))?;
        Ok(state)
    }
}
