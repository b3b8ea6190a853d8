use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::classify::{OccurrenceRef, TokenInventory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Match,
    MultipleChoice,
    Transliterate,
    Translate,
    Free,
}

impl QuestionKind {
    pub fn label(&self) -> &'static str {
        match self {
            QuestionKind::Match => "matching",
            QuestionKind::MultipleChoice => "multiple choice",
            QuestionKind::Transliterate => "transliteration",
            QuestionKind::Translate => "translation",
            QuestionKind::Free => "free response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub kind: QuestionKind,
    pub prompt_text: String,
    pub answer_key: String,
}

/// One line of script as an ordered list of glyph occurrences, either
/// listed explicitly or as every occurrence of one image line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptLine {
    pub line_id: String,
    #[serde(default)]
    pub refs: Vec<OccurrenceRef>,
    /// Image line whose occurrences, in reading order, make up this line.
    /// Used when `refs` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl ScriptLine {
    pub fn new(line_id: impl Into<String>, refs: Vec<OccurrenceRef>) -> Self {
        Self {
            line_id: line_id.into(),
            refs,
            image: None,
        }
    }

    pub fn from_image(line_id: impl Into<String>, image: impl Into<String>) -> Self {
        Self {
            line_id: line_id.into(),
            refs: Vec::new(),
            image: Some(image.into()),
        }
    }

    /// The occurrences of this line, expanding `image` against the
    /// inventory's segmented lines.
    pub fn resolve(&self, inventory: &TokenInventory) -> Result<Vec<OccurrenceRef>, DatasetError> {
        match (&self.image, self.refs.is_empty()) {
            (Some(image), true) => inventory
                .lines
                .iter()
                .find(|l| &l.line_id == image)
                .map(|l| {
                    l.occurrences
                        .iter()
                        .map(|o| OccurrenceRef::new(image.clone(), o.index))
                        .collect()
                })
                .ok_or_else(|| DatasetError::UnknownImage {
                    line_id: self.line_id.clone(),
                    image: image.clone(),
                }),
            _ => Ok(self.refs.clone()),
        }
    }
}

/// Translation of the script lines `[line_span[0], line_span[1])`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gloss {
    pub line_span: [usize; 2],
    pub translation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleDocument {
    pub puzzle_id: String,
    pub language_name: String,
    pub script_lines: Vec<ScriptLine>,
    #[serde(default)]
    pub glosses: Vec<Gloss>,
    #[serde(default)]
    pub questions: Vec<Question>,
    /// Parallel Unicode rendering, one entry per script line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unicode_text: Option<Vec<String>>,
    /// Withheld from prompts unless explicitly revealed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub writing_direction_hint: Option<String>,
}

impl PuzzleDocument {
    /// Structural checks; with an inventory, also checks every occurrence
    /// ref resolves to a class.
    pub fn validate(&self, inventory: Option<&TokenInventory>) -> Result<(), DatasetError> {
        for (i, q) in self.questions.iter().enumerate() {
            if q.answer_key.trim().is_empty() {
                return Err(DatasetError::MissingAnswerKey(i));
            }
        }
        if let Some(u) = &self.unicode_text {
            if u.len() != self.script_lines.len() {
                return Err(DatasetError::UnicodeLineCount {
                    got: u.len(),
                    expected: self.script_lines.len(),
                });
            }
        }
        for (i, g) in self.glosses.iter().enumerate() {
            let [start, end] = g.line_span;
            if start >= end || end > self.script_lines.len() {
                return Err(DatasetError::BadGlossSpan {
                    index: i,
                    start,
                    end,
                    lines: self.script_lines.len(),
                });
            }
        }
        if let Some(inv) = inventory {
            let map = inv.class_map();
            for line in &self.script_lines {
                if let Some(r) = line.resolve(inv)?.iter().find(|r| !map.contains_key(r)) {
                    return Err(DatasetError::UnresolvedRef {
                        line_id: line.line_id.clone(),
                        ref_line: r.line_id.clone(),
                        ref_index: r.index,
                    });
                }
            }
        }
        Ok(())
    }
}
