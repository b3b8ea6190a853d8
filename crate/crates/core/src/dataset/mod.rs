//! Puzzle datasets built from a token inventory: placeholder text, the
//! labelled token sheet, description tables and per-condition prompt bundles.

mod description;
mod encode;
mod prompt;
mod puzzle;
mod sheet;

pub use description::{
    scaffold_description_table, validate_description, validate_table, DescriptionCheck,
    DescriptionRow, DescriptionTable, DescriptionViolation, TableViolation,
    MAX_DESCRIPTION_WORDS,
};
pub use encode::{decode_placeholders, encode_placeholders};
pub use prompt::{
    build_prompt_bundle, prompt_hash, AnswerKeyEntry, Attachment, BuildOptions, BundleMetadata,
    Condition, PromptBundle, PromptTemplate, DEFAULT_TEMPLATE, PNG_MIME,
};
pub use puzzle::{Gloss, PuzzleDocument, Question, QuestionKind, ScriptLine};
pub use sheet::{render_token_sheet, render_token_sheet_raster, SheetLayout};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("line {line_id}: occurrence {ref_line}#{ref_index} is not in the token inventory")]
    UnresolvedRef {
        line_id: String,
        ref_line: String,
        ref_index: usize,
    },
    #[error("line {line_id}: image line {image:?} is not in the token inventory")]
    UnknownImage { line_id: String, image: String },
    #[error("puzzle has no unicode_text; the unicode condition needs it")]
    MissingUnicodeText,
    #[error("unicode_text has {got} entries but the puzzle has {expected} script lines")]
    UnicodeLineCount { got: usize, expected: usize },
    #[error("question {0} has an empty answer_key")]
    MissingAnswerKey(usize),
    #[error("gloss {index} covers lines {start}..{end} but the puzzle has {lines} lines")]
    BadGlossSpan {
        index: usize,
        start: usize,
        end: usize,
        lines: usize,
    },
    #[error("description table is incomplete ({0} violations)")]
    IncompleteTable(usize),
    #[error("description condition needs a description table")]
    MissingTable,
    #[error("token inventory is empty")]
    EmptyInventory,
    #[error("layout too small: {0}")]
    LayoutTooSmall(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("answer key of question {0} appears verbatim in the prompt")]
    AnswerKeyLeak(usize),
    #[error("malformed placeholder text: {0}")]
    MalformedPlaceholder(String),
    #[error("description file error: {0}")]
    DescriptionFile(String),
}

impl DatasetError {
    /// Name of the puzzle field or artifact at fault, for user messages.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            DatasetError::MissingUnicodeText | DatasetError::UnicodeLineCount { .. } => {
                Some("unicode_text")
            }
            DatasetError::MissingAnswerKey(_) => Some("answer_key"),
            DatasetError::BadGlossSpan { .. } => Some("glosses"),
            DatasetError::UnresolvedRef { .. } | DatasetError::UnknownImage { .. } => {
                Some("script_lines")
            }
            _ => None,
        }
    }
}
