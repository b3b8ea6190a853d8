use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::classify::{placeholder, TokenInventory};

/// Upper bound on words per token description.
pub const MAX_DESCRIPTION_WORDS: usize = 35;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DescriptionViolation {
    Empty,
    TooLong { words: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionCheck {
    pub word_count: usize,
    pub violations: Vec<DescriptionViolation>,
}

impl DescriptionCheck {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Words are whitespace-delimited, so `left-facing` is one word.
pub fn validate_description(text: &str) -> DescriptionCheck {
    let word_count = text.split_whitespace().count();
    let mut violations = Vec::new();
    if word_count == 0 {
        violations.push(DescriptionViolation::Empty);
    }
    if word_count > MAX_DESCRIPTION_WORDS {
        violations.push(DescriptionViolation::TooLong { words: word_count });
    }
    DescriptionCheck {
        word_count,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionRow {
    pub class_id: usize,
    pub description: String,
    pub word_count: usize,
}

impl DescriptionRow {
    pub fn new(class_id: usize, description: impl Into<String>) -> Self {
        let description = description.into();
        let word_count = validate_description(&description).word_count;
        Self {
            class_id,
            description,
            word_count,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionTable {
    pub rows: Vec<DescriptionRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TableViolation {
    MissingDescription { class_id: usize },
    TooLong { class_id: usize, words: usize },
    WordCountMismatch { class_id: usize, recorded: usize, actual: usize },
    MissingRow { class_id: usize },
    UnknownClass { class_id: usize },
    DuplicateRow { class_id: usize },
}

/// One empty row per class, in class order.
pub fn scaffold_description_table(inventory: &TokenInventory) -> DescriptionTable {
    DescriptionTable {
        rows: inventory
            .classes
            .iter()
            .map(|c| DescriptionRow::new(c.class_id, ""))
            .collect(),
    }
}

pub fn validate_table(table: &DescriptionTable, inventory: &TokenInventory) -> Vec<TableViolation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for row in &table.rows {
        let id = row.class_id;
        if id >= inventory.len() {
            out.push(TableViolation::UnknownClass { class_id: id });
            continue;
        }
        if !seen.insert(id) {
            out.push(TableViolation::DuplicateRow { class_id: id });
            continue;
        }
        let check = validate_description(&row.description);
        if check.word_count != row.word_count {
            out.push(TableViolation::WordCountMismatch {
                class_id: id,
                recorded: row.word_count,
                actual: check.word_count,
            });
        }
        for v in check.violations {
            out.push(match v {
                DescriptionViolation::Empty => TableViolation::MissingDescription { class_id: id },
                DescriptionViolation::TooLong { words } => {
                    TableViolation::TooLong { class_id: id, words }
                }
            });
        }
    }
    for c in &inventory.classes {
        if !seen.contains(&c.class_id) {
            out.push(TableViolation::MissingRow { class_id: c.class_id });
        }
    }
    out
}

impl DescriptionTable {
    pub fn is_complete(&self, inventory: &TokenInventory) -> bool {
        validate_table(self, inventory).is_empty()
    }

    /// Rows sorted by class id, as `<token_i>: description` lines.
    pub fn render(&self) -> String {
        let mut rows: Vec<&DescriptionRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.class_id);
        rows.iter()
            .map(|r| format!("{}: {}", placeholder(r.class_id), r.description.trim()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Reads `class_id,description` CSV with a header row. Word counts are
    /// recomputed.
    pub fn read_csv(reader: impl Read) -> Result<Self, DatasetError> {
        #[derive(Deserialize)]
        struct CsvRow {
            class_id: usize,
            description: String,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<CsvRow>() {
            let rec = rec.map_err(|e| DatasetError::DescriptionFile(e.to_string()))?;
            rows.push(DescriptionRow::new(rec.class_id, rec.description));
        }
        Ok(Self { rows })
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| DatasetError::DescriptionFile(e.to_string());
        w.write_record(["class_id", "description"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([r.class_id.to_string(), r.description.clone()])
                .map_err(err)?;
        }
        w.flush()
            .map_err(|e| DatasetError::DescriptionFile(e.to_string()))
    }
}
