//! Prompt bundles: the complete model input for one puzzle under one input
//! condition.

use std::fmt;
use std::str::FromStr;

use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{
    encode_placeholders, render_token_sheet, validate_table, DatasetError, DescriptionTable,
    PuzzleDocument, QuestionKind, SheetLayout,
};
use crate::classify::TokenInventory;
use crate::raster::sha256_hex;

pub const PNG_MIME: &str = "image/png";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Placeholder text plus the labelled token sheet image.
    Picture,
    /// Placeholder text plus the description table.
    Description,
    /// Placeholder text only.
    PlaceholderOnly,
    /// The script's own Unicode text.
    Unicode,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Picture,
        Condition::Description,
        Condition::PlaceholderOnly,
        Condition::Unicode,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Picture => "picture",
            Condition::Description => "description",
            Condition::PlaceholderOnly => "placeholder_only",
            Condition::Unicode => "unicode",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "picture" => Ok(Condition::Picture),
            "description" => Ok(Condition::Description),
            "placeholder" | "placeholder_only" => Ok(Condition::PlaceholderOnly),
            "unicode" => Ok(Condition::Unicode),
            other => Err(format!(
                "unknown condition {other:?} (expected picture, description, placeholder or unicode)"
            )),
        }
    }
}

/// An image sent alongside the prompt. Bytes travel base64-encoded in JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub mime: String,
    #[serde(serialize_with = "b64_ser", deserialize_with = "b64_de")]
    pub data: Vec<u8>,
}

impl Attachment {
    pub fn png(name: impl Into<String>, data: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            mime: PNG_MIME.into(),
            data,
        }
    }
}

fn b64_ser<S: Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(data))
}

fn b64_de<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let s = String::deserialize(d)?;
    base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub question_index: usize,
    pub kind: QuestionKind,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub puzzle_id: String,
    pub seed: u64,
    pub build_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub condition: Condition,
    pub text: String,
    pub attachments: Vec<Attachment>,
    pub answer_key: Vec<AnswerKeyEntry>,
    pub metadata: BundleMetadata,
}

/// Hash of exactly what a model sees: prompt text and attachment bytes.
pub fn prompt_hash(text: &str, attachments: &[Attachment]) -> String {
    let mut buf = Vec::with_capacity(text.len());
    buf.extend_from_slice(text.as_bytes());
    for a in attachments {
        buf.push(0);
        buf.extend_from_slice(a.mime.as_bytes());
        buf.push(0);
        buf.extend_from_slice(&a.data);
    }
    sha256_hex(&buf)
}

impl PromptBundle {
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.text, &self.attachments)
    }

    /// Checks the per-condition shape: one token sheet for picture, nothing
    /// attached otherwise.
    pub fn check_invariants(&self) -> Result<(), String> {
        let pngs = self.attachments.iter().filter(|a| a.mime == PNG_MIME).count();
        match self.condition {
            Condition::Picture if self.attachments.len() != 1 || pngs != 1 => {
                Err("picture bundles carry exactly one PNG token sheet".into())
            }
            Condition::Description | Condition::PlaceholderOnly | Condition::Unicode
                if !self.attachments.is_empty() =>
            {
                Err(format!("{} bundles carry no attachments", self.condition))
            }
            _ => Ok(()),
        }
    }
}

pub const DEFAULT_TEMPLATE: &str = "\
You are solving a linguistics puzzle about {{language}}.
{{attachment_note}}
Script:
{{script}}

Translations:
{{glosses}}
{{description_table}}{{direction_hint}}
Questions:
{{questions}}

Reason step by step. Then give each final answer on its own line as
`ANSWER <question number>: <answer>`. For matching questions, write the pairs
on that line as `item=choice` separated by commas.
";

/// UTF-8 text with `{{slot}}` markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            name: "default".into(),
            text: DEFAULT_TEMPLATE.into(),
        }
    }
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }

    fn slot_names(&self) -> Result<Vec<String>, DatasetError> {
        let mut names = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let end = after
                .find("}}")
                .ok_or_else(|| DatasetError::Template("unterminated {{ marker".into()))?;
            names.push(after[..end].trim().to_string());
            rest = &after[end + 2..];
        }
        Ok(names)
    }

    /// Fills every slot from `values`; unknown slot names are an error.
    pub fn render(&self, values: &[(&str, String)]) -> Result<String, DatasetError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after
                .find("}}")
                .ok_or_else(|| DatasetError::Template("unterminated {{ marker".into()))?;
            let name = after[..end].trim();
            let value = values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| DatasetError::Template(format!("unknown slot {{{{{name}}}}}")))?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub seed: u64,
    /// Include the puzzle's writing-direction hint in the prompt.
    pub reveal_direction: bool,
    pub sheet: SheetLayout,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            reveal_direction: false,
            sheet: SheetLayout::default(),
        }
    }
}

/// Answer keys shorter than this are not checked for verbatim leaks; a
/// one-letter key like `B` occurs in almost any prompt.
const LEAK_CHECK_MIN_CHARS: usize = 4;

pub fn build_prompt_bundle(
    doc: &PuzzleDocument,
    inventory: &TokenInventory,
    table: Option<&DescriptionTable>,
    condition: Condition,
    template: &PromptTemplate,
    options: &BuildOptions,
) -> Result<PromptBundle, DatasetError> {
    let slots = template.slot_names()?;
    for required in ["script", "questions"] {
        if !slots.iter().any(|s| s == required) {
            return Err(DatasetError::Template(format!(
                "template {:?} has no {{{{{required}}}}} slot",
                template.name
            )));
        }
    }
    if condition == Condition::Description && !slots.iter().any(|s| s == "description_table") {
        return Err(DatasetError::Template(format!(
            "template {:?} has no {{{{description_table}}}} slot",
            template.name
        )));
    }

    let unicode = match condition {
        Condition::Unicode => Some(
            doc.unicode_text
                .as_ref()
                .ok_or(DatasetError::MissingUnicodeText)?,
        ),
        _ => None,
    };
    doc.validate(if unicode.is_some() { None } else { Some(inventory) })?;

    let table = match condition {
        Condition::Description => {
            let t = table.ok_or(DatasetError::MissingTable)?;
            let violations = validate_table(t, inventory);
            if !violations.is_empty() {
                return Err(DatasetError::IncompleteTable(violations.len()));
            }
            Some(t)
        }
        _ => None,
    };

    let lines = match unicode {
        Some(u) => u.clone(),
        None => encode_placeholders(doc, inventory)?,
    };
    let script = lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {}", i + 1, l))
        .collect::<Vec<_>>()
        .join("\n");
    let glosses = doc
        .glosses
        .iter()
        .map(|g| {
            let [s, e] = g.line_span;
            if e - s == 1 {
                format!("Line {}: {}", s + 1, g.translation)
            } else {
                format!("Lines {}-{}: {}", s + 1, e, g.translation)
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let questions = doc
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| format!("Question {} ({}): {}", i + 1, q.kind.label(), q.prompt_text))
        .collect::<Vec<_>>()
        .join("\n");
    let description_table = match table {
        Some(t) => format!("\nToken descriptions:\n{}\n", t.render()),
        None => String::new(),
    };
    let attachment_note = match condition {
        Condition::Picture => {
            "The attached image shows every token with its placeholder printed beneath it.\n"
                .to_string()
        }
        _ => String::new(),
    };
    let direction_hint = match (&doc.writing_direction_hint, options.reveal_direction) {
        (Some(h), true) => format!("\nWriting direction: {h}\n"),
        _ => String::new(),
    };

    let text = template.render(&[
        ("language", doc.language_name.clone()),
        ("script", script),
        ("glosses", glosses),
        ("questions", questions),
        ("description_table", description_table),
        ("attachment_note", attachment_note),
        ("direction_hint", direction_hint),
    ])?;

    for (i, q) in doc.questions.iter().enumerate() {
        let key = q.answer_key.trim();
        if key.chars().count() >= LEAK_CHECK_MIN_CHARS && text.contains(key) {
            return Err(DatasetError::AnswerKeyLeak(i));
        }
    }

    let attachments = match condition {
        Condition::Picture => vec![Attachment::png(
            "token_sheet.png",
            render_token_sheet(inventory, &options.sheet)?,
        )],
        _ => Vec::new(),
    };

    let build_hash = {
        #[derive(Serialize)]
        struct Inputs<'a> {
            doc: &'a PuzzleDocument,
            inventory: &'a TokenInventory,
            table: Option<&'a DescriptionTable>,
            condition: Condition,
            template: &'a str,
            options: &'a BuildOptions,
        }
        let json = serde_json::to_vec(&Inputs {
            doc,
            inventory,
            table,
            condition,
            template: &template.text,
            options,
        })
        .expect("inputs serialize");
        sha256_hex(&json)
    };

    Ok(PromptBundle {
        condition,
        text,
        attachments,
        answer_key: doc
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| AnswerKeyEntry {
                question_index: i,
                kind: q.kind,
                answer: q.answer_key.clone(),
            })
            .collect(),
        metadata: BundleMetadata {
            puzzle_id: doc.puzzle_id.clone(),
            seed: options.seed,
            build_hash,
        },
    })
}
