//! The description-pairing task: match each token on the sheet to one of
//! its shuffled descriptions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classify::{placeholder, TokenInventory};
use crate::dataset::{
    prompt_hash, render_token_sheet, validate_table, AnswerKeyEntry, Attachment, BundleMetadata,
    Condition, DescriptionTable, PromptBundle, QuestionKind, SheetLayout,
};
use crate::raster::sha256_hex;

/// `A`..`Z`, then `AA`, `AB`, ... (bijective base 26).
pub fn letter_label(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDescription {
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingTask {
    pub seed: u64,
    pub sheet: Attachment,
    /// Descriptions in shuffled order, labelled `A`, `B`, ...
    pub descriptions: Vec<LabeledDescription>,
    /// class_id → correct label.
    pub key: BTreeMap<usize, String>,
}

pub fn make_pairing_task(
    inventory: &TokenInventory,
    table: &DescriptionTable,
    seed: u64,
    layout: &SheetLayout,
) -> Result<PairingTask, EvalError> {
    let violations = validate_table(table, inventory);
    if !violations.is_empty() {
        return Err(EvalError::IncompleteTable(violations.len()));
    }
    if table.rows.len() < 2 {
        return Err(EvalError::TooFewRows(table.rows.len()));
    }
    let mut rows: Vec<_> = table.rows.iter().collect();
    rows.sort_by_key(|r| r.class_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);

    let mut key = BTreeMap::new();
    let descriptions = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let label = letter_label(i);
            key.insert(r.class_id, label.clone());
            LabeledDescription {
                label,
                description: r.description.trim().to_string(),
            }
        })
        .collect();
    let sheet = Attachment::png("token_sheet.png", render_token_sheet(inventory, layout)?);
    Ok(PairingTask {
        seed,
        sheet,
        descriptions,
        key,
    })
}

impl PairingTask {
    /// Key as `token_0=C, token_1=A, ...` in class order.
    pub fn answer_key(&self) -> String {
        self.key
            .iter()
            .map(|(c, l)| format!("token_{c}={l}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn prompt_text(&self) -> String {
        let tokens = self
            .key
            .keys()
            .map(|&c| placeholder(c))
            .collect::<Vec<_>>()
            .join(", ");
        let list = self
            .descriptions
            .iter()
            .map(|d| format!("{}. {}", d.label, d.description))
            .collect::<Vec<_>>()
            .join("\n");
        format!(
            "The attached image shows the tokens of an unknown script, each labelled with its \
             placeholder.\n\nTokens: {tokens}\n\nDescriptions:\n{list}\n\n\
             Match every token to the description that fits it. Each description fits exactly \
             one token.\nReason step by step. Then give your final answer on one line as\n\
             `ANSWER 1: token_0=<letter>, token_1=<letter>, ...`\n"
        )
    }

    /// A picture-condition bundle with a single matching question.
    pub fn to_bundle(&self, puzzle_id: &str) -> PromptBundle {
        let text = self.prompt_text();
        let attachments = vec![self.sheet.clone()];
        let build_hash = sha256_hex(
            serde_json::to_string(&(puzzle_id, self, prompt_hash(&text, &attachments)))
                .expect("task serializes")
                .as_bytes(),
        );
        PromptBundle {
            condition: Condition::Picture,
            text,
            attachments,
            answer_key: vec![AnswerKeyEntry {
                question_index: 0,
                kind: QuestionKind::Match,
                answer: self.answer_key(),
            }],
            metadata: BundleMetadata {
                puzzle_id: puzzle_id.to_string(),
                seed: self.seed,
                build_hash,
            },
        }
    }
}
