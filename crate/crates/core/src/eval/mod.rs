//! Running prompt bundles against backends, the description-pairing task,
//! scoring and reporting.

mod pairing;
mod parse;
mod report;
mod run;
mod score;

pub use pairing::{letter_label, make_pairing_task, LabeledDescription, PairingTask};
pub use parse::{
    normalize_item, parse_answer, parse_pairs, score_answer, Metric, ParsedAnswer, QuestionScore,
};
pub use report::{
    aggregate_report, percent, render_table, MetricSummary, PairingSummary, Report, ReportRow,
    SeedScores, TRANSLITERATION_METRIC,
};
pub use run::{
    append_records, fan_out, read_records, records_to_ndjson, run_condition, run_matrix,
    score_response, Clock, EvalRecord, FixedClock, QuestionResult, RecordStatus, RunConfig,
    SystemClock,
};
pub use score::{
    levenshtein, normalize_text, score_exact, score_pairing, score_transliteration,
    ExactNormalizer, PairingScore,
};

use thiserror::Error;

use crate::dataset::DatasetError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("description table is incomplete ({0} problems)")]
    IncompleteTable(usize),
    #[error("pairing needs at least 2 descriptions, got {0}")]
    TooFewRows(usize),
    #[error("gold answer is empty")]
    EmptyGold,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io: {0}")]
    Io(String),
    #[error("bad record: {0}")]
    BadRecord(String),
}
