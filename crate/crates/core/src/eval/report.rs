//! Aggregation of evaluation records. The report is a pure fold over the
//! records and does not depend on their order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::parse::Metric;
use super::run::{EvalRecord, RecordStatus};
use super::score::PairingScore;
use crate::dataset::Condition;

pub const TRANSLITERATION_METRIC: &str = "normalized_levenshtein";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Mean over scored questions; `None` when none were scored.
    pub mean: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub mean: Option<f64>,
    pub count: usize,
    pub correct: usize,
    pub total: usize,
}

impl PairingSummary {
    pub fn counts(&self) -> PairingScore {
        PairingScore {
            correct: self.correct,
            total: self.total,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedScores {
    pub pairing: Vec<f64>,
    pub exact: Vec<f64>,
    pub transliteration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    pub condition: Condition,
    /// `None` on rows that roll up every puzzle.
    pub puzzle_id: Option<String>,
    pub records: usize,
    pub failed: usize,
    pub unparseable_records: usize,
    pub questions: usize,
    pub unparseable_questions: usize,
    pub pairing: PairingSummary,
    pub exact: MetricSummary,
    pub transliteration: MetricSummary,
    /// Raw per-question scores by seed, each list sorted ascending.
    pub per_seed: BTreeMap<u64, SeedScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub transliteration_metric: String,
    pub by_puzzle: Vec<ReportRow>,
    pub by_condition: Vec<ReportRow>,
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.by_puzzle.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Default)]
struct Acc {
    records: usize,
    failed: usize,
    unparseable_records: usize,
    questions: usize,
    unparseable_questions: usize,
    pairing: Vec<f64>,
    correct: usize,
    total: usize,
    exact: Vec<f64>,
    translit: Vec<f64>,
    per_seed: BTreeMap<u64, SeedScores>,
}

impl Acc {
    fn add(&mut self, r: &EvalRecord) {
        self.records += 1;
        match r.status {
            RecordStatus::Failed => self.failed += 1,
            RecordStatus::Unparseable => self.unparseable_records += 1,
            RecordStatus::Ok => {}
        }
        let seed = self.per_seed.entry(r.seed).or_default();
        for q in &r.questions {
            self.questions += 1;
            if q.parsed.is_unparseable() {
                self.unparseable_questions += 1;
            }
            match q.metric {
                Metric::Pairing => {
                    self.pairing.push(q.score);
                    seed.pairing.push(q.score);
                    if let Some(p) = q.pairing {
                        self.correct += p.correct;
                        self.total += p.total;
                    }
                }
                Metric::Exact => {
                    self.exact.push(q.score);
                    seed.exact.push(q.score);
                }
                Metric::Transliteration => {
                    self.translit.push(q.score);
                    seed.transliteration.push(q.score);
                }
            }
        }
    }

    fn finish(self, model_id: String, condition: Condition, puzzle_id: Option<String>) -> ReportRow {
        let mut per_seed = self.per_seed;
        for s in per_seed.values_mut() {
            for v in [&mut s.pairing, &mut s.exact, &mut s.transliteration] {
                v.sort_by(f64::total_cmp);
            }
        }
        let pairing = summarize(self.pairing);
        ReportRow {
            model_id,
            condition,
            puzzle_id,
            records: self.records,
            failed: self.failed,
            unparseable_records: self.unparseable_records,
            questions: self.questions,
            unparseable_questions: self.unparseable_questions,
            pairing: PairingSummary {
                mean: pairing.mean,
                count: pairing.count,
                correct: self.correct,
                total: self.total,
            },
            exact: summarize(self.exact),
            transliteration: summarize(self.translit),
            per_seed,
        }
    }
}

/// Mean summed in sorted order so the result is independent of input order.
fn summarize(mut scores: Vec<f64>) -> MetricSummary {
    scores.sort_by(f64::total_cmp);
    let count = scores.len();
    MetricSummary {
        mean: (count > 0).then(|| scores.iter().sum::<f64>() / count as f64),
        count,
    }
}

pub fn aggregate_report(records: &[EvalRecord]) -> Report {
    let mut by_puzzle: BTreeMap<(String, Condition, String), Acc> = BTreeMap::new();
    let mut by_condition: BTreeMap<(String, Condition), Acc> = BTreeMap::new();
    for r in records {
        by_puzzle
            .entry((r.model_id.clone(), r.condition, r.puzzle_id.clone()))
            .or_default()
            .add(r);
        by_condition
            .entry((r.model_id.clone(), r.condition))
            .or_default()
            .add(r);
    }
    Report {
        transliteration_metric: TRANSLITERATION_METRIC.into(),
        by_puzzle: by_puzzle
            .into_iter()
            .map(|((m, c, p), acc)| acc.finish(m, c, Some(p)))
            .collect(),
        by_condition: by_condition
            .into_iter()
            .map(|((m, c), acc)| acc.finish(m, c, None))
            .collect(),
    }
}

/// `0.4` → `40.0%`.
pub fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn cell(m: Option<f64>) -> String {
    m.map(percent).unwrap_or_else(|| "-".into())
}

/// Plain-text table: per-condition rollups, then per-puzzle rows.
pub fn render_table(report: &Report) -> String {
    if report.is_empty() {
        return "no records\n".into();
    }
    let header = [
        "model", "condition", "puzzle", "pairing", "pairs", "exact", "translit", "failed",
    ];
    let mut rows: Vec<[String; 8]> = Vec::new();
    for r in report.by_condition.iter().chain(&report.by_puzzle) {
        rows.push([
            r.model_id.clone(),
            r.condition.to_string(),
            r.puzzle_id.clone().unwrap_or_else(|| "(all)".into()),
            cell(r.pairing.mean),
            if r.pairing.total > 0 {
                r.pairing.counts().to_string()
            } else {
                "-".into()
            },
            cell(r.exact.mean),
            cell(r.transliteration.mean),
            format!("{}/{}", r.failed, r.records),
        ]);
    }
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header);
    for row in &rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let _ = writeln!(out, "transliteration metric: {}", report.transliteration_metric);
    out
}
