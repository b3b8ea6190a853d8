use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::parse::{parse_answer, score_answer, Metric, ParsedAnswer};
use super::score::PairingScore;
use super::EvalError;
use crate::client::{send_with_retry, FinishReason, ModelClient, ModelRequest, RetryPolicy, Usage};
use crate::dataset::{Condition, PromptBundle, QuestionKind};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant, so records are byte-reproducible.
pub struct FixedClock(pub DateTime<Utc>);

impl Default for FixedClock {
    fn default() -> Self {
        Self(DateTime::<Utc>::UNIX_EPOCH)
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Generation settings forwarded to every backend and recorded.
    pub settings: BTreeMap<String, serde_json::Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            concurrency: 4,
            retry: RetryPolicy::default(),
            settings: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// The reply arrived but no question's answer could be extracted.
    Unparseable,
    /// No reply after all retries.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question_index: usize,
    pub kind: QuestionKind,
    pub parsed: ParsedAnswer,
    pub metric: Metric,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<PairingScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub puzzle_id: String,
    pub condition: Condition,
    pub model_id: String,
    pub seed: u64,
    pub prompt_hash: String,
    pub build_hash: String,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Verbatim reply text; empty when the request failed.
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
    pub questions: Vec<QuestionResult>,
    pub started_at: String,
    pub finished_at: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub usage: Usage,
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Parses and scores every question of `bundle` against `raw`.
pub fn score_response(bundle: &PromptBundle, raw: &str) -> Vec<QuestionResult> {
    bundle
        .answer_key
        .iter()
        .map(|k| {
            let parsed = parse_answer(raw, k.kind, k.question_index + 1);
            let s = score_answer(k.kind, &parsed, &k.answer);
            QuestionResult {
                question_index: k.question_index,
                kind: k.kind,
                parsed,
                metric: s.metric,
                score: s.score,
                pairing: s.pairing,
            }
        })
        .collect()
}

/// Sends one bundle to one backend and scores the reply. Never fails: a
/// transport failure yields a `Failed` record whose questions all score 0.
pub fn run_condition(
    bundle: &PromptBundle,
    client: &dyn ModelClient,
    config: &RunConfig,
    clock: &dyn Clock,
) -> EvalRecord {
    let started = clock.now();
    let mut record = EvalRecord {
        puzzle_id: bundle.metadata.puzzle_id.clone(),
        condition: bundle.condition,
        model_id: client.model_id().to_string(),
        seed: config.seed,
        prompt_hash: bundle.prompt_hash(),
        build_hash: bundle.metadata.build_hash.clone(),
        status: RecordStatus::Failed,
        error: None,
        raw_response: String::new(),
        finish_reason: None,
        questions: score_response(bundle, ""),
        started_at: stamp(started),
        finished_at: String::new(),
        attempts: 0,
        latency_ms: 0,
        usage: Usage::default(),
        settings: config.settings.clone(),
    };
    let outcome = ModelRequest::from_bundle(client.model_id(), bundle)
        .map(|r| r.with_settings(config.settings.clone()))
        .map(|req| send_with_retry(client, &req, &config.retry));
    match outcome {
        Err(e) => record.error = Some(format!("{}: {e}", e.code())),
        Ok(out) => {
            record.attempts = out.attempts;
            match out.result {
                Err(e) => record.error = Some(format!("{}: {e}", e.code())),
                Ok(resp) => {
                    record.questions = score_response(bundle, &resp.text);
                    record.status = if !record.questions.is_empty()
                        && record.questions.iter().all(|q| q.parsed.is_unparseable())
                    {
                        RecordStatus::Unparseable
                    } else {
                        RecordStatus::Ok
                    };
                    record.raw_response = resp.text;
                    record.finish_reason = Some(resp.finish_reason);
                    record.latency_ms = resp.latency_ms;
                    record.usage = resp.usage;
                }
            }
        }
    }
    if record.status == RecordStatus::Failed {
        log::warn!(
            "{} on {} ({}): {}",
            record.model_id,
            record.puzzle_id,
            record.condition,
            record.error.as_deref().unwrap_or("failed")
        );
    }
    record.finished_at = stamp(clock.now());
    record
}

/// Applies `f` to every item on at most `cap` threads. Output order matches
/// input order.
pub fn fan_out<T: Sync, R: Send>(items: &[T], cap: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cap.clamp(1, items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                *slots[i].lock().expect("poisoned") = Some(f(item));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("poisoned").expect("every slot filled"))
        .collect()
}

/// Every bundle against every client, ordered by client then bundle.
pub fn run_matrix(
    bundles: &[PromptBundle],
    clients: &[&dyn ModelClient],
    config: &RunConfig,
    clock: &dyn Clock,
) -> Vec<EvalRecord> {
    let jobs: Vec<(usize, usize)> = (0..clients.len())
        .flat_map(|c| (0..bundles.len()).map(move |b| (c, b)))
        .collect();
    fan_out(&jobs, config.concurrency, |&(c, b)| {
        run_condition(&bundles[b], clients[c], config, clock)
    })
}

pub fn records_to_ndjson(records: &[EvalRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Appends records to an NDJSON file, creating it if needed.
pub fn append_records(path: &Path, records: &[EvalRecord]) -> Result<(), EvalError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(records_to_ndjson(records).as_bytes())
        .map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let f = std::fs::File::open(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::BadRecord(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}
