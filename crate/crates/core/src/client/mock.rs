use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ClientError, FinishReason, ModelClient, ModelRequest, ModelResponse, Usage};
use crate::dataset::{prompt_hash, PromptBundle, QuestionKind};

/// What a [`MockBackend`] replies.
#[derive(Debug, Clone, PartialEq)]
pub enum MockBehavior {
    Fixed(String),
    /// Replies by prompt hash, falling back to `fallback` for unknown prompts.
    Canned {
        responses: HashMap<String, String>,
        fallback: String,
    },
    Empty,
}

/// Deterministic in-process backend. Replies depend only on the request.
#[derive(Debug)]
pub struct MockBackend {
    model_id: String,
    behavior: MockBehavior,
    fail_remaining: AtomicUsize,
    failure: Option<ClientError>,
    calls: AtomicUsize,
    attachment_counts: Mutex<Vec<usize>>,
}

impl MockBackend {
    pub fn new(model_id: impl Into<String>, behavior: MockBehavior) -> Self {
        Self {
            model_id: model_id.into(),
            behavior,
            fail_remaining: AtomicUsize::new(0),
            failure: None,
            calls: AtomicUsize::new(0),
            attachment_counts: Mutex::new(Vec::new()),
        }
    }

    /// Answers every question of every bundle with its answer key.
    pub fn oracle(model_id: impl Into<String>, bundles: &[PromptBundle]) -> Self {
        Self::pairing_accuracy(model_id, bundles, 1.0)
    }

    /// Like [`MockBackend::oracle`], except matching answers get only
    /// `round(fraction * n)` of their `n` pairs right.
    pub fn pairing_accuracy(model_id: impl Into<String>, bundles: &[PromptBundle], fraction: f64) -> Self {
        let responses = bundles
            .iter()
            .map(|b| {
                let text = b
                    .answer_key
                    .iter()
                    .map(|k| {
                        let answer = match k.kind {
                            QuestionKind::Match => degrade_pairs(&k.answer, fraction),
                            _ => k.answer.clone(),
                        };
                        format!("ANSWER {}: {}", k.question_index + 1, answer)
                    })
                    .collect::<Vec<_>>()
                    .join("\n");
                (b.prompt_hash(), text)
            })
            .collect();
        Self::new(
            model_id,
            MockBehavior::Canned {
                responses,
                fallback: String::new(),
            },
        )
    }

    /// The first `n` calls fail with `error`.
    pub fn failing_first(mut self, n: usize, error: ClientError) -> Self {
        self.fail_remaining = AtomicUsize::new(n);
        self.failure = Some(error);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Number of attachments seen on each call, in call order.
    pub fn attachment_counts(&self) -> Vec<usize> {
        self.attachment_counts.lock().expect("poisoned").clone()
    }
}

fn degrade_pairs(key: &str, fraction: f64) -> String {
    let pairs: Vec<(&str, &str)> = key
        .split(',')
        .filter_map(|p| p.split_once('='))
        .map(|(a, b)| (a.trim(), b.trim()))
        .collect();
    let n = pairs.len();
    let keep = (fraction.clamp(0.0, 1.0) * n as f64).round() as usize;
    pairs
        .iter()
        .enumerate()
        .map(|(j, (item, value))| {
            if j < keep {
                format!("{item}={value}")
            } else if n > 1 {
                format!("{item}={}", pairs[(j + 1) % n].1)
            } else {
                format!("{item}=?")
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

impl ModelClient for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.attachment_counts
            .lock()
            .expect("poisoned")
            .push(req.attachments.len());
        req.validate()?;
        if let Some(err) = &self.failure {
            let left = self
                .fail_remaining
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1));
            if left.is_ok() {
                return Err(err.clone());
            }
        }
        let text = match &self.behavior {
            MockBehavior::Fixed(t) => t.clone(),
            MockBehavior::Empty => String::new(),
            MockBehavior::Canned {
                responses,
                fallback,
            } => responses
                .get(&prompt_hash(&req.prompt, &req.attachments))
                .unwrap_or(fallback)
                .clone(),
        };
        Ok(ModelResponse {
            usage: Usage {
                input_tokens: req.prompt.split_whitespace().count() as u64,
                output_tokens: text.split_whitespace().count() as u64,
            },
            text,
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
        })
    }
}
