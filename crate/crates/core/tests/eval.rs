mod support;

use std::collections::BTreeMap;

use glyphforge_core::classify::{ClassifierParams, OccurrenceRef, TokenClass, TokenInventory};
use glyphforge_core::client::{ClientError, MockBackend, MockBehavior, ModelClient, RetryPolicy};
use glyphforge_core::dataset::{
    AnswerKeyEntry, BundleMetadata, Condition, DescriptionRow, DescriptionTable, PromptBundle, QuestionKind,
    SheetLayout,
};
use glyphforge_core::eval::{
    aggregate_report, letter_label, make_pairing_task, parse_answer, percent, render_table, run_condition,
    run_matrix, score_answer, score_exact, score_pairing, score_transliteration, EvalRecord, ExactNormalizer,
    FixedClock, Metric, ParsedAnswer, QuestionResult, RecordStatus, RunConfig,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{edit_distance_oracle, permutations, random_grid};

fn inventory(k: usize) -> TokenInventory {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    TokenInventory::from_classes(
        ClassifierParams::default(),
        (0..k)
            .map(|i| TokenClass {
                class_id: i,
                exemplar: random_grid(&mut rng, 6, 0.5),
                member_refs: vec![OccurrenceRef::new("l", i)],
                mirror_of: None,
            })
            .collect(),
    )
}

fn table(k: usize) -> DescriptionTable {
    DescriptionTable {
        rows: (0..k).map(|c| DescriptionRow::new(c, format!("figure {c}"))).collect(),
    }
}

#[test]
fn pairing_labels_are_uniform_over_seeds() {
    let (k, seeds) = (5, 100u64);
    let inv = inventory(k);
    let t = table(k);
    let mut counts = vec![BTreeMap::<String, usize>::new(); k];
    for seed in 0..seeds {
        let task = make_pairing_task(&inv, &t, seed, &SheetLayout::default()).unwrap();
        for (class, label) in &task.key {
            *counts[*class].entry(label.clone()).or_default() += 1;
        }
    }
    // Each row's label is multinomial(n = 100, p = 1/5): mean 20, sd 4.
    let mean = seeds as f64 / k as f64;
    let sd = (seeds as f64 * (1.0 / k as f64) * (1.0 - 1.0 / k as f64)).sqrt();
    for row in &counts {
        for i in 0..k {
            let c = row.get(&letter_label(i)).copied().unwrap_or(0) as f64;
            assert!((c - mean).abs() <= 3.0 * sd, "row {row:?}");
        }
    }
}

#[test]
fn pairing_score_is_fixed_point_fraction_for_every_permutation() {
    for n in 2..=6 {
        let key: BTreeMap<usize, String> = (0..n).map(|i| (i, letter_label(i))).collect();
        for perm in permutations(n) {
            let parsed: BTreeMap<usize, String> = perm.iter().enumerate().map(|(i, &j)| (i, letter_label(j))).collect();
            let fixed = perm.iter().enumerate().filter(|(i, j)| i == *j).count();
            let s = score_pairing(&parsed, &key);
            assert_eq!((s.correct, s.total), (fixed, n));
            assert_eq!(s.accuracy(), fixed as f64 / n as f64);
        }
    }
    assert_eq!(permutations(4).len(), 24);
}

#[test]
fn six_of_twelve_is_one_half() {
    let key: BTreeMap<usize, String> = (0..12).map(|i| (i, letter_label(i))).collect();
    let parsed: BTreeMap<usize, String> =
        (0..12).map(|i| (i, letter_label(if i < 6 { i } else { (i + 1) % 12 }))).collect();
    let s = score_pairing(&parsed, &key);
    assert_eq!(s.accuracy(), 0.5);
    assert_eq!(s.to_string(), "6/12");
}

#[test]
fn transliteration_matches_dp_oracle() {
    assert!((score_transliteration("abc", "abd").unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let alphabet: Vec<char> = "abcdeñ".chars().collect();
    for _ in 0..2000 {
        let mut word = |min: usize| -> String {
            (0..rng.gen_range(min..=12)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect()
        };
        let (p, g) = (word(0), word(1));
        let d = edit_distance_oracle(&p, &g);
        let want = 1.0 - d as f64 / p.chars().count().max(g.chars().count()) as f64;
        assert_eq!(score_transliteration(&p, &g).unwrap(), want, "{p:?} vs {g:?}");
    }
    assert!(score_transliteration("x", "").is_err());
}

fn keep_alnum_lower(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() {
            for l in c.to_lowercase() {
                out.push(l);
            }
        }
    }
    out
}

#[test]
fn alnum_exact_matches_manual_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let alphabet: Vec<char> = "aAbB1 .,-!é".chars().collect();
    for _ in 0..5000 {
        let mut s = || -> String { (0..rng.gen_range(0..6)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect() };
        let (p, g) = (s(), s());
        let want = if keep_alnum_lower(&p) == keep_alnum_lower(&g) { 1.0 } else { 0.0 };
        assert_eq!(score_exact(&p, &g, ExactNormalizer::AlnumOnly), want, "{p:?} {g:?}");
    }
}

/// A reply that buries `answer` in chatter, markdown and red herrings.
fn noisy_reply(rng: &mut impl Rng, answer: &str) -> String {
    let preambles = [
        "Let me think about this step by step.",
        "Looking at the glyphs, the first one resembles a hook.",
        "Option C seemed plausible at first, but no.",
        "",
    ];
    let forms = [
        format!("ANSWER 1: {answer}"),
        format!("**ANSWER 1:** {answer}"),
        format!("Answer 1 = {answer}"),
        format!("### Final answer 1: {answer}"),
        format!("- answer to question 1: \"{answer}\""),
        format!("ANSWER 1:\n\n{answer}"),
    ];
    let mut out = String::new();
    for _ in 0..rng.gen_range(0..3) {
        out += preambles.choose(rng).unwrap();
        out.push('\n');
    }
    out += forms.choose(rng).unwrap();
    out.push('\n');
    if rng.gen_bool(0.5) {
        out += "I hope this helps!\n";
    }
    out
}

#[test]
fn noisy_replies_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut recovered = 0;
    for i in 0..50 {
        let (kind, key) = match i % 3 {
            0 => (QuestionKind::MultipleChoice, ["A", "B", "C", "D"].choose(&mut rng).unwrap().to_string()),
            1 => (QuestionKind::Transliterate, ["kamuti", "selam", "ota na"].choose(&mut rng).unwrap().to_string()),
            _ => (QuestionKind::Match, "token_0=B, token_1=A, token_2=C".to_string()),
        };
        let reply = noisy_reply(&mut rng, &key);
        let parsed = parse_answer(&reply, kind, 1);
        if score_answer(kind, &parsed, &key).score == 1.0 {
            recovered += 1;
        } else {
            eprintln!("missed: {reply:?} -> {parsed:?}");
        }
    }
    assert!(recovered >= 48, "{recovered}/50");
}

#[test]
fn scripted_forty_percent_pairing_reports_forty_percent() {
    let inv = inventory(10);
    let task = make_pairing_task(&inv, &table(10), 7, &SheetLayout::default()).unwrap();
    let bundle = task.to_bundle("pairing");
    let mock = MockBackend::pairing_accuracy("scripted", std::slice::from_ref(&bundle), 0.4);
    let rec = run_condition(&bundle, &mock, &RunConfig::default(), &FixedClock::default());
    let report = aggregate_report(&[rec]);
    let row = &report.by_condition[0];
    assert_eq!((row.pairing.correct, row.pairing.total), (4, 10));
    assert_eq!(row.pairing.mean, Some(0.4));
    assert_eq!(percent(0.4), "40.0%");
    assert!(render_table(&report).contains("40.0%"));
}

fn bundle(puzzle: &str, condition: Condition, keys: &[(QuestionKind, &str)]) -> PromptBundle {
    PromptBundle {
        condition,
        text: format!("Solve {puzzle} under {condition}."),
        attachments: vec![],
        answer_key: keys
            .iter()
            .enumerate()
            .map(|(i, (kind, a))| AnswerKeyEntry {
                question_index: i,
                kind: *kind,
                answer: a.to_string(),
            })
            .collect(),
        metadata: BundleMetadata {
            puzzle_id: puzzle.into(),
            seed: 0,
            build_hash: format!("h-{puzzle}"),
        },
    }
}

#[test]
fn no_record_is_dropped() {
    let keys = [(QuestionKind::MultipleChoice, "B"), (QuestionKind::Transliterate, "kamu")];
    let bundles: Vec<PromptBundle> = (0..5)
        .map(|i| bundle(&format!("p{i}"), Condition::PlaceholderOnly, &keys[..1 + i % 2]))
        .collect();
    let ok = MockBackend::oracle("ok", &bundles);
    let empty = MockBackend::new("empty", MockBehavior::Empty);
    let broken = MockBackend::new("broken", MockBehavior::Empty).failing_first(usize::MAX, ClientError::Auth("denied".into()));
    let clients: [&dyn ModelClient; 3] = [&ok, &empty, &broken];
    let cfg = RunConfig {
        retry: RetryPolicy::immediate(1),
        ..Default::default()
    };
    let records = run_matrix(&bundles, &clients, &cfg, &FixedClock::default());
    assert_eq!(records.len(), bundles.len() * clients.len());
    let questions: usize = bundles.iter().map(|b| b.answer_key.len()).sum();
    for c in clients {
        let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.model_id == c.model_id()).collect();
        assert_eq!(mine.iter().map(|r| r.questions.len()).sum::<usize>(), questions);
    }
    assert!(records.iter().filter(|r| r.model_id == "broken").all(|r| r.status == RecordStatus::Failed));
}

fn synthetic_records(rng: &mut impl Rng, n: usize) -> Vec<EvalRecord> {
    (0..n)
        .map(|i| {
            let questions = (0..rng.gen_range(0..4))
                .map(|q| {
                    let (metric, kind) = [
                        (Metric::Pairing, QuestionKind::Match),
                        (Metric::Exact, QuestionKind::MultipleChoice),
                        (Metric::Transliteration, QuestionKind::Transliterate),
                    ][rng.gen_range(0..3)];
                    let total = rng.gen_range(1..8);
                    let correct = rng.gen_range(0..=total);
                    let score = if metric == Metric::Pairing { correct as f64 / total as f64 } else { rng.gen_range(0..=4) as f64 / 4.0 };
                    QuestionResult {
                        question_index: q,
                        kind,
                        parsed: if rng.gen_bool(0.2) { ParsedAnswer::Unparseable } else { ParsedAnswer::Text("x".into()) },
                        metric,
                        score,
                        pairing: (metric == Metric::Pairing).then_some(glyphforge_core::eval::PairingScore { correct, total }),
                    }
                })
                .collect();
            EvalRecord {
                puzzle_id: format!("p{}", rng.gen_range(0..3)),
                condition: Condition::ALL[rng.gen_range(0..2)],
                model_id: ["m1", "m2"][rng.gen_range(0..2)].into(),
                seed: rng.gen_range(0..2),
                prompt_hash: format!("{i}"),
                build_hash: String::new(),
                status: [RecordStatus::Ok, RecordStatus::Unparseable, RecordStatus::Failed][rng.gen_range(0..3)],
                error: None,
                raw_response: String::new(),
                finish_reason: None,
                questions,
                started_at: String::new(),
                finished_at: String::new(),
                attempts: 1,
                latency_ms: 0,
                usage: Default::default(),
                settings: Default::default(),
            }
        })
        .collect()
}

#[test]
fn aggregates_match_single_pass_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let records = synthetic_records(&mut rng, 100);
    let report = aggregate_report(&records);
    #[derive(Default, Debug)]
    struct Tally {
        records: usize,
        failed: usize,
        questions: usize,
        pairing: (f64, usize),
        correct: usize,
        total: usize,
        exact: (f64, usize),
        translit: (f64, usize),
    }
    let mut oracle: BTreeMap<(String, Condition), Tally> = BTreeMap::new();
    for r in &records {
        let t = oracle.entry((r.model_id.clone(), r.condition)).or_default();
        t.records += 1;
        t.failed += usize::from(r.status == RecordStatus::Failed);
        for q in &r.questions {
            t.questions += 1;
            let slot = match q.metric {
                Metric::Pairing => {
                    let p = q.pairing.unwrap();
                    t.correct += p.correct;
                    t.total += p.total;
                    &mut t.pairing
                }
                Metric::Exact => &mut t.exact,
                Metric::Transliteration => &mut t.translit,
            };
            slot.0 += q.score;
            slot.1 += 1;
        }
    }
    assert_eq!(report.by_condition.len(), oracle.len());
    let close = |got: Option<f64>, (sum, n): (f64, usize)| match got {
        None => n == 0,
        Some(m) => n > 0 && (m - sum / n as f64).abs() < 1e-12,
    };
    for row in &report.by_condition {
        let t = &oracle[&(row.model_id.clone(), row.condition)];
        assert_eq!((row.records, row.failed, row.questions), (t.records, t.failed, t.questions));
        assert_eq!((row.pairing.correct, row.pairing.total), (t.correct, t.total));
        assert!(close(row.pairing.mean, t.pairing), "{row:?} {t:?}");
        assert!(close(row.exact.mean, t.exact));
        assert!(close(row.transliteration.mean, t.translit));
    }
    let per_puzzle: usize = report.by_puzzle.iter().map(|r| r.records).sum();
    assert_eq!(per_puzzle, records.len());
}

proptest! {
    #[test]
    fn report_ignores_record_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = synthetic_records(&mut rng, 40);
        let a = aggregate_report(&records).to_json();
        records.shuffle(&mut rng);
        prop_assert_eq!(a, aggregate_report(&records).to_json());
    }

    #[test]
    fn transliteration_is_symmetric_and_bounded(a in "[a-d ]{0,12}", b in "[a-d ]{0,12}") {
        let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        if !norm(&a).is_empty() && !norm(&b).is_empty() {
            let (x, y) = (score_transliteration(&a, &b).unwrap(), score_transliteration(&b, &a).unwrap());
            prop_assert_eq!(x, y);
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(x == 1.0, norm(&a) == norm(&b));
        }
    }
}
