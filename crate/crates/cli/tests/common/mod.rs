#![allow(dead_code)]

use std::path::{Path, PathBuf};

use glyphforge_core::dataset::{DescriptionRow, DescriptionTable, PuzzleDocument, Question, QuestionKind, ScriptLine};
use glyphforge_core::raster::{encode_png, GrayRaster};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GLYPH: usize = 8;
const MARGIN: usize = 2;
const GAP: usize = 4;

/// An 8×8 bitmap with a full-height left stroke and a full-width middle bar,
/// so its box is always 8×8 and every column carries core-band ink.
pub type Glyph = [[bool; GLYPH]; GLYPH];

pub fn random_glyph(rng: &mut impl Rng) -> Glyph {
    let mut g = [[false; GLYPH]; GLYPH];
    for (y, row) in g.iter_mut().enumerate() {
        for (x, px) in row.iter_mut().enumerate() {
            *px = x == 0 || y == GLYPH / 2 || rng.gen_bool(0.5);
        }
    }
    g
}

/// `n` glyphs that pairwise differ in at least a quarter of their cells.
pub fn distinct_glyphs(n: usize, seed: u64) -> Vec<Glyph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Glyph> = Vec::new();
    while out.len() < n {
        let g = random_glyph(&mut rng);
        let far = out.iter().all(|o| {
            let diff = (0..GLYPH * GLYPH).filter(|&i| o[i / GLYPH][i % GLYPH] != g[i / GLYPH][i % GLYPH]).count();
            diff >= GLYPH * GLYPH / 4
        });
        if far {
            out.push(g);
        }
    }
    out
}

pub fn draw_line(glyphs: &[&Glyph]) -> GrayRaster {
    let h = GLYPH + 2 * MARGIN;
    let w = GAP + glyphs.len() * (GLYPH + GAP);
    let mut px = vec![255u8; w * h];
    for (i, g) in glyphs.iter().enumerate() {
        let x0 = GAP + i * (GLYPH + GAP);
        for (y, row) in g.iter().enumerate() {
            for (x, &ink) in row.iter().enumerate() {
                if ink {
                    px[(y + MARGIN) * w + x0 + x] = 0;
                }
            }
        }
    }
    GrayRaster::new(w, h, px).unwrap()
}

/// Writes one PNG per line (`line_00.png`, ...) where each line lists glyph
/// indices into `glyphs`.
pub fn write_lines(dir: &Path, glyphs: &[Glyph], lines: &[Vec<usize>]) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let refs: Vec<&Glyph> = line.iter().map(|&g| &glyphs[g]).collect();
            let path = dir.join(format!("line_{i:02}.png"));
            std::fs::write(&path, encode_png(&draw_line(&refs))).unwrap();
            path
        })
        .collect()
}

/// Runs the CLI in-process; returns (exit code, stdout, stderr).
pub fn cli<S: AsRef<str>>(args: &[S]) -> (i32, String, String) {
    let mut argv = vec!["glyphforge".to_string()];
    argv.extend(args.iter().map(|a| a.as_ref().to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = glyphforge_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

/// A demo puzzle over the lines written by [`write_lines`].
pub fn demo_puzzle(lines: usize) -> PuzzleDocument {
    PuzzleDocument {
        puzzle_id: "demo".into(),
        language_name: "Demo".into(),
        script_lines: (0..lines)
            .map(|i| ScriptLine::from_image(format!("w{i}"), format!("line_{i:02}")))
            .collect(),
        glosses: vec![],
        questions: vec![
            Question {
                kind: QuestionKind::Transliterate,
                prompt_text: "Transliterate line w0.".into(),
                answer_key: "kamuti".into(),
            },
            Question {
                kind: QuestionKind::MultipleChoice,
                prompt_text: "Which line is oldest? (A) w0 (B) w1".into(),
                answer_key: "B".into(),
            },
        ],
        unicode_text: None,
        writing_direction_hint: Some("right to left".into()),
    }
}

pub fn full_table(classes: usize) -> DescriptionTable {
    DescriptionTable {
        rows: (0..classes)
            .map(|c| DescriptionRow::new(c, format!("shape number {c} with a left stroke")))
            .collect(),
    }
}

pub fn write_table(path: &Path, table: &DescriptionTable) {
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes).unwrap();
    std::fs::write(path, bytes).unwrap();
}

/// Runs segment → classify → describe → build (three conditions) → pairing →
/// eval (oracle mock) → score in `root`, returning the score report path.
pub fn full_pipeline(root: &Path, seed: u64) -> PathBuf {
    let glyphs = distinct_glyphs(5, 11);
    let lines = vec![vec![0, 1, 2], vec![3, 0, 4, 1], vec![2, 2, 3]];
    let sources = write_lines(&root.join("src"), &glyphs, &lines);
    let proj = root.join("proj");
    let proj_s = p(&proj);
    let seed_s = seed.to_string();
    let mut args = vec!["segment".to_string(), "--project".into(), proj_s.clone()];
    args.extend(sources.iter().map(|s| p(s)));
    assert_eq!(cli(&args).0, 0);
    assert_eq!(cli(&["classify", "--project", &proj_s]).0, 0);
    glyphforge_core::project::write_json_atomic(&proj.join("puzzles/demo.json"), &demo_puzzle(lines.len())).unwrap();
    assert_eq!(cli(&["classify", "--project", &proj_s]).0, 0);
    write_table(&proj.join("descriptions.csv"), &full_table(5));
    let mut bundles = Vec::new();
    for cond in ["picture", "placeholder", "description"] {
        let (code, out, err) = cli(&[
            "build", "demo", "--project", &proj_s, "--condition", cond, "--seed", &seed_s, "--format", "json",
        ]);
        assert_eq!(code, 0, "{err}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        bundles.push(v["bundle"].as_str().unwrap().to_string());
    }
    let (code, _, err) = cli(&["pairing", "--project", &proj_s, "--seed", &seed_s]);
    assert_eq!(code, 0, "{err}");
    bundles.push(p(&proj.join(format!("build/pairing.{seed}.json"))));
    let mut args = vec!["eval".to_string(), "--project".into(), proj_s.clone(), "--backend".into(), "mock".into()];
    args.extend(["--seed".into(), seed_s.clone()]);
    args.extend(bundles);
    let (code, _, err) = cli(&args);
    assert_eq!(code, 0, "{err}");
    let report = proj.join("runs/report.json");
    let (code, _, err) = cli(&["score", &p(&proj.join("runs/mock.ndjson")), "--report", &p(&report)]);
    assert_eq!(code, 0, "{err}");
    report
}
