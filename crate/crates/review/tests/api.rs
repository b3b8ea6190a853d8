use std::collections::BTreeSet;
use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use glyphforge_core::classify::{cluster_tokens, ClassifierParams, CorpusLine, TokenInventory};
use glyphforge_core::dataset::{PuzzleDocument, ScriptLine};
use glyphforge_core::project::{write_json_atomic, Project, ProjectConfig};
use glyphforge_core::raster::{binarize, encode_png, load_line_image, GrayRaster, Threshold};
use glyphforge_core::segment::{segment_line, SegmentationParams};
use glyphforge_review::{router, App};

const L: [&str; 8] = ["#.....", "#.....", "#.....", "#.....", "#.....", "#.....", "#.....", "######"];
const J: [&str; 8] = [".....#", ".....#", ".....#", ".....#", ".....#", ".....#", ".....#", "######"];
const O: [&str; 8] = ["######", "#....#", "#....#", "#....#", "#....#", "#....#", "#....#", "######"];

fn draw(glyphs: &[[&str; 8]]) -> GrayRaster {
    let (h, gap) = (12, 4);
    let w = gap + glyphs.len() * (6 + gap);
    let mut px = vec![255u8; w * h];
    for (i, g) in glyphs.iter().enumerate() {
        let x0 = gap + i * (6 + gap);
        for (y, row) in g.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                if c == '#' {
                    px[(y + 2) * w + x0 + x] = 0;
                }
            }
        }
    }
    GrayRaster::new(w, h, px).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    project: Project,
    sources: Vec<PathBuf>,
}

fn fixture(mirror_detection: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    let mut sources = Vec::new();
    for (name, glyphs) in [("a", vec![L, O, L]), ("b", vec![J, O])] {
        let path = src.join(format!("{name}.png"));
        std::fs::write(&path, encode_png(&draw(&glyphs))).unwrap();
        sources.push(path);
    }
    let project = Project::init(dir.path().join("proj")).unwrap();
    project.segment(&sources, &ProjectConfig::default()).unwrap();
    project
        .classify(ClassifierParams {
            mirror_detection_enabled: mirror_detection,
            ..Default::default()
        })
        .unwrap();
    let doc = PuzzleDocument {
        puzzle_id: "demo".into(),
        language_name: "Demo".into(),
        script_lines: vec![ScriptLine::from_image("w1", "a"), ScriptLine::from_image("w2", "b")],
        glosses: vec![],
        questions: vec![],
        unicode_text: None,
        writing_direction_hint: None,
    };
    write_json_atomic(&project.puzzles_dir().join("demo.json"), &doc).unwrap();
    Fixture {
        _dir: dir,
        project,
        sources,
    }
}

fn app(f: &Fixture) -> Router {
    router(App::open(f.project.clone()).unwrap(), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

fn partition(inv: &TokenInventory) -> BTreeSet<BTreeSet<(String, usize)>> {
    inv.classes
        .iter()
        .map(|c| c.member_refs.iter().map(|r| (r.line_id.clone(), r.index)).collect())
        .collect()
}

#[tokio::test]
async fn lists_two_lines() {
    let f = fixture(false);
    let (status, v) = call(&app(&f), "GET", "/api/lines", None).await;
    assert_eq!(status, StatusCode::OK);
    let lines = v.as_array().unwrap();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["line_id"], "a");
    assert_eq!(lines[0]["occurrence_count"], 3);
    assert_eq!(lines[1]["occurrence_count"], 2);
}

#[tokio::test]
async fn line_detail_has_png_boxes_and_cuts() {
    let f = fixture(false);
    let (status, v) = call(&app(&f), "GET", "/api/lines/a", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["png"].as_str().unwrap().starts_with("iVBORw0KGgo"));
    assert_eq!(v["occurrences"].as_array().unwrap().len(), 3);
    assert_eq!(v["occurrences"][0]["box"], json!([4, 2, 10, 10]));
    assert_eq!(v["cuts"].as_array().unwrap().len(), 4);
    assert_eq!(v["cuts"][1]["kind"], "plain_gap");
    assert_eq!(v["placeholders"], "<token_0> <token_1> <token_0>");
    let (status, v) = call(&app(&f), "GET", "/api/lines/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_line");
}

#[tokio::test]
async fn out_of_range_cut_is_422_with_reason() {
    let f = fixture(false);
    let app = app(&f);
    let body = json!({"line_id": "a", "forced_cuts": [1], "forbidden_cuts": [], "box_overrides": []});
    let (status, v) = call(&app, "POST", "/api/corrections", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "correction_out_of_range");
    assert!(f.project.load_corrections().unwrap().is_empty());

    let (status, v) = call(&app, "POST", "/api/corrections", Some(json!({"forced_cuts": "x"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "bad_request_body");

    let body = json!({"line_id": "a", "box_overrides": [{"index": 0, "box": [4, 2, 18, 10]}]});
    let (status, v) = call(&app, "POST", "/api/corrections", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
}

#[tokio::test]
async fn forced_cut_then_rebuild_adds_one_token() {
    let f = fixture(false);
    let app = app(&f);
    let body = json!({"line_id": "b", "forced_cuts": [17]});
    let (status, v) = call(&app, "POST", "/api/corrections", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["occurrences"].as_array().unwrap().len(), 3);
    assert!(v["corrections"]["raster_sha256"].is_string());

    let (status, v) = call(&app, "POST", "/api/rebuild", None).await;
    assert_eq!(status, StatusCode::OK);
    let counts = v["line_counts"].as_array().unwrap();
    assert_eq!(counts[1], json!({"line_id": "b", "before": 2, "after": 3}));
    assert_eq!(counts[0], json!({"line_id": "a", "before": 3, "after": 3}));

    // The saved files alone reproduce the rebuilt dataset.
    let inv_bytes = std::fs::read(f.project.inventory_path()).unwrap();
    f.project.apply_review().unwrap();
    assert_eq!(std::fs::read(f.project.inventory_path()).unwrap(), inv_bytes);
}

#[tokio::test]
async fn merge_matches_offline_forced_equivalence() {
    let f = fixture(false);
    let app = app(&f);
    let (_, before) = call(&app, "GET", "/api/inventory", None).await;
    let before: TokenInventory = serde_json::from_value(before).unwrap();
    assert_eq!(before.len(), 3);

    let (status, _) = call(&app, "POST", "/api/classes/merge", Some(json!({"a": 0, "b": 2}))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, after) = call(&app, "GET", "/api/inventory", None).await;
    let after: TokenInventory = serde_json::from_value(after).unwrap();
    assert_eq!(after.len(), before.len() - 1);
    after.check_invariants().unwrap();

    // Offline: cluster from the raw images, then union the two classes.
    let params = SegmentationParams::default();
    let occs: Vec<_> = f
        .sources
        .iter()
        .map(|p| segment_line(&binarize(&load_line_image(p).unwrap(), Threshold::Otsu), &params).unwrap())
        .collect();
    let corpus = [
        CorpusLine { line_id: "a", occurrences: &occs[0] },
        CorpusLine { line_id: "b", occurrences: &occs[1] },
    ];
    let offline = cluster_tokens(&corpus, &ClassifierParams::default()).unwrap();
    let mut merged: Vec<BTreeSet<(String, usize)>> = Vec::new();
    let mut union = BTreeSet::new();
    for c in &offline.classes {
        let set: BTreeSet<_> = c.member_refs.iter().map(|r| (r.line_id.clone(), r.index)).collect();
        if c.class_id == 0 || c.class_id == 2 {
            union.extend(set);
        } else {
            merged.push(set);
        }
    }
    merged.push(union);
    assert_eq!(partition(&after), merged.into_iter().collect());
}

#[tokio::test]
async fn merging_a_mirror_pair_unifies_placeholders() {
    let f = fixture(true);
    let app = app(&f);
    let (_, inv) = call(&app, "GET", "/api/inventory", None).await;
    let inv: TokenInventory = serde_json::from_value(inv).unwrap();
    assert_eq!(inv.mirror_pairs(), vec![(0, 2)]);
    let (_, sugg) = call(&app, "GET", "/api/classes/mirror/suggestions", None).await;
    assert_eq!(sugg, json!([[0, 2]]));

    let (status, _) = call(&app, "POST", "/api/classes/merge", Some(json!({"a": 2, "b": 0}))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, v) = call(&app, "POST", "/api/rebuild", None).await;
    let lines: Vec<String> = serde_json::from_value(v["encoded"][0]["lines"].clone()).unwrap();
    assert_eq!(lines, vec!["<token_0> <token_1> <token_0>", "<token_0> <token_1>"]);
    let first_tokens: BTreeSet<&str> = lines.iter().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(first_tokens.len(), 1);
}

#[tokio::test]
async fn split_and_mirror_actions() {
    let f = fixture(false);
    let app = app(&f);
    let body = json!({"class_id": 0, "members": [{"line_id": "a", "index": 2}]});
    let (status, v) = call(&app, "POST", "/api/classes/split", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["classes"].as_array().unwrap().len(), 4);

    let (status, v) = call(&app, "POST", "/api/classes/mirror", Some(json!({"a": 0, "b": 3}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let (_, v) = call(&app, "POST", "/api/classes/mirror", Some(json!({"a": 0, "b": 0}))).await;
    assert_eq!(v["error"]["code"], "invalid_class_action");
    let (status, v) = call(&app, "POST", "/api/classes/merge", Some(json!({"a": 0, "b": 99}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "unknown_class");

    // A fresh service over the same files shows the same state.
    let (_, live) = call(&app, "GET", "/api/inventory", None).await;
    let (_, reloaded) = call(&self::app(&f), "GET", "/api/inventory", None).await;
    assert_eq!(live, reloaded);
    assert_eq!(f.project.read_edit_log().unwrap().len(), 2);
}

#[tokio::test]
async fn serves_static_files() {
    let f = fixture(false);
    let web = f.project.root().join("web");
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<html>review</html>").unwrap();
    let app = router(App::open(f.project.clone()).unwrap(), Some(web));
    let resp = app
        .oneshot(Request::builder().uri("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>review</html>");
}

#[test]
fn open_requires_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let p = Project::init(dir.path()).unwrap();
    let err = App::open(p).err().unwrap();
    assert!(err.to_string().contains("glyphforge classify"));
}
