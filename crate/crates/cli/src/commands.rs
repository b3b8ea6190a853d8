use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use glyphforge_core::classify::{ClassifierParams, TokenInventory};
use glyphforge_core::client::{
    HttpBackend, MockBackend, MockBehavior, ModelClient, RateLimited, RetryPolicy, TokenBucket, Vendor,
};
use glyphforge_core::dataset::{
    build_prompt_bundle, render_token_sheet, scaffold_description_table, validate_table, BuildOptions, Condition,
    DatasetError, DescriptionTable, PromptBundle, PromptTemplate, PuzzleDocument, SheetLayout,
};
use glyphforge_core::eval::{
    aggregate_report, make_pairing_task, read_records, records_to_ndjson, render_table, run_matrix, Clock,
    FixedClock, RecordStatus, RunConfig, SystemClock,
};
use glyphforge_core::project::{read_json, write_atomic, write_json_atomic, Project, ProjectConfig};
use glyphforge_core::segment::GapKind;
use serde_json::json;

use crate::config::{pick, BackendConfig, ClassifySection, FileConfig, MockMode, SegmentSection};
use crate::{
    parse_threshold, BuildArgs, ClassifyArgs, CliError, Command, DescribeCommand, EvalArgs, Outcome, PairingArgs,
    ReviewArgs, ScoreArgs, SegmentArgs, SheetArgs, EXIT_BACKEND, EXIT_VALIDATION,
};

const DEFAULT_BIND: &str = "127.0.0.1:8737";
const DEFAULT_TIMEOUT_SECS: u64 = 120;

pub(crate) struct Ctx {
    pub root: PathBuf,
    pub file: FileConfig,
}

impl Ctx {
    fn project(&self) -> Result<Project, CliError> {
        if !self.root.is_dir() {
            return Err(CliError::Validation(format!(
                "project directory {} not found; run `glyphforge segment` first",
                self.root.display()
            )));
        }
        Ok(Project::open(&self.root)?)
    }

    fn descriptions_path(&self, project: &Project, cli: Option<&PathBuf>, section: Option<&PathBuf>) -> PathBuf {
        cli.or(section)
            .or(self.file.describe.descriptions.as_ref())
            .cloned()
            .unwrap_or_else(|| project.root().join("descriptions.csv"))
    }
}

pub(crate) fn dispatch(cmd: &Command, ctx: &Ctx) -> Result<Outcome, CliError> {
    match cmd {
        Command::Segment(a) => segment(a, ctx),
        Command::Classify(a) => classify(a, ctx),
        Command::Review(a) => review(a, ctx),
        Command::Build(a) => build(a, ctx),
        Command::Eval(a) => eval(a, ctx),
        Command::Score(a) => score(a, ctx),
        Command::Describe(d) => describe(d, ctx),
        Command::Pairing(a) => pairing(a, ctx),
        Command::Sheet(a) => sheet(a, ctx),
    }
}

fn flag(yes: bool, no: bool) -> Option<bool> {
    match (yes, no) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

/// Segmentation settings from the command line, then the config file, then
/// `base` (the project's saved settings).
pub fn segment_config(a: &SegmentArgs, sec: &SegmentSection, base: ProjectConfig) -> Result<ProjectConfig, CliError> {
    let file_threshold = sec
        .threshold
        .as_deref()
        .map(parse_threshold)
        .transpose()
        .map_err(|e| CliError::Validation(format!("segment.threshold: {e}")))?;
    let s = base.segmentation;
    let mut cfg = base;
    cfg.threshold = pick(a.threshold, file_threshold, cfg.threshold);
    cfg.segmentation.min_gap_width = pick(a.min_gap, sec.min_gap, s.min_gap_width);
    cfg.segmentation.band_top_frac = pick(a.band_top, sec.band_top, s.band_top_frac);
    cfg.segmentation.band_bottom_frac = pick(a.band_bottom, sec.band_bottom, s.band_bottom_frac);
    cfg.segmentation.bridge_exception_enabled = pick(
        flag(a.bridge_exception, a.no_bridge_exception),
        sec.bridge_exception,
        s.bridge_exception_enabled,
    );
    cfg.segmentation.min_glyph_width = pick(a.min_glyph_width, sec.min_glyph_width, s.min_glyph_width);
    Ok(cfg)
}

/// Classifier settings, resolved like [`segment_config`].
pub fn classifier_params(a: &ClassifyArgs, sec: &ClassifySection, base: ClassifierParams) -> ClassifierParams {
    ClassifierParams {
        similarity_threshold: pick(a.tau, sec.tau, base.similarity_threshold),
        normalize_side: pick(a.side, sec.side, base.normalize_side),
        mirror_detection_enabled: pick(
            flag(a.mirror_detect, a.no_mirror_detect),
            sec.mirror_detect,
            base.mirror_detection_enabled,
        ),
    }
}

fn segment(a: &SegmentArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let sec = &ctx.file.segment;
    let project = Project::init(&ctx.root)?;
    let cfg = segment_config(a, sec, project.config()?)?;
    let invert = pick(flag(a.invert, a.no_invert), sec.invert, false);
    let files = project.segment_with(&a.images, &cfg, invert)?;
    let mut human = String::new();
    let mut lines = Vec::new();
    for f in &files {
        let plain = f.cuts.iter().filter(|c| c.kind == GapKind::PlainGap).count();
        let bridged = f.cuts.len() - plain;
        human += &format!(
            "{}: {} glyphs, {plain} plain and {bridged} bridged cut intervals (threshold {})\n",
            f.line_id,
            f.occurrences.len(),
            f.threshold
        );
        lines.push(json!({
            "line_id": f.line_id,
            "glyphs": f.occurrences.len(),
            "plain_cuts": plain,
            "bridged_cuts": bridged,
            "threshold": f.threshold,
            "segment_file": project.segment_path(&f.line_id),
        }));
    }
    human += &format!("segmented {} line(s)\n", files.len());
    Ok(Outcome::ok(human, json!({ "lines": lines, "config": cfg })))
}

fn classify(a: &ClassifyArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let project = ctx.project()?;
    let params = classifier_params(a, &ctx.file.classify, project.config()?.classifier);
    let out = project.classify(params)?;
    let inv = &out.inventory;
    let occurrences: usize = inv.lines.iter().map(|l| l.occurrences.len()).sum();
    let mut human = format!(
        "{} classes from {occurrences} occurrences in {} line(s); wrote {}\n",
        inv.len(),
        inv.lines.len(),
        project.inventory_path().display()
    );
    for (a, b) in inv.mirror_pairs() {
        human += &format!("mirror pair: TOKEN_{a} / TOKEN_{b}\n");
    }
    for c in out.line_counts.iter().filter(|c| c.before.is_some_and(|b| b != c.after)) {
        human += &format!("{}: {} -> {} occurrences\n", c.line_id, c.before.unwrap_or(0), c.after);
    }
    for e in &out.encoded {
        human += &format!("encoded puzzle {}\n", e.puzzle_id);
    }
    Ok(Outcome::ok(
        human,
        json!({
            "classes": inv.len(),
            "occurrences": occurrences,
            "lines": inv.lines.len(),
            "mirror_pairs": inv.mirror_pairs(),
            "line_counts": out.line_counts,
            "encoded": out.encoded.iter().map(|e| &e.puzzle_id).collect::<Vec<_>>(),
            "inventory": project.inventory_path(),
            "params": inv.params,
        }),
    ))
}

fn review(a: &ReviewArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let sec = &ctx.file.review;
    let bind = pick(a.bind.clone(), sec.bind.clone(), DEFAULT_BIND.to_string());
    let addr: SocketAddr = bind
        .parse()
        .map_err(|e| CliError::Usage(format!("--bind {bind:?}: {e}")))?;
    let static_dir = a.static_dir.clone().or_else(|| sec.static_dir.clone());
    let project = ctx.project()?;
    project.load_inventory()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start runtime: {e}")))?;
    eprintln!("review service on http://{addr} (ctrl-c to stop)");
    rt.block_on(glyphforge_review::serve(project, addr, static_dir))
        .map_err(|e| match e {
            glyphforge_review::ReviewError::Project(p) => p.into(),
            other => CliError::Validation(other.to_string()),
        })?;
    Ok(Outcome::ok("review service stopped\n".into(), json!({ "stopped": true })))
}

fn resolve_in(dir: &Path, p: &Path, ext: &str) -> PathBuf {
    if p.exists() {
        return p.to_path_buf();
    }
    let direct = dir.join(p);
    if direct.exists() {
        return direct;
    }
    let with_ext = dir.join(format!("{}.{ext}", p.display()));
    if with_ext.exists() {
        with_ext
    } else {
        p.to_path_buf()
    }
}

fn read_table(path: &Path) -> Result<DescriptionTable, CliError> {
    let f = std::fs::File::open(path)
        .map_err(|e| CliError::Validation(format!("description table {}: {e}", path.display())))?;
    Ok(DescriptionTable::read_csv(f)?)
}

fn build(a: &BuildArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let sec = &ctx.file.build;
    let condition = match a.condition {
        Some(c) => c,
        None => match &sec.condition {
            Some(s) => s
                .parse::<Condition>()
                .map_err(|e| CliError::Validation(format!("build.condition: {e}")))?,
            None => {
                return Err(CliError::Usage(
                    "--condition is required (picture, description, placeholder or unicode)".into(),
                ))
            }
        },
    };
    let project = ctx.project()?;
    let inventory = project.load_inventory()?;
    let doc: PuzzleDocument = read_json(&resolve_in(&project.puzzles_dir(), &a.puzzle, "json"))?;
    let template = match a.template.as_ref().or(sec.template.as_ref()) {
        Some(p) => {
            let path = resolve_in(&project.templates_dir(), p, "txt");
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Validation(format!("template {}: {e}", path.display())))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            PromptTemplate::new(name, text)
        }
        None => PromptTemplate::default(),
    };
    let table_path = ctx.descriptions_path(&project, a.descriptions.as_ref(), sec.descriptions.as_ref());
    let table = if condition == Condition::Description {
        if !table_path.exists() {
            return Err(CliError::Validation(format!(
                "{} (looked for {}; run `glyphforge describe scaffold` and fill it in)",
                DatasetError::MissingTable,
                table_path.display()
            )));
        }
        Some(read_table(&table_path)?)
    } else {
        None
    };
    let defaults = BuildOptions::default();
    let options = BuildOptions {
        seed: pick(a.seed, sec.seed, defaults.seed),
        reveal_direction: pick(
            flag(a.reveal_direction, a.no_reveal_direction),
            sec.reveal_direction,
            defaults.reveal_direction,
        ),
        sheet: SheetLayout {
            columns: pick(a.columns, sec.columns, defaults.sheet.columns),
            cell_px: pick(a.cell_px, sec.cell_px, defaults.sheet.cell_px),
            label_px: pick(a.label_px, sec.label_px, defaults.sheet.label_px),
        },
    };
    let bundle = build_prompt_bundle(&doc, &inventory, table.as_ref(), condition, &template, &options)?;
    let out = pick(
        a.out.clone(),
        sec.out.clone(),
        project.build_dir().join(format!("{}.{}.json", doc.puzzle_id, condition)),
    );
    write_json_atomic(&out, &bundle)?;
    let hash = bundle.prompt_hash();
    Ok(Outcome::ok(
        format!(
            "wrote {} ({condition}, {} attachment(s), {} question(s), prompt {})\n",
            out.display(),
            bundle.attachments.len(),
            bundle.answer_key.len(),
            &hash[..12]
        ),
        json!({
            "bundle": out,
            "puzzle_id": doc.puzzle_id,
            "condition": condition,
            "attachments": bundle.attachments.len(),
            "questions": bundle.answer_key.len(),
            "prompt_hash": hash,
            "build_hash": bundle.metadata.build_hash,
        }),
    ))
}

struct Backend {
    client: Box<dyn ModelClient>,
    /// Mock backends run on a fixed clock so records are reproducible.
    deterministic: bool,
}

fn make_backend(name: &str, cfg: Option<&BackendConfig>, bundles: &[PromptBundle]) -> Result<Backend, CliError> {
    let Some(cfg) = cfg else {
        let client: Box<dyn ModelClient> = match name {
            "mock" => Box::new(MockBackend::oracle(name, bundles)),
            "mock-empty" => Box::new(MockBackend::new(name, MockBehavior::Empty)),
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown backend {name:?}; use mock, mock-empty, or define it under [[backends]] in the config file"
                )))
            }
        };
        return Ok(Backend {
            client,
            deterministic: true,
        });
    };
    let model = cfg.model.clone();
    let (client, deterministic): (Box<dyn ModelClient>, bool) = if cfg.vendor == "mock" {
        let model = model.unwrap_or_else(|| name.to_string());
        let client: Box<dyn ModelClient> = match cfg.mock.unwrap_or(MockMode::Oracle) {
            MockMode::Oracle => Box::new(MockBackend::oracle(model, bundles)),
            MockMode::Empty => Box::new(MockBackend::new(model, MockBehavior::Empty)),
            MockMode::Pairing => {
                let fraction = cfg.pairing_accuracy.unwrap_or(1.0);
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(CliError::Validation(format!(
                        "backend {name}: pairing_accuracy must be within [0, 1], got {fraction}"
                    )));
                }
                Box::new(MockBackend::pairing_accuracy(model, bundles, fraction))
            }
        };
        (client, true)
    } else {
        let vendor: Vendor = cfg
            .vendor
            .parse()
            .map_err(|e| CliError::Validation(format!("backend {name}: {e}")))?;
        let model = model.ok_or_else(|| CliError::Validation(format!("backend {name}: `model` is required")))?;
        let timeout = Duration::from_secs(cfg.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS));
        let http = HttpBackend::from_env(vendor, model, cfg.key_env.as_deref(), cfg.endpoint.clone(), timeout)?;
        (Box::new(http), false)
    };
    let client = match cfg.rate_per_sec {
        Some(rate) if rate > 0.0 => Box::new(RateLimited::new(client, TokenBucket::new(cfg.burst.unwrap_or(1).max(1), rate))),
        Some(rate) => {
            return Err(CliError::Validation(format!(
                "backend {name}: rate_per_sec must be positive, got {rate}"
            )))
        }
        None => client,
    };
    Ok(Backend { client, deterministic })
}

fn eval(a: &EvalArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let sec = &ctx.file.eval;
    let name = a
        .backend
        .clone()
        .or_else(|| sec.backend.clone())
        .ok_or_else(|| CliError::Usage("--backend is required".into()))?;
    let mut bundles = Vec::with_capacity(a.bundles.len());
    for p in &a.bundles {
        let b: PromptBundle = read_json(p)?;
        b.check_invariants()
            .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
        bundles.push(b);
    }
    let backend = make_backend(&name, ctx.file.backend(&name), &bundles)?;
    let defaults = RunConfig::default();
    let retry_defaults = RetryPolicy::default();
    let config = RunConfig {
        seed: pick(a.seed, sec.seed, defaults.seed),
        concurrency: pick(a.concurrency, sec.concurrency, defaults.concurrency),
        retry: RetryPolicy {
            max_retries: pick(a.max_retries, sec.max_retries, retry_defaults.max_retries),
            initial_backoff_ms: pick(a.initial_backoff_ms, sec.initial_backoff_ms, retry_defaults.initial_backoff_ms),
            ..retry_defaults
        },
        settings: sec.settings.clone(),
    };
    if config.concurrency == 0 {
        return Err(CliError::Usage("--concurrency must be at least 1".into()));
    }
    let clock: Box<dyn Clock> = if backend.deterministic {
        Box::new(FixedClock::default())
    } else {
        Box::new(SystemClock)
    };
    let records = run_matrix(&bundles, &[backend.client.as_ref()], &config, clock.as_ref());
    let out = pick(
        a.out.clone(),
        sec.out.clone(),
        ctx.root.join("runs").join(format!("{name}.ndjson")),
    );
    write_atomic(&out, records_to_ndjson(&records).as_bytes())?;
    let count = |s: RecordStatus| records.iter().filter(|r| r.status == s).count();
    let (ok, unparseable, failed) = (
        count(RecordStatus::Ok),
        count(RecordStatus::Unparseable),
        count(RecordStatus::Failed),
    );
    let mut human = format!(
        "{} record(s) -> {} ({ok} ok, {unparseable} unparseable, {failed} failed)\n",
        records.len(),
        out.display()
    );
    let first_error = records.iter().find_map(|r| r.error.clone());
    if let Some(e) = &first_error {
        human += &format!("first error: {e}\n");
    }
    Ok(Outcome {
        human,
        json: json!({
            "records": records.len(),
            "out": out,
            "ok": ok,
            "unparseable": unparseable,
            "failed": failed,
            "first_error": first_error,
        }),
        code: if failed > 0 { EXIT_BACKEND } else { 0 },
    })
}

fn score(a: &ScoreArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut records = Vec::new();
    for p in &a.records {
        records.extend(read_records(p)?);
    }
    let report = aggregate_report(&records);
    let mut human = render_table(&report);
    let path = a.report.clone().or_else(|| ctx.file.score.report.clone());
    if let Some(path) = &path {
        write_atomic(path, report.to_json().as_bytes())?;
        human += &format!("wrote report to {}\n", path.display());
    }
    let json = serde_json::to_value(&report).expect("report serializes");
    Ok(Outcome::ok(human, json))
}

fn load_inventory_and_table(
    ctx: &Ctx,
    project: &Project,
    cli: Option<&PathBuf>,
    section: Option<&PathBuf>,
) -> Result<(TokenInventory, PathBuf, DescriptionTable), CliError> {
    let inventory = project.load_inventory()?;
    let path = ctx.descriptions_path(project, cli, section);
    if !path.exists() {
        return Err(CliError::Validation(format!(
            "description table {} not found; run `glyphforge describe scaffold` first",
            path.display()
        )));
    }
    let table = read_table(&path)?;
    Ok((inventory, path, table))
}

fn describe(cmd: &DescribeCommand, ctx: &Ctx) -> Result<Outcome, CliError> {
    let project = ctx.project()?;
    match cmd {
        DescribeCommand::Scaffold { out, force } => {
            let inventory = project.load_inventory()?;
            let path = ctx.descriptions_path(&project, out.as_ref(), None);
            if path.exists() && !force {
                return Err(CliError::Validation(format!(
                    "{} already exists; pass --force to overwrite it",
                    path.display()
                )));
            }
            let table = scaffold_description_table(&inventory);
            let mut bytes = Vec::new();
            table.write_csv(&mut bytes)?;
            write_atomic(&path, &bytes)?;
            Ok(Outcome::ok(
                format!("wrote {} with {} empty row(s)\n", path.display(), table.rows.len()),
                json!({ "path": path, "rows": table.rows.len() }),
            ))
        }
        DescribeCommand::Check { descriptions } => {
            let (inventory, path, table) = load_inventory_and_table(ctx, &project, descriptions.as_ref(), None)?;
            let violations = validate_table(&table, &inventory);
            let mut human = String::new();
            for v in &violations {
                human += &format!("{}\n", serde_json::to_string(v).expect("violation serializes"));
            }
            human += &format!("{}: {} problem(s)\n", path.display(), violations.len());
            Ok(Outcome {
                human,
                json: json!({ "path": path, "violations": violations }),
                code: if violations.is_empty() { 0 } else { EXIT_VALIDATION },
            })
        }
    }
}

fn pairing(a: &PairingArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let sec = &ctx.file.pairing;
    let project = ctx.project()?;
    let (inventory, _, table) = load_inventory_and_table(ctx, &project, a.descriptions.as_ref(), sec.descriptions.as_ref())?;
    let seed = pick(a.seed, sec.seed, 0);
    let task = make_pairing_task(&inventory, &table, seed, &SheetLayout::default())?;
    let bundle = task.to_bundle("pairing");
    let out = pick(
        a.out.clone(),
        sec.out.clone(),
        project.build_dir().join(format!("pairing.{seed}.json")),
    );
    write_json_atomic(&out, &bundle)?;
    Ok(Outcome::ok(
        format!("wrote {} ({} descriptions, seed {seed})\n", out.display(), task.descriptions.len()),
        json!({ "bundle": out, "descriptions": task.descriptions.len(), "seed": seed }),
    ))
}

fn sheet(a: &SheetArgs, ctx: &Ctx) -> Result<Outcome, CliError> {
    let project = ctx.project()?;
    let inventory = project.load_inventory()?;
    let png = render_token_sheet(&inventory, &SheetLayout::default())?;
    let out = pick(
        a.out.clone(),
        ctx.file.sheet.out.clone(),
        project.build_dir().join("token_sheet.png"),
    );
    write_atomic(&out, &png)?;
    Ok(Outcome::ok(
        format!("wrote {} ({} classes)\n", out.display(), inventory.len()),
        json!({ "path": out, "classes": inventory.len() }),
    ))
}
