//! HTTP/JSON service for human review of segmentation and token classes.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/lines` | |
//! | GET | `/api/lines/{id}` | |
//! | GET | `/api/lines/{id}/image.png` | |
//! | POST | `/api/corrections` | CorrectionSet |
//! | GET | `/api/inventory` | |
//! | GET | `/api/classes/mirror/suggestions` | |
//! | POST | `/api/classes/merge` | `{"a": id, "b": id}` |
//! | POST | `/api/classes/split` | `{"class_id": id, "members": [ref...]}` |
//! | POST | `/api/classes/mirror` | `{"a": id, "b": id \| null}` |
//! | POST | `/api/rebuild` | |
//!
//! Errors are `{"error": {"code": ..., "message": ...}}`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use glyphforge_core::classify::{detect_mirror_pairs, InventoryOccurrence, OccurrenceRef, TokenInventory};
use glyphforge_core::project::{ClassAction, Project, ProjectError, ReviewState};
use glyphforge_core::segment::{CorrectionSet, CutInterval};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("project cannot be loaded: {0}")]
    Project(#[from] ProjectError),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Shared service state. The cached review state is always the replay of
/// the files on disk.
pub struct App {
    project: Project,
    state: RwLock<ReviewState>,
    writer: Mutex<()>,
}

impl App {
    pub fn open(project: Project) -> Result<Arc<Self>, ProjectError> {
        project.load_inventory()?;
        let state = project.replay()?;
        Ok(Arc::new(Self {
            project,
            state: RwLock::new(state),
            writer: Mutex::new(()),
        }))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, ReviewState> {
        self.state.read().expect("state lock poisoned")
    }

    /// Runs one mutation at a time and swaps in the resulting state.
    fn mutate(
        &self,
        f: impl FnOnce(&Project, &ReviewState) -> Result<ReviewState, ApiError>,
    ) -> Result<(), ApiError> {
        let _w = self.writer.lock().expect("writer lock poisoned");
        let next = f(&self.project, &self.read())?;
        *self.state.write().expect("state lock poisoned") = next;
        Ok(())
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let status = match &e {
            ProjectError::UnknownLine(_) => StatusCode::NOT_FOUND,
            ProjectError::MissingStep { .. } => StatusCode::CONFLICT,
            ProjectError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_request_body", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSummary {
    pub line_id: String,
    pub width: usize,
    pub height: usize,
    pub raster_sha256: String,
    pub occurrence_count: usize,
    pub automatic_count: usize,
    pub has_corrections: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceView {
    pub index: usize,
    pub span: glyphforge_core::segment::ColumnSpan,
    #[serde(rename = "box")]
    pub bbox: glyphforge_core::segment::GlyphBox,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDetail {
    pub line_id: String,
    pub width: usize,
    pub height: usize,
    pub raster_sha256: String,
    pub threshold: u8,
    /// Base64 PNG of the line image.
    pub png: String,
    pub cuts: Vec<CutInterval>,
    pub automatic: Vec<InventoryOccurrence>,
    pub occurrences: Vec<OccurrenceView>,
    pub placeholders: String,
    pub corrections: Option<CorrectionSet>,
}

fn line_detail(state: &ReviewState, line_id: &str) -> Result<LineDetail, ApiError> {
    let line = state
        .line(line_id)
        .ok_or_else(|| ApiError::from(ProjectError::UnknownLine(line_id.to_string())))?;
    let classes = state.inventory.class_map();
    let occurrences: Vec<OccurrenceView> = line
        .occurrences
        .iter()
        .map(|o| OccurrenceView {
            index: o.index_in_line,
            span: o.span,
            bbox: o.bbox,
            class_id: classes[&OccurrenceRef::new(line_id, o.index_in_line)],
        })
        .collect();
    let placeholders = occurrences
        .iter()
        .map(|o| glyphforge_core::classify::placeholder(o.class_id))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(LineDetail {
        line_id: line.line_id.clone(),
        width: line.gray.width(),
        height: line.gray.height(),
        raster_sha256: line.raster_sha256.clone(),
        threshold: line.threshold,
        png: base64::engine::general_purpose::STANDARD.encode(line.png()),
        cuts: line.cuts.clone(),
        automatic: line
            .automatic
            .iter()
            .map(|o| InventoryOccurrence {
                index: o.index_in_line,
                span: o.span,
                bbox: o.bbox,
            })
            .collect(),
        occurrences,
        placeholders,
        corrections: line.corrections.clone(),
    })
}

async fn list_lines(State(app): State<Arc<App>>) -> Json<Vec<LineSummary>> {
    let state = app.read();
    Json(
        state
            .lines
            .iter()
            .map(|l| LineSummary {
                line_id: l.line_id.clone(),
                width: l.gray.width(),
                height: l.gray.height(),
                raster_sha256: l.raster_sha256.clone(),
                occurrence_count: l.occurrences.len(),
                automatic_count: l.automatic.len(),
                has_corrections: l.corrections.is_some(),
            })
            .collect(),
    )
}

async fn get_line(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Json<LineDetail>, ApiError> {
    Ok(Json(line_detail(&app.read(), &id)?))
}

async fn get_line_png(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let state = app.read();
    let line = state
        .line(&id)
        .ok_or_else(|| ApiError::from(ProjectError::UnknownLine(id.clone())))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], line.png()).into_response())
}

async fn post_corrections(State(app): State<Arc<App>>, body: Bytes) -> Result<Json<LineDetail>, ApiError> {
    let c: CorrectionSet = parse_body(&body)?;
    let line_id = c.line_id.clone();
    app.mutate(|project, _| Ok(project.submit_correction(c)?))?;
    Ok(Json(line_detail(&app.read(), &line_id)?))
}

async fn get_inventory(State(app): State<Arc<App>>) -> Json<TokenInventory> {
    Json(app.read().inventory.clone())
}

async fn mirror_suggestions(State(app): State<Arc<App>>) -> Result<Json<Vec<[usize; 2]>>, ApiError> {
    let inv = app.read().inventory.clone();
    let mut classes = inv.classes;
    for c in &mut classes {
        c.mirror_of = None;
    }
    let pairs = detect_mirror_pairs(&mut classes, &inv.params).map_err(ProjectError::from)?;
    Ok(Json(pairs.into_iter().map(|(a, b)| [a, b]).collect()))
}

fn first_member(state: &ReviewState, class_id: usize) -> Result<OccurrenceRef, ApiError> {
    state
        .inventory
        .class(class_id)
        .map(|c| c.member_refs[0].clone())
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string()))
}

#[derive(Deserialize)]
struct MergeBody {
    a: usize,
    b: usize,
}

#[derive(Deserialize)]
struct SplitBody {
    class_id: usize,
    members: Vec<OccurrenceRef>,
}

#[derive(Deserialize)]
struct MirrorBody {
    a: usize,
    b: Option<usize>,
}

async fn merge_classes(State(app): State<Arc<App>>, body: Bytes) -> Result<Json<TokenInventory>, ApiError> {
    let m: MergeBody = parse_body(&body)?;
    app.mutate(|project, state| {
        let action = ClassAction::Merge {
            a: first_member(state, m.a)?,
            b: first_member(state, m.b)?,
        };
        Ok(project.submit_class_action(action)?)
    })?;
    Ok(Json(app.read().inventory.clone()))
}

async fn split_class(State(app): State<Arc<App>>, body: Bytes) -> Result<Json<TokenInventory>, ApiError> {
    let s: SplitBody = parse_body(&body)?;
    app.mutate(|project, state| {
        let class = state
            .inventory
            .class(s.class_id)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string()))?;
        if let Some(r) = s.members.iter().find(|r| !class.member_refs.contains(r)) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_class_action",
                format!("occurrence {}#{} is not a member of class {}", r.line_id, r.index, s.class_id),
            ));
        }
        Ok(project.submit_class_action(ClassAction::Split { members: s.members })?)
    })?;
    Ok(Json(app.read().inventory.clone()))
}

async fn mirror_classes(State(app): State<Arc<App>>, body: Bytes) -> Result<Json<TokenInventory>, ApiError> {
    let m: MirrorBody = parse_body(&body)?;
    app.mutate(|project, state| {
        let action = ClassAction::Mirror {
            a: first_member(state, m.a)?,
            b: m.b.map(|b| first_member(state, b)).transpose()?,
        };
        Ok(project.submit_class_action(action)?)
    })?;
    Ok(Json(app.read().inventory.clone()))
}

async fn rebuild(State(app): State<Arc<App>>) -> Result<Response, ApiError> {
    let mut out = None;
    app.mutate(|project, _| {
        out = Some(project.apply_review()?);
        Ok(project.replay()?)
    })?;
    Ok(Json(out.expect("set on success")).into_response())
}

/// All API routes, plus static files from `static_dir` at `/` if given.
pub fn router(app: Arc<App>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/lines", get(list_lines))
        .route("/api/lines/{id}", get(get_line))
        .route("/api/lines/{id}/image.png", get(get_line_png))
        .route("/api/corrections", post(post_corrections))
        .route("/api/inventory", get(get_inventory))
        .route("/api/classes/mirror/suggestions", get(mirror_suggestions))
        .route("/api/classes/merge", post(merge_classes))
        .route("/api/classes/split", post(split_class))
        .route("/api/classes/mirror", post(mirror_classes))
        .route("/api/rebuild", post(rebuild))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves the project until Ctrl-C.
pub async fn serve(project: Project, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<(), ReviewError> {
    let app = App::open(project)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ReviewError::Bind { addr, source })?;
    log::info!("review service listening on http://{addr}");
    axum::serve(listener, router(app, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ReviewError::Serve)
}
