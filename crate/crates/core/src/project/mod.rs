//! On-disk project layout and the segment → classify → review pipeline.
//!
//! ```text
//! project.json          segmentation / classifier settings
//! images/<line>.png     line images
//! segments/<line>.json  automatic segmentation per line
//! corrections/          <line>.json CorrectionSets, class_actions.json, edits.log
//! inventory.json        token inventory
//! puzzles/  templates/  build/  runs/
//! ```

mod pipeline;
mod store;

pub use pipeline::{
    EncodedPuzzle, LineCount, LineState, ReviewOutput, ReviewState, SegmentFile,
};
pub use store::{ClassAction, Edit, EditLogEntry};

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifierParams, ClassifyError};
use crate::dataset::DatasetError;
use crate::raster::{RasterError, Threshold};
use crate::segment::{SegmentError, SegmentationParams};

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{what} not found; run `glyphforge {step}` first")]
    MissingStep { what: String, step: &'static str },
    #[error("{0}")]
    Io(String),
    #[error("{path}: {message}")]
    BadFile { path: String, message: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("corrections for line {line_id} were made against image {expected} but the image is now {actual}")]
    StaleCorrection {
        line_id: String,
        expected: String,
        actual: String,
    },
    #[error("unknown line {0:?}")]
    UnknownLine(String),
    #[error("two images map to line id {0:?}")]
    DuplicateLine(String),
    #[error("class action {index}: {message}")]
    ClassAction { index: usize, message: String },
}

impl ProjectError {
    /// Stable machine-readable reason.
    pub fn code(&self) -> &'static str {
        match self {
            ProjectError::MissingStep { .. } => "missing_step",
            ProjectError::Io(_) => "io",
            ProjectError::BadFile { .. } => "bad_file",
            ProjectError::Raster(_) => "raster",
            ProjectError::Segment(e) => e.code(),
            ProjectError::Classify(e) => e.code(),
            ProjectError::Dataset(_) => "dataset",
            ProjectError::StaleCorrection { .. } => "stale_correction",
            ProjectError::UnknownLine(_) => "unknown_line",
            ProjectError::DuplicateLine(_) => "duplicate_line",
            ProjectError::ClassAction { .. } => "invalid_class_action",
        }
    }

    /// True when the request itself was invalid rather than the project.
    pub fn is_validation(&self) -> bool {
        !matches!(self, ProjectError::Io(_) | ProjectError::MissingStep { .. })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ProjectError {
    ProjectError::Io(format!("{}: {e}", path.display()))
}

/// Settings shared by every pipeline step, stored in `project.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    pub threshold: Threshold,
    pub segmentation: SegmentationParams,
    pub classifier: ClassifierParams,
}

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ProjectError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ProjectError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| ProjectError::BadFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Project {
    root: PathBuf,
}

impl Project {
    /// Opens `root`, creating the standard directories if missing.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self, ProjectError> {
        let p = Self { root: root.into() };
        for d in [
            p.images_dir(),
            p.segments_dir(),
            p.corrections_dir(),
            p.puzzles_dir(),
            p.templates_dir(),
            p.build_dir(),
            p.runs_dir(),
        ] {
            std::fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        }
        Ok(p)
    }

    /// Opens an existing project directory without creating anything.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ProjectError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(ProjectError::Io(format!("{} is not a directory", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
    pub fn config_path(&self) -> PathBuf {
        self.root.join("project.json")
    }
    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }
    pub fn segments_dir(&self) -> PathBuf {
        self.root.join("segments")
    }
    pub fn corrections_dir(&self) -> PathBuf {
        self.root.join("corrections")
    }
    pub fn inventory_path(&self) -> PathBuf {
        self.root.join("inventory.json")
    }
    pub fn puzzles_dir(&self) -> PathBuf {
        self.root.join("puzzles")
    }
    pub fn templates_dir(&self) -> PathBuf {
        self.root.join("templates")
    }
    pub fn build_dir(&self) -> PathBuf {
        self.root.join("build")
    }
    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn image_path(&self, line_id: &str) -> PathBuf {
        self.images_dir().join(format!("{line_id}.png"))
    }
    pub fn segment_path(&self, line_id: &str) -> PathBuf {
        self.segments_dir().join(format!("{line_id}.json"))
    }

    pub fn config(&self) -> Result<ProjectConfig, ProjectError> {
        let path = self.config_path();
        if path.exists() {
            read_json(&path)
        } else {
            Ok(ProjectConfig::default())
        }
    }

    pub fn save_config(&self, cfg: &ProjectConfig) -> Result<(), ProjectError> {
        write_json_atomic(&self.config_path(), cfg)
    }

    pub fn load_inventory(&self) -> Result<crate::classify::TokenInventory, ProjectError> {
        let path = self.inventory_path();
        if !path.exists() {
            return Err(ProjectError::MissingStep {
                what: "inventory.json".into(),
                step: "classify",
            });
        }
        read_json(&path)
    }

    /// Line ids with a segmentation, sorted. This is the corpus order.
    pub fn line_ids(&self) -> Result<Vec<String>, ProjectError> {
        let dir = self.segments_dir();
        let missing = || ProjectError::MissingStep {
            what: "segmented lines".into(),
            step: "segment",
        };
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing()),
            Err(e) => return Err(io_err(&dir, e)),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| io_err(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        if ids.is_empty() {
            return Err(missing());
        }
        ids.sort();
        Ok(ids)
    }
}
