use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{io_err, read_json, write_json_atomic, Project, ProjectError};
use crate::classify::{NormalizedGlyph, OccurrenceRef, TokenInventory};
use crate::segment::CorrectionSet;

/// A reviewer's decision about token classes. Classes are named by member
/// occurrences so actions stay meaningful when class ids are renumbered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ClassAction {
    /// Merge the classes containing `a` and `b`.
    Merge { a: OccurrenceRef, b: OccurrenceRef },
    /// Move `members` (all from one class) into a new class.
    Split { members: Vec<OccurrenceRef> },
    /// Link the classes of `a` and `b` as mirror images, or unlink `a`.
    Mirror {
        a: OccurrenceRef,
        b: Option<OccurrenceRef>,
    },
}

impl ClassAction {
    pub fn apply(
        &self,
        inv: &mut TokenInventory,
        glyph_of: impl Fn(&OccurrenceRef) -> Option<NormalizedGlyph>,
    ) -> Result<(), String> {
        let class_of = |inv: &TokenInventory, r: &OccurrenceRef| {
            inv.class_map()
                .get(r)
                .copied()
                .ok_or_else(|| format!("occurrence {}#{} is not in the inventory", r.line_id, r.index))
        };
        match self {
            ClassAction::Merge { a, b } => {
                let (ca, cb) = (class_of(inv, a)?, class_of(inv, b)?);
                inv.merge(ca, cb).map_err(|e| e.to_string())
            }
            ClassAction::Split { members } => {
                let first = members.first().ok_or("split needs at least one member")?;
                let c = class_of(inv, first)?;
                inv.split(c, members, glyph_of).map_err(|e| e.to_string())
            }
            ClassAction::Mirror { a, b } => {
                let ca = class_of(inv, a)?;
                let cb = b.as_ref().map(|b| class_of(inv, b)).transpose()?;
                inv.set_mirror(ca, cb).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "edit", rename_all = "snake_case")]
pub enum Edit {
    Correction(CorrectionSet),
    ClassAction(ClassAction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditLogEntry {
    pub seq: usize,
    pub at: String,
    #[serde(flatten)]
    pub edit: Edit,
}

impl Project {
    pub fn line_corrections_dir(&self) -> PathBuf {
        self.corrections_dir().join("lines")
    }
    pub fn correction_path(&self, line_id: &str) -> PathBuf {
        self.line_corrections_dir().join(format!("{line_id}.json"))
    }
    pub fn class_actions_path(&self) -> PathBuf {
        self.corrections_dir().join("class_actions.json")
    }
    pub fn edit_log_path(&self) -> PathBuf {
        self.corrections_dir().join("edits.log")
    }

    /// Saved corrections keyed by line id.
    pub fn load_corrections(&self) -> Result<BTreeMap<String, CorrectionSet>, ProjectError> {
        let dir = self.line_corrections_dir();
        let mut out = BTreeMap::new();
        let Ok(entries) = std::fs::read_dir(&dir) else {
            return Ok(out);
        };
        for entry in entries {
            let path = entry.map_err(|e| io_err(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                let c: CorrectionSet = read_json(&path)?;
                out.insert(c.line_id.clone(), c);
            }
        }
        Ok(out)
    }

    pub fn load_class_actions(&self) -> Result<Vec<ClassAction>, ProjectError> {
        let path = self.class_actions_path();
        if path.exists() {
            read_json(&path)
        } else {
            Ok(Vec::new())
        }
    }

    pub(super) fn store_correction(&self, c: &CorrectionSet) -> Result<(), ProjectError> {
        let path = self.correction_path(&c.line_id);
        if c.is_empty() {
            match std::fs::remove_file(&path) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(io_err(&path, e)),
                _ => Ok(()),
            }
        } else {
            write_json_atomic(&path, c)
        }
    }

    pub(super) fn store_class_actions(&self, actions: &[ClassAction]) -> Result<(), ProjectError> {
        write_json_atomic(&self.class_actions_path(), actions)
    }

    pub fn read_edit_log(&self) -> Result<Vec<EditLogEntry>, ProjectError> {
        let path = self.edit_log_path();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path, e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| ProjectError::BadFile {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub(super) fn append_edit(&self, edit: Edit) -> Result<(), ProjectError> {
        let path = self.edit_log_path();
        let seq = self.read_edit_log()?.len();
        let entry = EditLogEntry {
            seq,
            at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            edit,
        };
        std::fs::create_dir_all(self.corrections_dir()).map_err(|e| io_err(&path, e))?;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        writeln!(f, "{}", serde_json::to_string(&entry).expect("entry serializes")).map_err(|e| io_err(&path, e))
    }
}
