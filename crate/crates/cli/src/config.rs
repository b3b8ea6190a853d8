//! TOML configuration. Every command-line flag has a key here; values given
//! on the command line win over the file, and the file wins over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{CliError, OutputFormat};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub project: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub verbose: Option<u8>,
    pub segment: SegmentSection,
    pub classify: ClassifySection,
    pub review: ReviewSection,
    pub build: BuildSection,
    pub eval: EvalSection,
    pub score: ScoreSection,
    pub describe: DescribeSection,
    pub pairing: PairingSection,
    pub sheet: SheetSection,
    pub backends: Vec<BackendConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub min_gap: Option<usize>,
    pub band_top: Option<f64>,
    pub band_bottom: Option<f64>,
    pub bridge_exception: Option<bool>,
    pub min_glyph_width: Option<usize>,
    /// `"otsu"` or a fixed level 0-255.
    pub threshold: Option<String>,
    pub invert: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub tau: Option<f64>,
    pub side: Option<usize>,
    pub mirror_detect: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSection {
    pub bind: Option<String>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub condition: Option<String>,
    pub template: Option<PathBuf>,
    pub seed: Option<u64>,
    pub descriptions: Option<PathBuf>,
    pub reveal_direction: Option<bool>,
    pub out: Option<PathBuf>,
    pub columns: Option<usize>,
    pub cell_px: Option<usize>,
    pub label_px: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub backend: Option<String>,
    pub concurrency: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_retries: Option<u32>,
    pub initial_backoff_ms: Option<u64>,
    /// Generation settings forwarded to the backend and recorded.
    pub settings: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescribeSection {
    /// Description table written by `describe scaffold` and read by
    /// `describe check`, `build` and `pairing` when no path is given.
    pub descriptions: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingSection {
    pub descriptions: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SheetSection {
    pub out: Option<PathBuf>,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// Answers with the bundle's answer key.
    Oracle,
    Empty,
    /// Answer key, with matching answers degraded to `pairing_accuracy`.
    Pairing,
}

/// One entry of the backend registry. Credentials are never read from this
/// file; `key_env` names the environment variable holding them.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub name: String,
    /// `mock`, `openai`, `anthropic` or `gemini`.
    pub vendor: String,
    pub model: Option<String>,
    pub key_env: Option<String>,
    pub endpoint: Option<String>,
    pub timeout_secs: Option<u64>,
    pub rate_per_sec: Option<f64>,
    pub burst: Option<u32>,
    pub mock: Option<MockMode>,
    pub pairing_accuracy: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn backend(&self, name: &str) -> Option<&BackendConfig> {
        self.backends.iter().find(|b| b.name == name)
    }
}

/// Command line, then config file, then default.
pub fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg: FileConfig = toml::from_str(
            r#"
            project = "proj"
            format = "json"
            [segment]
            min_gap = 3
            threshold = "otsu"
            [classify]
            tau = 0.85
            mirror_detect = true
            [eval]
            backend = "gpt"
            settings = { temperature = 0.0 }
            [[backends]]
            name = "gpt"
            vendor = "openai"
            model = "gpt-4o"
            key_env = "MY_KEY"
            [[backends]]
            name = "scripted"
            vendor = "mock"
            mock = "pairing"
            pairing_accuracy = 0.4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.segment.min_gap, Some(3));
        assert_eq!(cfg.format, Some(OutputFormat::Json));
        assert_eq!(cfg.backend("scripted").unwrap().mock, Some(MockMode::Pairing));
        assert_eq!(cfg.eval.settings["temperature"], serde_json::json!(0.0));
    }

    #[test]
    fn credentials_cannot_live_in_the_file() {
        let r: Result<FileConfig, _> = toml::from_str(
            r#"
            [[backends]]
            name = "gpt"
            vendor = "openai"
            api_key = "sk-oops"
            "#,
        );
        assert!(r.unwrap_err().to_string().contains("api_key"));
    }

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }
}
