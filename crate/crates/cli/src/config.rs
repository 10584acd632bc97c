//! Run configuration: a TOML file, `--set section.key=value` overrides and
//! command-specific flags, merged in that order (later wins) and validated as
//! a whole before any command touches the filesystem.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use twotower_core::{AblationEntry, AblationSpec, EvalConfig, ModelConfig, SynthConfig, TrainConfig};

/// A configuration problem; reported with its own exit status.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<twotower_core::Error> for ConfigError {
    fn from(e: twotower_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub videos: PathBuf,
    pub interactions: PathBuf,
    pub manifest: PathBuf,
    pub checkpoint: PathBuf,
    pub train_report: PathBuf,
    pub eval_report: PathBuf,
    /// Optional dump of the embedding index written by `eval`.
    pub index: Option<PathBuf>,
    pub ablation_table: PathBuf,
    pub ablation_report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            videos: "data/videos.jsonl".into(),
            interactions: "data/interactions.jsonl".into(),
            manifest: "data/manifest.json".into(),
            checkpoint: "out/model.ckpt".into(),
            train_report: "out/train_report.json".into(),
            eval_report: "out/eval_report.json".into(),
            index: None,
            ablation_table: "out/ablation.tsv".into(),
            ablation_report: "out/ablation.json".into(),
        }
    }
}

/// Held-out split shared by `train` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Split {
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            holdout_fraction: 0.1,
            seed: 7,
        }
    }
}

/// Either a named preset or an explicit entry list; the `full` preset when
/// neither is given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub preset: Option<String>,
    pub entries: Option<Vec<AblationEntry>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: Split,
    pub eval: EvalConfig,
    pub ablation: Ablation,
}

impl RunConfig {
    /// Reads `file` (if any), applies the overrides in order and validates.
    pub fn resolve(file: Option<&Path>, overrides: &[Override]) -> Result<Self, ConfigError> {
        let mut table = match file {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
                text.parse::<Table>()
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            match o {
                Override::Set(key, raw) => set_path(&mut table, key, Some(parse_value(raw)))?,
                Override::Unset(key) => set_path(&mut table, key, None)?,
            }
        }
        let config: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        let h = self.split.holdout_fraction;
        if !(h > 0.0 && h < 1.0) {
            return Err(ConfigError(format!("split: holdout_fraction = {h} (need (0, 1))")));
        }
        self.ablation_spec()?.validate()?;
        Ok(())
    }

    /// The ablation spec with the shared model/train sections and holdout applied.
    pub fn ablation_spec(&self) -> Result<AblationSpec, ConfigError> {
        let mut spec = match (&self.ablation.preset, &self.ablation.entries) {
            (Some(_), Some(_)) => {
                return Err(ConfigError(
                    "ablation: set either `preset` or `entries`, not both".into(),
                ))
            }
            (None, None) => AblationSpec::full(),
            (Some(name), None) => AblationSpec::preset(name)?,
            (None, Some(entries)) => AblationSpec {
                entries: entries.clone(),
                ..AblationSpec::default()
            },
        };
        spec.model = self.model.clone();
        spec.train = self.train.clone();
        spec.holdout_fraction = self.split.holdout_fraction;
        Ok(spec)
    }
}

/// One command-line adjustment of the configuration table.
#[derive(Debug, Clone, PartialEq)]
pub enum Override {
    Set(String, String),
    Unset(String),
}

/// Splits `section.key=value`.
pub fn parse_assignment(s: &str) -> Result<Override, String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok(Override::Set(k.to_string(), v.trim().to_string()))
}

/// Interprets an override as a TOML value, falling back to a bare string so
/// that `paths.videos=data/v.jsonl` needs no quoting.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, key: &str, value: Option<Value>) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("`{key}`: `{part}` is not a section")))?;
    }
    if leaf.is_empty() {
        return Err(ConfigError(format!("bad key `{key}`")));
    }
    match value {
        Some(v) => cur.insert(leaf.to_string(), v),
        None => cur.remove(leaf),
    };
    Ok(())
}
