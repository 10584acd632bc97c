//! Configuration sweeps: each named entry trains a tower (or uses raw content
//! embeddings), is evaluated on one shared held-out split, and becomes one
//! report row.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{build_frequency_table, split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::eval::{content_index, evaluate, EvalConfig, MetricsReport};
use crate::io::write_atomic;
use crate::model::ModelConfig;
use crate::objective::LossWeights;
use crate::retrieval::build_index;
use crate::trainer::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryKind {
    /// Nearest neighbours on concatenated unit-norm text and visual embeddings.
    ContentOnly,
    Trained {
        use_text: bool,
        use_visual: bool,
        w_co: f64,
        w_sem: f64,
        opc: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub name: String,
    #[serde(flatten)]
    pub kind: EntryKind,
}

impl AblationEntry {
    pub fn content_only() -> Self {
        AblationEntry {
            name: "content_only".into(),
            kind: EntryKind::ContentOnly,
        }
    }

    pub fn trained(name: impl Into<String>, sem_ratio: f64, text: bool, visual: bool, opc: bool) -> Self {
        AblationEntry {
            name: name.into(),
            kind: EntryKind::Trained {
                use_text: text,
                use_visual: visual,
                w_co: 1.0,
                w_sem: sem_ratio,
                opc,
            },
        }
    }

    /// `w_co:w_sem` label, or `-` for the content-only entry.
    pub fn ratio_label(&self) -> String {
        match &self.kind {
            EntryKind::ContentOnly => "-".into(),
            EntryKind::Trained { w_co, w_sem, .. } => format!("{w_co}:{w_sem}"),
        }
    }
}

/// The weight-ratio sweep of the multi-task rows.
pub const SWEEP_RATIOS: [f64; 5] = [1.0, 10.0, 100.0, 500.0, 1000.0];

/// Ratio used by the multimodal and popularity-corrected rows.
pub const SELECTED_RATIO: f64 = 500.0;

fn sweep_name(r: f64) -> String {
    format!("mtl_1_{r}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSpec {
    pub entries: Vec<AblationEntry>,
    /// Shared tower settings; per-entry modality flags override `use_text`/`use_visual`.
    pub model: ModelConfig,
    /// Shared optimizer settings; per-entry weights and OPC flag override these,
    /// and the run seed overrides `seed`.
    pub train: TrainConfig,
    pub holdout_fraction: f64,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec::full()
    }
}

impl AblationSpec {
    fn with_entries(entries: Vec<AblationEntry>) -> Self {
        AblationSpec {
            entries,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            holdout_fraction: 0.1,
        }
    }

    /// Baseline CF, then the semantic task, then content features, then OPC.
    pub fn paper_protocol() -> Self {
        let r = SELECTED_RATIO;
        Self::with_entries(vec![
            AblationEntry::trained("baseline_cf", 0.0, false, false, false),
            AblationEntry::trained("mtl", r, false, false, false),
            AblationEntry::trained("mtl_multimodal", r, true, true, false),
            AblationEntry::trained("mtl_multimodal_opc", r, true, true, true),
        ])
    }

    /// Baseline CF, content-only KNN and the five weight ratios.
    pub fn ratio_sweep() -> Self {
        let mut entries = vec![
            AblationEntry::trained("baseline_cf", 0.0, false, false, false),
            AblationEntry::content_only(),
        ];
        entries.extend(
            SWEEP_RATIOS
                .iter()
                .map(|&r| AblationEntry::trained(sweep_name(r), r, false, false, false)),
        );
        Self::with_entries(entries)
    }

    /// Every row: the sweep, the modality variants and OPC.
    pub fn full() -> Self {
        let r = SELECTED_RATIO;
        let mut spec = Self::ratio_sweep();
        spec.entries.extend([
            AblationEntry::trained("mtl_text", r, true, false, false),
            AblationEntry::trained("mtl_visual", r, false, true, false),
            AblationEntry::trained("mtl_multimodal", r, true, true, false),
            AblationEntry::trained("mtl_multimodal_opc", r, true, true, true),
        ]);
        spec
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper_protocol()),
            "sweep" => Ok(Self::ratio_sweep()),
            "full" => Ok(Self::full()),
            other => Err(Error::Config(format!(
                "unknown ablation preset `{other}` (expected paper, sweep or full)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("ablation: no entries".into()));
        }
        let mut names = HashSet::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("ablation: duplicate entry `{}`", e.name)));
            }
            if e.name.is_empty() || e.name.contains(['\t', '\n']) {
                return Err(Error::Config(format!("ablation: bad entry name {:?}", e.name)));
            }
            if let EntryKind::Trained { w_co, w_sem, .. } = e.kind {
                LossWeights { w_co, w_sem }
                    .validate()
                    .map_err(|err| Error::Config(format!("ablation entry `{}`: {err}", e.name)))?;
            }
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) || self.holdout_fraction == 0.0 {
            return Err(Error::Config(format!(
                "ablation: holdout_fraction = {} (need (0, 1))",
                self.holdout_fraction
            )));
        }
        self.model.validate()?;
        self.train.validate()
    }

    /// Model and training settings for one trained entry.
    pub fn resolve(&self, entry: &AblationEntry, seed: u64) -> Option<(ModelConfig, TrainConfig)> {
        match entry.kind {
            EntryKind::ContentOnly => None,
            EntryKind::Trained {
                use_text,
                use_visual,
                w_co,
                w_sem,
                opc,
            } => Some((
                ModelConfig {
                    use_text,
                    use_visual,
                    ..self.model.clone()
                },
                TrainConfig {
                    loss_weights: LossWeights { w_co, w_sem },
                    opc_enabled: opc,
                    seed,
                    ..self.train.clone()
                },
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub ratio: String,
    #[serde(flatten)]
    pub kind: EntryKind,
    pub metrics: MetricsReport,
    /// Per-epoch training statistics, without wall-clock timings.
    pub train_report: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub k: usize,
    pub n_train_pairs: usize,
    pub n_eval_pairs: usize,
    pub eval: EvalConfig,
    pub spec: AblationSpec,
    pub rows: Vec<AblationRow>,
}

/// Column order of the tabular report.
pub const TABLE_COLUMNS: [&str; 11] = [
    "name",
    "ratio",
    "k",
    "recall_at_k",
    "topic_match_rate",
    "mean_topic_overlap",
    "popular_share",
    "popular_recall_at_k",
    "popular_topic_match_rate",
    "unpopular_recall_at_k",
    "unpopular_topic_match_rate",
];

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Tab-separated table, one row per entry, columns as in [`TABLE_COLUMNS`].
    /// Rates carry six decimals; an undefined bucket recall is `NA`.
    pub fn to_table(&self) -> String {
        let mut out = TABLE_COLUMNS.join("\t");
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.6}\t{}\t{:.6}",
                r.name,
                r.ratio,
                m.k,
                m.recall_at_k,
                m.topic_match_rate,
                m.mean_topic_overlap,
                m.popular_share,
                opt(m.bucketed.popular.recall_at_k),
                m.bucketed.popular.topic_match_rate,
                opt(m.bucketed.unpopular.recall_at_k),
                m.bucketed.unpopular.topic_match_rate,
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        let table = self.to_table();
        write_atomic(path, |w| w.write_all(table.as_bytes()).map_err(|e| Error::io(path, e)))
    }
}

/// Runs every entry of `spec` against one split of `dataset` drawn with `seed`.
/// Trained entries also use `seed` for initialization and batch order.
pub fn run_ablation(
    dataset: &Dataset,
    spec: &AblationSpec,
    eval_config: &EvalConfig,
    seed: u64,
) -> Result<AblationReport> {
    spec.validate()?;
    eval_config.validate()?;
    let (train_set, eval_set) = split_dataset(dataset, spec.holdout_fraction, seed)?;
    if eval_set.pairs().is_empty() {
        return Err(Error::Config("ablation: held-out split is empty".into()));
    }
    let freq = build_frequency_table(train_set.pairs());
    let videos = dataset.videos();

    let mut rows = Vec::with_capacity(spec.entries.len());
    for entry in &spec.entries {
        let started = Instant::now();
        let wrap = |e: Error| Error::Ablation {
            name: entry.name.clone(),
            source: Box::new(e),
        };
        let (index, train_report) = match spec.resolve(entry, seed) {
            None => (content_index(videos).map_err(wrap)?, None),
            Some((model, train_cfg)) => {
                let (params, report) = train(&train_set, &model, &train_cfg).map_err(wrap)?;
                let index = build_index(&params, &model, videos).map_err(wrap)?;
                (index, Some(report.without_timings()))
            }
        };
        let metrics = evaluate(&index, videos, eval_set.pairs(), &freq, eval_config).map_err(wrap)?;
        log::info!(
            "{:<20} recall@{} {:.4}  topic match {:.4}  popular share {:.4}  ({:.1}s)",
            entry.name,
            metrics.k,
            metrics.recall_at_k,
            metrics.topic_match_rate,
            metrics.popular_share,
            started.elapsed().as_secs_f64()
        );
        rows.push(AblationRow {
            name: entry.name.clone(),
            ratio: entry.ratio_label(),
            kind: entry.kind.clone(),
            metrics,
            train_report,
        });
    }

    Ok(AblationReport {
        seed,
        k: eval_config.k,
        n_train_pairs: train_set.pairs().len(),
        n_eval_pairs: eval_set.pairs().len(),
        eval: eval_config.clone(),
        spec: spec.clone(),
        rows,
    })
}
