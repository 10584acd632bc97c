//! Catalog and co-engagement data: records, line-delimited file formats,
//! trigger frequency counts and seeded train/eval splits.
//!
//! Videos file, one JSON object per line:
//!
//! ```text
//! {"id":17,"topics":[3],"text_emb":[0.12,...],"visual_emb":[-0.4,...]}
//! ```
//!
//! Interactions file, one JSON object per line:
//!
//! ```text
//! {"trigger":17,"candidate":4}
//! ```
//!
//! Ids in the files are external identifiers. On load, videos receive dense
//! ids `0..N` in file order and pairs are remapped through that table; saving
//! writes the external ids back.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    /// Dense index into the catalog.
    pub id: usize,
    /// Sorted, deduplicated topic labels. Never empty.
    pub topics: Vec<u32>,
    pub text_embedding: Vec<f64>,
    pub visual_embedding: Vec<f64>,
}

impl VideoRecord {
    pub fn shares_topic(&self, other: &VideoRecord) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.topics.len() && j < other.topics.len() {
            match self.topics[i].cmp(&other.topics[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// A directed co-engagement positive: `candidate` was engaged alongside `trigger`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InteractionPair {
    pub trigger_id: usize,
    pub candidate_id: usize,
}

impl InteractionPair {
    pub fn new(trigger_id: usize, candidate_id: usize) -> Self {
        InteractionPair {
            trigger_id,
            candidate_id,
        }
    }
}

/// Videos plus co-engagement pairs. The catalog is shared between the halves
/// of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    videos: Arc<Vec<VideoRecord>>,
    external_ids: Arc<Vec<u64>>,
    pairs: Vec<InteractionPair>,
}

impl Dataset {
    /// Builds a dataset whose external ids equal the dense ids.
    pub fn new(videos: Vec<VideoRecord>, pairs: Vec<InteractionPair>) -> Result<Self> {
        let external_ids = (0..videos.len() as u64).collect();
        Self::with_external_ids(videos, external_ids, pairs)
    }

    pub fn with_external_ids(
        videos: Vec<VideoRecord>,
        external_ids: Vec<u64>,
        pairs: Vec<InteractionPair>,
    ) -> Result<Self> {
        validate_catalog(&videos)?;
        if external_ids.len() != videos.len() {
            return Err(Error::InvalidDataset(format!(
                "{} external ids for {} videos",
                external_ids.len(),
                videos.len()
            )));
        }
        let mut seen = HashMap::with_capacity(external_ids.len());
        for (dense, &ext) in external_ids.iter().enumerate() {
            if let Some(prev) = seen.insert(ext, dense) {
                return Err(Error::InvalidDataset(format!(
                    "external id {ext} used by videos {prev} and {dense}"
                )));
            }
        }
        let n = videos.len();
        for p in &pairs {
            validate_pair(p, n)?;
        }
        Ok(Dataset {
            videos: Arc::new(videos),
            external_ids: Arc::new(external_ids),
            pairs,
        })
    }

    /// Same catalog, different pairs.
    pub fn with_pairs(&self, pairs: Vec<InteractionPair>) -> Result<Self> {
        let n = self.videos.len();
        for p in &pairs {
            validate_pair(p, n)?;
        }
        Ok(Dataset {
            videos: Arc::clone(&self.videos),
            external_ids: Arc::clone(&self.external_ids),
            pairs,
        })
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn pairs(&self) -> &[InteractionPair] {
        &self.pairs
    }

    pub fn external_ids(&self) -> &[u64] {
        &self.external_ids
    }

    pub fn n_videos(&self) -> usize {
        self.videos.len()
    }

    pub fn text_dim(&self) -> usize {
        self.videos.first().map_or(0, |v| v.text_embedding.len())
    }

    pub fn visual_dim(&self) -> usize {
        self.videos.first().map_or(0, |v| v.visual_embedding.len())
    }

    pub fn video(&self, id: usize) -> Result<&VideoRecord> {
        self.videos.get(id).ok_or(Error::IdOutOfRange {
            id,
            n_videos: self.videos.len(),
        })
    }
}

fn validate_pair(p: &InteractionPair, n: usize) -> Result<()> {
    for id in [p.trigger_id, p.candidate_id] {
        if id >= n {
            return Err(Error::IdOutOfRange { id, n_videos: n });
        }
    }
    if p.trigger_id == p.candidate_id {
        return Err(Error::InvalidDataset(format!("self-pair on video {}", p.trigger_id)));
    }
    Ok(())
}

fn validate_catalog(videos: &[VideoRecord]) -> Result<()> {
    let Some(first) = videos.first() else {
        return Ok(());
    };
    let (dt, dv) = (first.text_embedding.len(), first.visual_embedding.len());
    for (i, v) in videos.iter().enumerate() {
        if v.id != i {
            return Err(Error::InvalidDataset(format!("video at position {i} has id {}", v.id)));
        }
        if v.topics.is_empty() {
            return Err(Error::InvalidDataset(format!("video {i} has no topics")));
        }
        if v.text_embedding.len() != dt || v.visual_embedding.len() != dv {
            return Err(Error::InvalidDataset(format!(
                "video {i} has embedding dimensions ({}, {}), expected ({dt}, {dv})",
                v.text_embedding.len(),
                v.visual_embedding.len()
            )));
        }
        if v.text_embedding
            .iter()
            .chain(&v.visual_embedding)
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidDataset(format!(
                "video {i} has a non-finite embedding value"
            )));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoLine {
    id: u64,
    topics: Vec<u32>,
    text_emb: Vec<f64>,
    visual_emb: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    trigger: u64,
    candidate: u64,
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

pub fn load_dataset(videos_path: &Path, interactions_path: &Path) -> Result<Dataset> {
    let mut videos = Vec::new();
    let mut external_ids = Vec::new();
    let mut dense_of: HashMap<u64, usize> = HashMap::new();
    let mut dims: Option<(usize, usize)> = None;

    for (line_no, line) in open_lines(videos_path)? {
        let line = line.map_err(|e| Error::io(videos_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VideoLine = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: videos_path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let malformed = |message: String| Error::Malformed {
            path: videos_path.to_path_buf(),
            line: line_no,
            message,
        };
        if rec.topics.is_empty() {
            return Err(malformed("empty topic list".into()));
        }
        if rec.text_emb.iter().chain(&rec.visual_emb).any(|x| !x.is_finite()) {
            return Err(malformed("non-finite embedding value".into()));
        }
        let (dt, dv) = *dims.get_or_insert((rec.text_emb.len(), rec.visual_emb.len()));
        for (field, expected, found) in [
            ("text_emb", dt, rec.text_emb.len()),
            ("visual_emb", dv, rec.visual_emb.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    path: videos_path.to_path_buf(),
                    line: line_no,
                    field,
                    expected,
                    found,
                });
            }
        }
        let dense = videos.len();
        if dense_of.insert(rec.id, dense).is_some() {
            return Err(malformed(format!("duplicate video id {}", rec.id)));
        }
        let mut topics = rec.topics;
        topics.sort_unstable();
        topics.dedup();
        external_ids.push(rec.id);
        videos.push(VideoRecord {
            id: dense,
            topics,
            text_embedding: rec.text_emb,
            visual_embedding: rec.visual_emb,
        });
    }

    let mut pairs = Vec::new();
    for (line_no, line) in open_lines(interactions_path)? {
        let line = line.map_err(|e| Error::io(interactions_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairLine = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: interactions_path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let lookup = |id: u64| {
            dense_of.get(&id).copied().ok_or(Error::DanglingId {
                path: interactions_path.to_path_buf(),
                line: line_no,
                id,
            })
        };
        let pair = InteractionPair::new(lookup(rec.trigger)?, lookup(rec.candidate)?);
        if pair.trigger_id == pair.candidate_id {
            return Err(Error::Malformed {
                path: interactions_path.to_path_buf(),
                line: line_no,
                message: format!("trigger and candidate are both {}", rec.trigger),
            });
        }
        pairs.push(pair);
    }

    Dataset::with_external_ids(videos, external_ids, pairs)
}

/// Writes both files atomically. Reals use the shortest representation that
/// parses back to the identical double.
pub fn save_dataset(dataset: &Dataset, videos_path: &Path, interactions_path: &Path) -> Result<()> {
    let ext = dataset.external_ids();
    write_atomic(videos_path, |w| {
        for v in dataset.videos() {
            let line = VideoLine {
                id: ext[v.id],
                topics: v.topics.clone(),
                text_emb: v.text_embedding.clone(),
                visual_emb: v.visual_embedding.clone(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(|e| Error::io(videos_path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(videos_path, e))?;
        }
        Ok(())
    })?;
    write_atomic(interactions_path, |w| {
        for p in dataset.pairs() {
            let line = PairLine {
                trigger: ext[p.trigger_id],
                candidate: ext[p.candidate_id],
            };
            serde_json::to_writer(&mut *w, &line).map_err(|e| Error::io(interactions_path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(interactions_path, e))?;
        }
        Ok(())
    })
}

/// Trigger-side occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    counts: BTreeMap<usize, u64>,
}

impl FrequencyTable {
    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// All catalog ids ordered by descending count, ties by ascending id.
    pub fn ranked(&self, n_videos: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..n_videos).collect();
        ids.sort_by(|&a, &b| self.count(b).cmp(&self.count(a)).then(a.cmp(&b)));
        ids
    }
}

pub fn build_frequency_table(pairs: &[InteractionPair]) -> FrequencyTable {
    let mut counts = BTreeMap::new();
    for p in pairs {
        *counts.entry(p.trigger_id).or_insert(0) += 1;
    }
    FrequencyTable { counts }
}

/// Seeded disjoint split of the pairs. The eval half holds
/// `floor(holdout_fraction * len)` pairs; both halves keep original order.
pub fn split_dataset(dataset: &Dataset, holdout_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::Config(format!(
            "holdout fraction {holdout_fraction} outside [0, 1)"
        )));
    }
    let n = dataset.pairs.len();
    let n_eval = (holdout_fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_eval = vec![false; n];
    for &i in &order[..n_eval] {
        in_eval[i] = true;
    }
    let (mut train, mut eval) = (Vec::with_capacity(n - n_eval), Vec::with_capacity(n_eval));
    for (p, held) in dataset.pairs.iter().zip(in_eval) {
        if held {
            eval.push(*p);
        } else {
            train.push(*p);
        }
    }
    Ok((dataset.with_pairs(train)?, dataset.with_pairs(eval)?))
}
