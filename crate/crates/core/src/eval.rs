//! Offline metrics: recall@k on held-out pairs, topic relevance of the
//! recommended lists, popular-item share, and popularity-bucketed breakdowns.
//!
//! Relevance and popular share are measured with every catalog video acting
//! as a trigger. Recall uses the held-out pairs. Popularity buckets rank
//! videos by their trigger frequency in the training split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FrequencyTable, InteractionPair, VideoRecord};
use crate::error::{Error, Result};
use crate::retrieval::{top_k, EmbeddingIndex, Scored};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
    pub popular_top_fraction: f64,
    pub unpopular_bottom_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            popular_top_fraction: 0.01,
            unpopular_bottom_fraction: 0.10,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("eval: k must be >= 1".into()));
        }
        for (name, f) in [
            ("popular_top_fraction", self.popular_top_fraction),
            ("unpopular_bottom_fraction", self.unpopular_bottom_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("eval: {name} = {f} (need (0, 1))")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub n_triggers: usize,
    pub n_eval_pairs: usize,
    /// `None` when no held-out pair has its trigger in the bucket.
    pub recall_at_k: Option<f64>,
    pub topic_match_rate: f64,
    pub mean_topic_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buckets {
    pub all: BucketMetrics,
    pub popular: BucketMetrics,
    pub unpopular: BucketMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub recall_at_k: f64,
    pub topic_match_rate: f64,
    pub mean_topic_overlap: f64,
    pub popular_share: f64,
    pub bucketed: Buckets,
}

/// `|a ∩ b| / |a ∪ b|` over sorted, deduplicated topic lists.
pub fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Top-k lists for each trigger, computed concurrently, returned in input order.
pub fn recommend_all(index: &EmbeddingIndex, triggers: &[usize], k: usize) -> Result<Vec<Vec<Scored>>> {
    triggers.par_iter().map(|&t| top_k(index, t, k)).collect()
}

pub fn recall_at_k(index: &EmbeddingIndex, eval_pairs: &[InteractionPair], k: usize) -> Result<f64> {
    if eval_pairs.is_empty() {
        return Err(Error::InvalidArgument("recall@k over an empty eval set".into()));
    }
    let triggers: Vec<usize> = eval_pairs.iter().map(|p| p.trigger_id).collect();
    let lists = recommend_all(index, &triggers, k)?;
    Ok(recall_from_lists(eval_pairs, |i| &lists[i]))
}

fn recall_from_lists<'a>(pairs: &[InteractionPair], list_of: impl Fn(usize) -> &'a Vec<Scored>) -> f64 {
    let hits = pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| list_of(*i).iter().any(|s| s.id == p.candidate_id))
        .count();
    hits as f64 / pairs.len() as f64
}

/// `(topic_match_rate, mean_topic_overlap)` over every (trigger, recommendation) slot.
pub fn topic_relevance(
    index: &EmbeddingIndex,
    videos: &[VideoRecord],
    trigger_set: &[usize],
    k: usize,
) -> Result<(f64, f64)> {
    if trigger_set.is_empty() {
        return Err(Error::InvalidArgument(
            "topic relevance over an empty trigger set".into(),
        ));
    }
    let lists = recommend_all(index, trigger_set, k)?;
    relevance_from_lists(videos, trigger_set, |i| &lists[i])
}

fn relevance_from_lists<'a>(
    videos: &[VideoRecord],
    triggers: &[usize],
    list_of: impl Fn(usize) -> &'a Vec<Scored>,
) -> Result<(f64, f64)> {
    let (mut slots, mut matched, mut overlap) = (0usize, 0usize, 0.0);
    for (i, &t) in triggers.iter().enumerate() {
        let tv = &videos[t];
        if tv.topics.is_empty() {
            return Err(Error::InvalidDataset(format!("trigger {t} has no topics")));
        }
        for s in list_of(i) {
            let cv = &videos[s.id];
            slots += 1;
            if tv.shares_topic(cv) {
                matched += 1;
            }
            overlap += jaccard(&tv.topics, &cv.topics);
        }
    }
    if slots == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((matched as f64 / slots as f64, overlap / slots as f64))
}

/// The `(popular, unpopular)` id sets: the top `popular_top_fraction` and the
/// bottom `unpopular_bottom_fraction` of the catalog ranked by training
/// trigger frequency (ties by ascending id), each at least one video.
pub fn popularity_buckets(freq: &FrequencyTable, n_videos: usize, config: &EvalConfig) -> (Vec<usize>, Vec<usize>) {
    let ranked = freq.ranked(n_videos);
    let size = |f: f64| ((f * n_videos as f64).round() as usize).clamp(1, n_videos);
    let top = size(config.popular_top_fraction);
    let bottom = size(config.unpopular_bottom_fraction);
    let mut popular = ranked[..top].to_vec();
    let mut unpopular = ranked[n_videos - bottom..].to_vec();
    popular.sort_unstable();
    unpopular.sort_unstable();
    (popular, unpopular)
}

/// Fraction of recommended slots filled by videos in the popular bucket.
pub fn popular_share(
    index: &EmbeddingIndex,
    trigger_set: &[usize],
    freq: &FrequencyTable,
    config: &EvalConfig,
    k: usize,
) -> Result<f64> {
    let lists = recommend_all(index, trigger_set, k)?;
    let (popular, _) = popularity_buckets(freq, index.len(), config);
    Ok(share_from_lists(&lists, &membership(&popular, index.len())))
}

fn membership(ids: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in ids {
        m[i] = true;
    }
    m
}

fn share_from_lists(lists: &[Vec<Scored>], popular: &[bool]) -> f64 {
    let slots: usize = lists.iter().map(Vec::len).sum();
    if slots == 0 {
        return 0.0;
    }
    let hits = lists.iter().flatten().filter(|s| popular[s.id]).count();
    hits as f64 / slots as f64
}

/// Full metrics for one index. Every catalog video is queried once.
pub fn evaluate(
    index: &EmbeddingIndex,
    videos: &[VideoRecord],
    eval_pairs: &[InteractionPair],
    train_freq: &FrequencyTable,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    config.validate()?;
    if eval_pairs.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs held-out pairs".into()));
    }
    if index.len() != videos.len() {
        return Err(Error::InvalidArgument(format!(
            "index has {} rows, catalog has {} videos",
            index.len(),
            videos.len()
        )));
    }
    let n = videos.len();
    let all: Vec<usize> = (0..n).collect();
    let lists = recommend_all(index, &all, config.k)?;
    let (popular, unpopular) = popularity_buckets(train_freq, n, config);

    let bucket = |members: &[usize]| -> Result<BucketMetrics> {
        let inside = membership(members, n);
        let pairs: Vec<InteractionPair> = eval_pairs.iter().filter(|p| inside[p.trigger_id]).copied().collect();
        let recall = (!pairs.is_empty()).then(|| recall_from_lists(&pairs, |i| &lists[pairs[i].trigger_id]));
        let (tm, ov) = relevance_from_lists(videos, members, |i| &lists[members[i]])?;
        Ok(BucketMetrics {
            n_triggers: members.len(),
            n_eval_pairs: pairs.len(),
            recall_at_k: recall,
            topic_match_rate: tm,
            mean_topic_overlap: ov,
        })
    };
    let all_bucket = bucket(&all)?;
    let popular_bucket = bucket(&popular)?;
    let unpopular_bucket = bucket(&unpopular)?;

    Ok(MetricsReport {
        k: config.k,
        recall_at_k: all_bucket.recall_at_k.unwrap_or(0.0),
        topic_match_rate: all_bucket.topic_match_rate,
        mean_topic_overlap: all_bucket.mean_topic_overlap,
        popular_share: share_from_lists(&lists, &membership(&popular, n)),
        bucketed: Buckets {
            all: all_bucket,
            popular: popular_bucket,
            unpopular: unpopular_bucket,
        },
    })
}

/// Content-only index: each row is the unit-normalized text embedding
/// followed by the unit-normalized visual embedding.
pub fn content_index(videos: &[VideoRecord]) -> Result<EmbeddingIndex> {
    let unit = |v: &[f64], id: usize| -> Result<Vec<f64>> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidDataset(format!(
                "video {id} has a zero content embedding"
            )));
        }
        Ok(v.iter().map(|x| x / norm).collect())
    };
    let rows = videos
        .iter()
        .map(|v| {
            let mut row = unit(&v.text_embedding, v.id)?;
            row.extend(unit(&v.visual_embedding, v.id)?);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingIndex::from_rows(rows, "content-only")
}
