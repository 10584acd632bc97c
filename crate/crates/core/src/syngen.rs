//! Synthetic catalogs with topic clusters, Zipf popularity and cross-topic
//! co-engagement noise.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, InteractionPair, VideoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub n_topics: usize,
    pub d_text: usize,
    pub d_visual: usize,
    /// Popularity skew: the video at popularity rank `r` (1-based) has weight `r^-s`.
    pub zipf_exponent: f64,
    /// Probability that a pair's candidate is drawn from the whole catalog
    /// instead of the trigger's topic.
    pub cross_topic_noise: f64,
    /// Per-coordinate standard deviation around the topic centroid.
    pub content_noise: f64,
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::reference()
    }
}

impl SynthConfig {
    /// The reference corpus used by the acceptance suite and the ablation presets.
    pub fn reference() -> Self {
        SynthConfig {
            n_videos: 2000,
            n_topics: 20,
            d_text: 8,
            d_visual: 8,
            zipf_exponent: 1.1,
            cross_topic_noise: 0.3,
            content_noise: 0.2,
            n_pairs: 60_000,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synth: {m}")));
        if self.n_videos < 2 {
            return fail(format!("n_videos = {} (need >= 2)", self.n_videos));
        }
        if self.n_topics < 1 || self.n_topics > self.n_videos {
            return fail(format!(
                "n_topics = {} (need 1 <= n_topics <= n_videos = {})",
                self.n_topics, self.n_videos
            ));
        }
        if self.d_text < 1 || self.d_visual < 1 {
            return fail("embedding dimensions must be >= 1".into());
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return fail(format!("zipf_exponent = {} (need >= 0)", self.zipf_exponent));
        }
        if !(0.0..=1.0).contains(&self.cross_topic_noise) {
            return fail(format!("cross_topic_noise = {} (need [0, 1])", self.cross_topic_noise));
        }
        if !(self.content_noise >= 0.0 && self.content_noise.is_finite()) {
            return fail(format!("content_noise = {} (need >= 0)", self.content_noise));
        }
        if self.n_pairs < 1 {
            return fail("n_pairs must be >= 1".into());
        }
        Ok(())
    }
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(v) {
            return u;
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 1e-12 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn noisy_unit(rng: &mut ChaCha8Rng, centroid: &[f64], sigma: f64) -> Vec<f64> {
    loop {
        let v = centroid
            .iter()
            .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if let Some(u) = normalized(v) {
            return u;
        }
    }
}

/// Draws a corpus. Every random choice comes from one ChaCha stream seeded by
/// `config.seed`, consumed in a fixed order.
pub fn generate_corpus(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_videos;
    let n_topics = config.n_topics;

    // Balanced topic sizes, shuffled over ids.
    let mut topic_of: Vec<usize> = (0..n).map(|i| i % n_topics).collect();
    topic_of.shuffle(&mut rng);

    let text_centroids: Vec<Vec<f64>> = (0..n_topics).map(|_| gaussian_unit(&mut rng, config.d_text)).collect();
    let visual_centroids: Vec<Vec<f64>> = (0..n_topics)
        .map(|_| gaussian_unit(&mut rng, config.d_visual))
        .collect();

    let videos: Vec<VideoRecord> = (0..n)
        .map(|id| {
            let t = topic_of[id];
            let text_embedding = noisy_unit(&mut rng, &text_centroids[t], config.content_noise);
            let visual_embedding = noisy_unit(&mut rng, &visual_centroids[t], config.content_noise);
            VideoRecord {
                id,
                topics: vec![t as u32],
                text_embedding,
                visual_embedding,
            }
        })
        .collect();

    // rank_order[r] is the video at popularity rank r + 1.
    let mut rank_order: Vec<usize> = (0..n).collect();
    rank_order.shuffle(&mut rng);
    let mut weight = vec![0.0; n];
    for (r, &v) in rank_order.iter().enumerate() {
        weight[v] = ((r + 1) as f64).powf(-config.zipf_exponent);
    }

    let global = WeightedIndex::new(&weight).map_err(|e| Error::Config(e.to_string()))?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_topics];
    for (id, &t) in topic_of.iter().enumerate() {
        members[t].push(id);
    }
    let per_topic: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&v| weight[v])))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut pairs = Vec::with_capacity(config.n_pairs);
    for _ in 0..config.n_pairs {
        let trigger = global.sample(&mut rng);
        let topic = topic_of[trigger];
        // A singleton topic has no same-topic partner; fall back to the catalog.
        let cross = rng.random::<f64>() < config.cross_topic_noise || members[topic].len() < 2;
        let candidate = loop {
            let c = if cross {
                global.sample(&mut rng)
            } else {
                members[topic][per_topic[topic].sample(&mut rng)]
            };
            if c != trigger {
                break c;
            }
        };
        pairs.push(InteractionPair::new(trigger, candidate));
    }

    Dataset::new(videos, pairs)
}
