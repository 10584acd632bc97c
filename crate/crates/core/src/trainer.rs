//! Mini-batch training with Adam and optional popularity correction.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_frequency_table, Dataset, InteractionPair};
use crate::error::{Error, Result};
use crate::model::{init_params, ContentDims, ModelConfig, TowerParams};
use crate::objective::{semantic_indicators, BatchWorkspace, Gradients, LossWeights, SemanticLabelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub loss_weights: LossWeights,
    pub sem_config: SemanticLabelConfig,
    pub opc_enabled: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 256,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            loss_weights: LossWeights::ratio(500.0),
            sem_config: SemanticLabelConfig::default(),
            opc_enabled: true,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("train: {m}")));
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size = {} (need >= 2)", self.batch_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate = {} (need > 0)", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return fail(format!("{name} = {b} (need 0 < beta < 1)"));
            }
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return fail(format!("adam_epsilon = {} (need > 0)", self.adam_epsilon));
        }
        self.loss_weights.validate()?;
        self.sem_config.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub batches: usize,
    pub mean_weighted_loss: f64,
    pub mean_l_co: f64,
    pub mean_l_sem: f64,
    pub semantic_positive_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// Copy without wall-clock timings, for byte-reproducible reports.
    pub fn without_timings(&self) -> Self {
        TrainReport {
            epochs: self
                .epochs
                .iter()
                .map(|e| EpochStats {
                    seconds: None,
                    ..e.clone()
                })
                .collect(),
        }
    }
}

/// `1 / ln(1 + freq)`.
pub fn opc_weight(freq: u64) -> Result<f64> {
    if freq < 1 {
        return Err(Error::InvalidArgument("trigger frequency must be >= 1".into()));
    }
    Ok(1.0 / (freq as f64).ln_1p())
}

/// Same law on a real-valued frequency.
pub fn opc_weight_real(freq: f64) -> f64 {
    1.0 / freq.ln_1p()
}

/// Dense Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: [Vec<f64>; 3],
    v: [Vec<f64>; 3],
}

impl Adam {
    pub fn new(config: &TrainConfig, params: &TowerParams) -> Self {
        let zeros = |g: &[f64]| vec![0.0; g.len()];
        let [a, b, c] = params.groups();
        Adam {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_epsilon,
            step: 0,
            m: [zeros(a), zeros(b), zeros(c)],
            v: [zeros(a), zeros(b), zeros(c)],
        }
    }

    pub fn step(&mut self, params: &mut TowerParams, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, g), m), v) in params
            .groups_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Per-example weights for `pairs`: inverse log trigger frequency when
/// `opc_enabled`, otherwise exactly 1.
pub fn example_weights(pairs: &[InteractionPair], opc_enabled: bool) -> Result<Vec<f64>> {
    if !opc_enabled {
        return Ok(vec![1.0; pairs.len()]);
    }
    let freq = build_frequency_table(pairs);
    pairs.iter().map(|p| opc_weight(freq.count(p.trigger_id))).collect()
}

/// Trains from a seeded initialization. Parameters are initialized from
/// `seed`; batch order comes from a second ChaCha stream of the same seed.
pub fn train(
    train_set: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(TowerParams, TrainReport)> {
    model_config.validate()?;
    train_config.validate()?;
    let pairs = train_set.pairs();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("training set has no pairs".into()));
    }
    if train_config.batch_size > pairs.len() {
        return Err(Error::Config(format!(
            "train: batch_size {} exceeds the {} training pairs",
            train_config.batch_size,
            pairs.len()
        )));
    }

    let videos = train_set.videos();
    let indicators = semantic_indicators(videos, pairs, &train_config.sem_config)?;
    let weights = example_weights(pairs, train_config.opc_enabled)?;

    let mut params = init_params(
        model_config,
        train_set.n_videos(),
        ContentDims::of(train_set),
        train_config.seed,
    )?;
    let mut adam = Adam::new(train_config, &params);
    let mut grads = Gradients::zeros_like(&params);
    let mut workspace = BatchWorkspace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut batch = Vec::with_capacity(train_config.batch_size);
    let mut batch_ind = Vec::with_capacity(train_config.batch_size);
    let mut batch_w = Vec::with_capacity(train_config.batch_size);
    let mut report = TrainReport::default();

    for epoch in 0..train_config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut total, mut l_co, mut l_sem, mut n_sem, mut n_seen, mut n_batches) =
            (0.0, 0.0, 0.0, 0usize, 0usize, 0usize);
        for (b, chunk) in order.chunks(train_config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            batch.clear();
            batch_ind.clear();
            batch_w.clear();
            for &i in chunk {
                batch.push(pairs[i]);
                batch_ind.push(indicators[i]);
                batch_w.push(weights[i]);
            }
            let out = workspace.compute(
                &params,
                model_config,
                videos,
                &batch,
                &batch_ind,
                &batch_w,
                &train_config.loss_weights,
                &mut grads,
            )?;
            if !out.weighted_total.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch,
                    batch: b,
                });
            }
            adam.step(&mut params, &grads);
            total += out.weighted_total;
            l_co += out.l_co;
            l_sem += out.l_sem;
            n_sem += out.n_semantic_positives;
            n_seen += chunk.len();
            n_batches += 1;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite {
                what: "parameter",
                epoch,
                batch: n_batches,
            });
        }
        let nb = n_batches.max(1) as f64;
        let stats = EpochStats {
            epoch,
            batches: n_batches,
            mean_weighted_loss: total / nb,
            mean_l_co: l_co / nb,
            mean_l_sem: l_sem / nb,
            semantic_positive_fraction: n_sem as f64 / n_seen.max(1) as f64,
            seconds: Some(started.elapsed().as_secs_f64()),
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} l_co {:.6} l_sem {:.6}",
            stats.mean_weighted_loss,
            stats.mean_l_co,
            stats.mean_l_sem
        );
        report.epochs.push(stats);
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syngen::{generate_corpus, SynthConfig};

    #[test]
    fn opc_weight_values() {
        let w = opc_weight_real(std::f64::consts::E - 1.0);
        assert!((w - 1.0).abs() < 1e-12);
        // 1 / ln 2 = log2(e)
        assert!((opc_weight(1).unwrap() - std::f64::consts::LOG2_E).abs() < 1e-12);
        assert!(opc_weight(10).unwrap() > opc_weight(100).unwrap());
        assert!(opc_weight(100).unwrap() > opc_weight(1000).unwrap());
        assert!(opc_weight(0).is_err());
    }

    #[test]
    fn example_weights_are_one_without_opc() {
        let pairs = [InteractionPair::new(0, 1), InteractionPair::new(0, 2)];
        assert_eq!(example_weights(&pairs, false).unwrap(), vec![1.0, 1.0]);
        let w = example_weights(&pairs, true).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3f64.ln()).abs() < 1e-15));
    }

    fn toy_corpus() -> Dataset {
        generate_corpus(&SynthConfig {
            n_videos: 40,
            n_topics: 2,
            d_text: 4,
            d_visual: 4,
            zipf_exponent: 0.5,
            cross_topic_noise: 0.0,
            content_noise: 0.2,
            n_pairs: 800,
            seed: 1,
        })
        .unwrap()
    }

    fn toy_model() -> ModelConfig {
        ModelConfig {
            d_id: 8,
            d_out: 8,
            ..ModelConfig::default()
        }
    }

    fn toy_train() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_corpus_loss_decreases() {
        let (_, report) = train(&toy_corpus(), &toy_model(), &toy_train()).unwrap();
        let losses: Vec<f64> = report.epochs.iter().map(|e| e.mean_weighted_loss).collect();
        assert_eq!(losses.len(), 5);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy_corpus();
        let (a, ra) = train(&ds, &toy_model(), &toy_train()).unwrap();
        let (b, rb) = train(&ds, &toy_model(), &toy_train()).unwrap();
        assert_eq!(
            crate::model::checkpoint_to_bytes(&a, &toy_model()),
            crate::model::checkpoint_to_bytes(&b, &toy_model())
        );
        assert_eq!(ra.without_timings(), rb.without_timings());
    }

    #[test]
    fn zero_semantic_weight_reproduces_co_engagement_run() {
        let ds = toy_corpus();
        let base = TrainConfig {
            loss_weights: LossWeights::co_engagement_only(),
            opc_enabled: false,
            sem_config: SemanticLabelConfig { cosine_threshold: 1.0 },
            ..toy_train()
        };
        // Every pair is a semantic positive here, but w_sem = 0 silences it.
        let all_sem = TrainConfig {
            sem_config: SemanticLabelConfig { cosine_threshold: -1.0 },
            ..base.clone()
        };
        let (pa, ra) = train(&ds, &toy_model(), &base).unwrap();
        let (pb, rb) = train(&ds, &toy_model(), &all_sem).unwrap();
        assert_eq!(pa, pb);
        for (a, b) in ra.epochs.iter().zip(&rb.epochs) {
            assert_eq!(a.mean_weighted_loss.to_bits(), b.mean_weighted_loss.to_bits());
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let ds = toy_corpus();
        for cfg in [
            TrainConfig {
                epochs: 0,
                ..toy_train()
            },
            TrainConfig {
                batch_size: 1,
                ..toy_train()
            },
            TrainConfig {
                batch_size: 100_000,
                ..toy_train()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..toy_train()
            },
            TrainConfig {
                adam_beta1: 1.0,
                ..toy_train()
            },
            TrainConfig {
                loss_weights: LossWeights { w_co: 0.0, w_sem: 0.0 },
                ..toy_train()
            },
        ] {
            assert!(
                matches!(train(&ds, &toy_model(), &cfg), Err(Error::Config(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn short_final_batch_is_kept_unless_singleton() {
        let ds = toy_corpus();
        let sub = ds.with_pairs(ds.pairs()[..65].to_vec()).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 32,
            ..toy_train()
        };
        let (_, r) = train(&sub, &toy_model(), &cfg).unwrap();
        assert_eq!(r.epochs[0].batches, 2);
        let sub = ds.with_pairs(ds.pairs()[..66].to_vec()).unwrap();
        let (_, r) = train(&sub, &toy_model(), &cfg).unwrap();
        assert_eq!(r.epochs[0].batches, 3);
    }
}
