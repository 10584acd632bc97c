//! Loss mathematics for the multi-objective tower.
//!
//! For a batch of `B` positive pairs, pair `i` scores its own candidate
//! against every other candidate in the batch:
//!
//! ```text
//! p_i   = exp(s_ii) / sum_j exp(s_ij),      s_ij = v(trigger_i) . v(candidate_j)
//! l_co  = -ln p_i
//! l_sem = I_i * -ln p_i
//! L_i   = w_i * (w_sem * l_sem + w_co * l_co)
//! L     = mean_i L_i
//! ```
//!
//! `I_i` is 1 when the text embeddings of the pair have cosine similarity at
//! or above the threshold, and `w_i` is the per-example weight (1, or the
//! inverse-log-frequency weight of the trigger).

use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionPair, VideoRecord};
use crate::error::{Error, Result};
use crate::model::{dense_forward, dot, input_row, ModelConfig, TowerParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_co: f64,
    pub w_sem: f64,
}

impl LossWeights {
    /// Weights for a `w_co : w_sem` ratio of `1 : sem`.
    pub fn ratio(sem: f64) -> Self {
        LossWeights { w_co: 1.0, w_sem: sem }
    }

    pub fn co_engagement_only() -> Self {
        LossWeights::ratio(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if !ok(self.w_co) || !ok(self.w_sem) {
            return Err(Error::Config(format!(
                "loss weights must be finite and >= 0 (w_co = {}, w_sem = {})",
                self.w_co, self.w_sem
            )));
        }
        if self.w_co == 0.0 && self.w_sem == 0.0 {
            return Err(Error::Config("loss weights are both zero".into()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::ratio(500.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemanticLabelConfig {
    /// Inclusive cosine threshold on text embeddings.
    pub cosine_threshold: f64,
}

impl Default for SemanticLabelConfig {
    fn default() -> Self {
        SemanticLabelConfig { cosine_threshold: 0.8 }
    }
}

impl SemanticLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.cosine_threshold) {
            return Err(Error::Config(format!(
                "cosine_threshold = {} outside [-1, 1]",
                self.cosine_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Batch mean of `-ln p_i`.
    pub l_co: f64,
    /// Batch mean of `I_i * -ln p_i`.
    pub l_sem: f64,
    /// Batch mean of the per-example weighted losses.
    pub weighted_total: f64,
    pub n_semantic_positives: usize,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "cosine of vectors with dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine of a zero-norm vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Pseudo-label for a co-engaged pair: 1 when the text embeddings are at
/// least `cosine_threshold` similar.
pub fn semantic_indicator(trigger: &VideoRecord, candidate: &VideoRecord, config: &SemanticLabelConfig) -> Result<u8> {
    let cos = cosine_similarity(&trigger.text_embedding, &candidate.text_embedding)?;
    Ok(u8::from(cos >= config.cosine_threshold))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn sampled_softmax_prob(pos_logit: f64, neg_logits: &[f64]) -> Result<f64> {
    if neg_logits.is_empty() {
        return Err(Error::InvalidArgument(
            "sampled softmax needs at least one negative".into(),
        ));
    }
    if !pos_logit.is_finite() || neg_logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite logit".into()));
    }
    let max = neg_logits.iter().copied().fold(pos_logit, f64::max);
    let num = (pos_logit - max).exp();
    let denom = num + neg_logits.iter().map(|n| (n - max).exp()).sum::<f64>();
    Ok(num / denom)
}

/// `(l_co, l_sem)` for one pair given its softmax probability and indicator.
pub fn pair_losses(prob: f64, indicator: u8) -> Result<(f64, f64)> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {prob} outside (0, 1)")));
    }
    if indicator > 1 {
        return Err(Error::InvalidArgument(format!("indicator {indicator} is not 0 or 1")));
    }
    let l_co = -prob.ln();
    Ok((l_co, if indicator == 1 { l_co } else { 0.0 }))
}

pub fn weighted_example_loss(w_i: f64, weights: &LossWeights, l_sem: f64, l_co: f64) -> f64 {
    w_i * (weights.w_sem * l_sem + weights.w_co * l_co)
}

/// Gradient buffers shaped like [`TowerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub id_table: Vec<f64>,
    pub fusion_weight: Vec<f64>,
    pub fusion_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &TowerParams) -> Self {
        Gradients {
            id_table: vec![0.0; params.id_table.len()],
            fusion_weight: vec![0.0; params.fusion_weight.len()],
            fusion_bias: vec![0.0; params.fusion_bias.len()],
        }
    }

    pub fn clear(&mut self) {
        for g in [&mut self.id_table, &mut self.fusion_weight, &mut self.fusion_bias] {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn groups(&self) -> [&[f64]; 3] {
        [&self.id_table, &self.fusion_weight, &self.fusion_bias]
    }
}

/// Reusable buffers for [`BatchWorkspace::compute`].
#[derive(Debug, Default)]
pub struct BatchWorkspace {
    x_trig: Vec<Vec<f64>>,
    x_cand: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    logits: Vec<f64>,
    g_u: Vec<Vec<f64>>,
    g_c: Vec<Vec<f64>>,
}

fn resize_rows(rows: &mut Vec<Vec<f64>>, n: usize) {
    rows.resize_with(n, Vec::new);
}

impl BatchWorkspace {
    /// Loss and exact gradients for one batch with precomputed indicators.
    ///
    /// `grads` is overwritten. Returns the batch breakdown.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        &mut self,
        params: &TowerParams,
        config: &ModelConfig,
        videos: &[VideoRecord],
        batch: &[InteractionPair],
        indicators: &[u8],
        example_weights: &[f64],
        weights: &LossWeights,
        grads: &mut Gradients,
    ) -> Result<LossBreakdown> {
        let b = batch.len();
        if b < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch of {b} pairs has no in-batch negatives"
            )));
        }
        if indicators.len() != b || example_weights.len() != b {
            return Err(Error::InvalidArgument(format!(
                "batch of {b} pairs with {} indicators and {} example weights",
                indicators.len(),
                example_weights.len()
            )));
        }
        let video = |id: usize| {
            videos.get(id).ok_or(Error::IdOutOfRange {
                id,
                n_videos: videos.len(),
            })
        };
        let d_out = params.d_out;
        let act = config.activation;

        for rows in [
            &mut self.x_trig,
            &mut self.x_cand,
            &mut self.u,
            &mut self.c,
            &mut self.g_u,
            &mut self.g_c,
        ] {
            resize_rows(rows, b);
        }
        for (i, p) in batch.iter().enumerate() {
            input_row(params, config, video(p.trigger_id)?, &mut self.x_trig[i])?;
            input_row(params, config, video(p.candidate_id)?, &mut self.x_cand[i])?;
            dense_forward(params, act, &self.x_trig[i], &mut self.u[i]);
            dense_forward(params, act, &self.x_cand[i], &mut self.c[i]);
        }

        self.logits.clear();
        self.logits.resize(b * b, 0.0);
        for i in 0..b {
            for j in 0..b {
                self.logits[i * b + j] = dot(&self.u[i], &self.c[j]);
            }
        }

        for g in self.g_u.iter_mut().chain(self.g_c.iter_mut()) {
            g.clear();
            g.resize(d_out, 0.0);
        }

        let inv_b = 1.0 / b as f64;
        let mut out = LossBreakdown::default();
        for i in 0..b {
            let row = &self.logits[i * b..(i + 1) * b];
            let lse = log_sum_exp(row.iter().copied());
            let l_co = lse - row[i];
            let ind = indicators[i];
            let l_sem = if ind == 1 { l_co } else { 0.0 };
            out.l_co += l_co;
            out.l_sem += l_sem;
            out.n_semantic_positives += ind as usize;
            out.weighted_total += weighted_example_loss(example_weights[i], weights, l_sem, l_co);

            // d L / d s_ij = a_i / B * (p_ij - [i == j])
            let a = example_weights[i] * (weights.w_co + weights.w_sem * f64::from(ind)) * inv_b;
            if a == 0.0 {
                continue;
            }
            let (u_i, g_u_i) = (&self.u[i], &mut self.g_u[i]);
            for (j, (c_j, g_c_j)) in self.c.iter().zip(self.g_c.iter_mut()).enumerate() {
                let mut g = (row[j] - lse).exp();
                if i == j {
                    g -= 1.0;
                }
                g *= a;
                for ((gu, gc), (&cv, &uv)) in g_u_i.iter_mut().zip(g_c_j.iter_mut()).zip(c_j.iter().zip(u_i)) {
                    *gu += g * cv;
                    *gc += g * uv;
                }
            }
        }
        out.l_co *= inv_b;
        out.l_sem *= inv_b;
        out.weighted_total *= inv_b;

        grads.clear();
        let d_id = params.d_id;
        let mut gz = vec![0.0; d_out];
        for (i, pair) in batch.iter().enumerate() {
            for (x, y, g, id) in [
                (&self.x_trig[i], &self.u[i], &self.g_u[i], pair.trigger_id),
                (&self.x_cand[i], &self.c[i], &self.g_c[i], pair.candidate_id),
            ] {
                for o in 0..d_out {
                    gz[o] = g[o] * act.derivative_from_output(y[o]);
                }
                for (gb, z) in grads.fusion_bias.iter_mut().zip(&gz) {
                    *gb += z;
                }
                let id_grad = &mut grads.id_table[id * d_id..(id + 1) * d_id];
                for (k, &xk) in x.iter().enumerate() {
                    let w_row = &params.fusion_weight[k * d_out..(k + 1) * d_out];
                    let gw_row = &mut grads.fusion_weight[k * d_out..(k + 1) * d_out];
                    for o in 0..d_out {
                        gw_row[o] += xk * gz[o];
                    }
                    if k < d_id {
                        id_grad[k] += dot(w_row, &gz);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Precomputes the semantic indicator of every pair.
pub fn semantic_indicators(
    videos: &[VideoRecord],
    pairs: &[InteractionPair],
    config: &SemanticLabelConfig,
) -> Result<Vec<u8>> {
    pairs
        .iter()
        .map(|p| {
            let t = videos.get(p.trigger_id).ok_or(Error::IdOutOfRange {
                id: p.trigger_id,
                n_videos: videos.len(),
            })?;
            let c = videos.get(p.candidate_id).ok_or(Error::IdOutOfRange {
                id: p.candidate_id,
                n_videos: videos.len(),
            })?;
            semantic_indicator(t, c, config)
        })
        .collect()
}

/// Batch loss and exact analytic gradients with in-batch negatives.
///
/// Indicators are computed from `sem_config`; the trainer instead caches them
/// once and calls [`BatchWorkspace::compute`].
#[allow(clippy::too_many_arguments)]
pub fn batch_gradients(
    params: &TowerParams,
    config: &ModelConfig,
    videos: &[VideoRecord],
    batch: &[InteractionPair],
    weights: &LossWeights,
    sem_config: &SemanticLabelConfig,
    example_weights: &[f64],
) -> Result<(Gradients, LossBreakdown)> {
    let indicators = semantic_indicators(videos, batch, sem_config)?;
    let mut grads = Gradients::zeros_like(params);
    let breakdown = BatchWorkspace::default().compute(
        params,
        config,
        videos,
        batch,
        &indicators,
        example_weights,
        weights,
        &mut grads,
    )?;
    Ok((grads, breakdown))
}

/// Forward-only batch loss, used by finite-difference checks.
pub fn batch_loss(
    params: &TowerParams,
    config: &ModelConfig,
    videos: &[VideoRecord],
    batch: &[InteractionPair],
    indicators: &[u8],
    example_weights: &[f64],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let mut grads = Gradients::zeros_like(params);
    BatchWorkspace::default().compute(
        params,
        config,
        videos,
        batch,
        indicators,
        example_weights,
        weights,
        &mut grads,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Activation, ContentDims};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 1.0]).is_err());
    }

    fn text_video(id: usize, text: Vec<f64>) -> VideoRecord {
        VideoRecord {
            id,
            topics: vec![0],
            text_embedding: text,
            visual_embedding: vec![1.0],
        }
    }

    /// A unit vector at cosine `cos` from (1, 0).
    fn at_cos(cos: f64) -> Vec<f64> {
        vec![cos, (1.0 - cos * cos).sqrt()]
    }

    #[test]
    fn indicator_thresholds() {
        let cfg = SemanticLabelConfig { cosine_threshold: 0.8 };
        let base = text_video(0, vec![1.0, 0.0]);
        assert_eq!(semantic_indicator(&base, &text_video(1, at_cos(0.9)), &cfg).unwrap(), 1);
        assert_eq!(semantic_indicator(&base, &text_video(1, at_cos(0.7)), &cfg).unwrap(), 0);
        // Exactly on the boundary: (0.8, 0.6) has cosine 0.8 with (1, 0) in floating point.
        let boundary = text_video(1, vec![0.8, 0.6]);
        assert_eq!(
            cosine_similarity(&base.text_embedding, &boundary.text_embedding).unwrap(),
            0.8
        );
        assert_eq!(semantic_indicator(&base, &boundary, &cfg).unwrap(), 1);
    }

    #[test]
    fn softmax_values() {
        assert_eq!(sampled_softmax_prob(0.0, &[0.0]).unwrap(), 0.5);
        for k in 1..6 {
            let p = sampled_softmax_prob(2.5, &vec![2.5; k]).unwrap();
            assert!((p - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
        let p = sampled_softmax_prob(1.0, &[0.0, 0.0]).unwrap();
        assert!((p - 0.576_116_884_765_829_1).abs() < 1e-12);
        assert!(sampled_softmax_prob(1.0, &[]).is_err());
        // Large logits do not overflow.
        let p = sampled_softmax_prob(1000.0, &[999.0]).unwrap();
        assert!((p - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn pair_loss_values() {
        let (co, sem) = pair_losses(0.5, 1).unwrap();
        assert!((co - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(co, sem);
        let (co, sem) = pair_losses(0.01, 0).unwrap();
        assert!(co > 0.0);
        assert_eq!(sem, 0.0);
        assert!(pair_losses(0.0, 1).is_err());
        assert!(pair_losses(1.0, 1).is_err());
        assert!(pair_losses(0.5, 2).is_err());
    }

    #[test]
    fn weighted_loss_values() {
        let w = LossWeights::co_engagement_only();
        assert_eq!(weighted_example_loss(1.0, &w, 0.3, 0.7), 0.7);
        let w = LossWeights::ratio(500.0);
        assert!((weighted_example_loss(1.0, &w, 0.7, 0.7) - 350.7).abs() < 1e-9);
        let full = weighted_example_loss(0.8, &w, 0.7, 0.7);
        assert_eq!(weighted_example_loss(0.4, &w, 0.7, 0.7), full / 2.0);
    }

    #[test]
    fn loss_weight_validation() {
        assert!(LossWeights { w_co: 0.0, w_sem: 0.0 }.validate().is_err());
        assert!(LossWeights { w_co: -1.0, w_sem: 1.0 }.validate().is_err());
        assert!(LossWeights { w_co: 0.0, w_sem: 1.0 }.validate().is_ok());
        assert!(SemanticLabelConfig { cosine_threshold: 1.5 }.validate().is_err());
    }

    pub(crate) fn random_instance(seed: u64) -> (TowerParams, ModelConfig, Vec<VideoRecord>, Vec<InteractionPair>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let content = ContentDims { text: 3, visual: 2 };
        let config = ModelConfig {
            d_id: 4,
            d_out: 4,
            use_text: true,
            use_visual: true,
            init_scale: 0.8,
            activation: Activation::Tanh,
        };
        let videos: Vec<_> = (0..n)
            .map(|id| VideoRecord {
                id,
                topics: vec![(id % 2) as u32],
                text_embedding: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                visual_embedding: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect();
        let pairs: Vec<_> = (0..5)
            .map(|_| {
                let t = rng.random_range(0..n - 2);
                InteractionPair::new(t, t + 1 + rng.random_range(0..2))
            })
            .collect();
        let params = init_params(&config, n, content, seed).unwrap();
        (params, config, videos, pairs)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (params, config, videos, batch) = random_instance(42);
        let indicators = [1, 0, 1, 1, 0];
        let ew = [1.2, 0.5, 1.0, 0.9, 2.0];
        let w = LossWeights { w_co: 1.0, w_sem: 3.0 };
        let mut grads = Gradients::zeros_like(&params);
        BatchWorkspace::default()
            .compute(&params, &config, &videos, &batch, &indicators, &ew, &w, &mut grads)
            .unwrap();
        let h = 1e-5;
        for (group, analytic) in grads.groups().iter().enumerate() {
            let numeric: Vec<f64> = (0..analytic.len())
                .map(|k| {
                    let mut plus = params.clone();
                    plus.groups_mut()[group][k] += h;
                    let mut minus = params.clone();
                    minus.groups_mut()[group][k] -= h;
                    let lp = batch_loss(&plus, &config, &videos, &batch, &indicators, &ew, &w).unwrap();
                    let lm = batch_loss(&minus, &config, &videos, &batch, &indicators, &ew, &w).unwrap();
                    (lp.weighted_total - lm.weighted_total) / (2.0 * h)
                })
                .collect();
            let diff: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / scale < 1e-4, "group {group}: rel err {}", diff / scale);
        }
    }

    #[test]
    fn untouched_rows_have_zero_gradient() {
        let (params, config, videos, batch) = random_instance(3);
        let (grads, _) = batch_gradients(
            &params,
            &config,
            &videos,
            &batch,
            &LossWeights::ratio(10.0),
            &SemanticLabelConfig::default(),
            &[1.0; 5],
        )
        .unwrap();
        for v in 0..videos.len() {
            let touched = batch.iter().any(|p| p.trigger_id == v || p.candidate_id == v);
            let row = &grads.id_table[v * 4..(v + 1) * 4];
            if touched {
                assert!(row.iter().any(|&g| g != 0.0), "row {v}");
            } else {
                assert!(row.iter().all(|&g| g == 0.0), "row {v}");
            }
        }
    }

    #[test]
    fn degenerate_weights_give_zero_loss() {
        let (params, config, videos, batch) = random_instance(5);
        let mut grads = Gradients::zeros_like(&params);
        let out = BatchWorkspace::default()
            .compute(
                &params,
                &config,
                &videos,
                &batch,
                &[0; 5],
                &[1.0; 5],
                &LossWeights { w_co: 0.0, w_sem: 1.0 },
                &mut grads,
            )
            .unwrap();
        assert_eq!(out.weighted_total, 0.0);
        for g in grads.groups() {
            assert!(g.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let (params, config, videos, batch) = random_instance(5);
        let err = batch_gradients(
            &params,
            &config,
            &videos,
            &batch[..1],
            &LossWeights::default(),
            &SemanticLabelConfig::default(),
            &[1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn weight_scaling_is_linear() {
        let (params, config, videos, batch) = random_instance(8);
        let ind = [1, 1, 0, 0, 1];
        let ew = [0.3, 1.0, 0.7, 1.1, 0.2];
        let base = LossWeights { w_co: 0.7, w_sem: 13.0 };
        let run = |w: LossWeights| {
            let mut g = Gradients::zeros_like(&params);
            let out = BatchWorkspace::default()
                .compute(&params, &config, &videos, &batch, &ind, &ew, &w, &mut g)
                .unwrap();
            (g, out)
        };
        let (g0, l0) = run(base);
        for c in [2.0, 0.5, 4.0] {
            let (g, l) = run(LossWeights {
                w_co: base.w_co * c,
                w_sem: base.w_sem * c,
            });
            assert_eq!(l.weighted_total, l0.weighted_total * c);
            for (a, b) in g.groups().iter().zip(g0.groups()) {
                assert!(a.iter().zip(b).all(|(x, y)| *x == y * c));
            }
        }
        let (g, l) = run(LossWeights {
            w_co: base.w_co * 3.0,
            w_sem: base.w_sem * 3.0,
        });
        assert!((l.weighted_total - 3.0 * l0.weighted_total).abs() <= 1e-12 * l.weighted_total);
        for (a, b) in g.groups().iter().zip(g0.groups()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - 3.0 * y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_normalizes_and_is_shift_invariant(
            logits in proptest::collection::vec(-30.0f64..30.0, 2..12),
            shift in -50.0f64..50.0,
        ) {
            let total: f64 = (0..logits.len())
                .map(|i| {
                    let negs: Vec<f64> = logits.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                    sampled_softmax_prob(logits[i], &negs).unwrap()
                })
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let negs = &logits[1..];
            let shifted: Vec<f64> = negs.iter().map(|v| v + shift).collect();
            let a = sampled_softmax_prob(logits[0], negs).unwrap();
            let b = sampled_softmax_prob(logits[0] + shift, &shifted).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn semantic_loss_never_exceeds_co_loss(prob in 1e-12f64..0.999_999, ind in 0u8..2) {
            let (co, sem) = pair_losses(prob, ind).unwrap();
            prop_assert!(sem <= co);
        }

        #[test]
        fn indicator_is_symmetric(
            a in proptest::collection::vec(-1.0f64..1.0, 4),
            b in proptest::collection::vec(-1.0f64..1.0, 4),
            theta in -1.0f64..1.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-6) && b.iter().any(|x| x.abs() > 1e-6));
            let cfg = SemanticLabelConfig { cosine_threshold: theta };
            let (va, vb) = (text_video(0, a), text_video(1, b));
            prop_assert_eq!(
                semantic_indicator(&va, &vb, &cfg).unwrap(),
                semantic_indicator(&vb, &va, &cfg).unwrap()
            );
        }
    }
}
