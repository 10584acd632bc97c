//! The shared-weight tower: `act(W^T [id_row | text | visual] + b)`.
//!
//! Content embeddings are frozen inputs. Only the ID table, the fusion weight
//! and the fusion bias are trained. The same parameters embed triggers and
//! candidates.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::VideoRecord;
use crate::error::{Error, Result};
use crate::io::{put_f64s, put_u32, put_u64, read_bytes, write_bytes_atomic, Reader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_id: usize,
    pub d_out: usize,
    pub use_text: bool,
    pub use_visual: bool,
    pub init_scale: f64,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_id: 32,
            d_out: 32,
            use_text: true,
            use_visual: true,
            init_scale: 0.1,
            activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_id < 1 || self.d_out < 1 {
            return Err(Error::Config(format!(
                "model: d_id = {}, d_out = {} (both must be >= 1)",
                self.d_id, self.d_out
            )));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "model: init_scale = {} (need > 0)",
                self.init_scale
            )));
        }
        Ok(())
    }

    /// Width of the concatenated input row for a corpus with the given content dims.
    pub fn input_dim(&self, content: ContentDims) -> usize {
        self.d_id + if self.use_text { content.text } else { 0 } + if self.use_visual { content.visual } else { 0 }
    }
}

/// Dimensions of the frozen content embeddings of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentDims {
    pub text: usize,
    pub visual: usize,
}

impl ContentDims {
    pub fn of(dataset: &crate::corpus::Dataset) -> Self {
        ContentDims {
            text: dataset.text_dim(),
            visual: dataset.visual_dim(),
        }
    }
}

/// All trainable parameters, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerParams {
    pub n_videos: usize,
    pub d_id: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub content: ContentDims,
    /// `n_videos x d_id`
    pub id_table: Vec<f64>,
    /// `d_in x d_out`
    pub fusion_weight: Vec<f64>,
    /// `d_out`
    pub fusion_bias: Vec<f64>,
}

impl TowerParams {
    pub fn zeros(config: &ModelConfig, n_videos: usize, content: ContentDims) -> Self {
        let d_in = config.input_dim(content);
        TowerParams {
            n_videos,
            d_id: config.d_id,
            d_in,
            d_out: config.d_out,
            content,
            id_table: vec![0.0; n_videos * config.d_id],
            fusion_weight: vec![0.0; d_in * config.d_out],
            fusion_bias: vec![0.0; config.d_out],
        }
    }

    pub fn id_row(&self, id: usize) -> &[f64] {
        &self.id_table[id * self.d_id..(id + 1) * self.d_id]
    }

    pub fn groups(&self) -> [&[f64]; 3] {
        [&self.id_table, &self.fusion_weight, &self.fusion_bias]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.id_table, &mut self.fusion_weight, &mut self.fusion_bias]
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|x| x.is_finite()))
    }

    /// Checks that these parameters fit `config` and a catalog of `n_videos`
    /// videos with content dims `content`.
    pub fn check_compatible(&self, config: &ModelConfig, n_videos: usize, content: ContentDims) -> Result<()> {
        let d_in = config.input_dim(content);
        if self.n_videos != n_videos || self.d_id != config.d_id || self.d_out != config.d_out || self.d_in != d_in {
            return Err(Error::InvalidArgument(format!(
                "parameters are (N={}, d_id={}, d_in={}, d_out={}) but catalog/config need \
                 (N={n_videos}, d_id={}, d_in={d_in}, d_out={})",
                self.n_videos, self.d_id, self.d_in, self.d_out, config.d_id, config.d_out
            )));
        }
        Ok(())
    }
}

/// Uniform draws in `[-init_scale, init_scale]`, filling the ID table, then
/// the fusion weight, then the bias.
pub fn init_params(config: &ModelConfig, n_videos: usize, content: ContentDims, seed: u64) -> Result<TowerParams> {
    config.validate()?;
    if n_videos < 1 {
        return Err(Error::InvalidArgument("n_videos must be >= 1".into()));
    }
    let mut params = TowerParams::zeros(config, n_videos, content);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = config.init_scale;
    for group in params.groups_mut() {
        for x in group.iter_mut() {
            *x = rng.random_range(-s..=s);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fills `x` with the concatenated input row for `video`.
pub(crate) fn input_row(
    params: &TowerParams,
    config: &ModelConfig,
    video: &VideoRecord,
    x: &mut Vec<f64>,
) -> Result<()> {
    if video.id >= params.n_videos {
        return Err(Error::IdOutOfRange {
            id: video.id,
            n_videos: params.n_videos,
        });
    }
    x.clear();
    x.extend_from_slice(params.id_row(video.id));
    if config.use_text {
        x.extend_from_slice(&video.text_embedding);
    }
    if config.use_visual {
        x.extend_from_slice(&video.visual_embedding);
    }
    if x.len() != params.d_in {
        return Err(Error::InvalidArgument(format!(
            "video {} yields an input row of width {}, parameters expect {}",
            video.id,
            x.len(),
            params.d_in
        )));
    }
    Ok(())
}

/// `out = act(x W + b)`.
pub(crate) fn dense_forward(params: &TowerParams, act: Activation, x: &[f64], out: &mut Vec<f64>) {
    let d_out = params.d_out;
    out.clear();
    out.extend_from_slice(&params.fusion_bias);
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let row = &params.fusion_weight[k * d_out..(k + 1) * d_out];
        for (o, w) in out.iter_mut().zip(row) {
            *o += xk * w;
        }
    }
    for o in out.iter_mut() {
        *o = act.apply(*o);
    }
}

pub fn embed(params: &TowerParams, config: &ModelConfig, video: &VideoRecord) -> Result<EmbeddingVector> {
    let mut x = Vec::with_capacity(params.d_in);
    input_row(params, config, video, &mut x)?;
    let mut out = Vec::with_capacity(params.d_out);
    dense_forward(params, config.activation, &x, &mut out);
    Ok(EmbeddingVector(out))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"TTRCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

const FLAG_TEXT: u32 = 1;
const FLAG_VISUAL: u32 = 1 << 1;
const FLAG_TANH: u32 = 1 << 2;

/// Binary checkpoint layout, all integers and reals little-endian:
///
/// ```text
/// magic     8 bytes  "TTRCKPT\0"
/// version   u32
/// n_videos, d_id, d_text, d_visual, d_in, d_out   u64 each
/// flags     u32      bit 0 text, bit 1 visual, bit 2 tanh
/// init_scale f64
/// id_table (n_videos*d_id), fusion_weight (d_in*d_out), fusion_bias (d_out)   f64 each
/// ```
pub fn checkpoint_to_bytes(params: &TowerParams, config: &ModelConfig) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(96 + 8 * (params.id_table.len() + params.fusion_weight.len() + params.fusion_bias.len()));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    for d in [
        params.n_videos,
        params.d_id,
        params.content.text,
        params.content.visual,
        params.d_in,
        params.d_out,
    ] {
        put_u64(&mut out, d as u64);
    }
    let mut flags = 0;
    if config.use_text {
        flags |= FLAG_TEXT;
    }
    if config.use_visual {
        flags |= FLAG_VISUAL;
    }
    if config.activation == Activation::Tanh {
        flags |= FLAG_TANH;
    }
    put_u32(&mut out, flags);
    put_f64s(&mut out, &[config.init_scale]);
    for g in params.groups() {
        put_f64s(&mut out, g);
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(TowerParams, ModelConfig)> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("dimension overflow".into()))?;
    }
    let [n_videos, d_id, d_text, d_visual, d_in, d_out] = dims;
    let flags = r.u32()?;
    if flags & !(FLAG_TEXT | FLAG_VISUAL | FLAG_TANH) != 0 {
        return Err(Error::Checkpoint(format!("unknown flag bits {flags:#x}")));
    }
    let init_scale = r.f64()?;
    let config = ModelConfig {
        d_id,
        d_out,
        use_text: flags & FLAG_TEXT != 0,
        use_visual: flags & FLAG_VISUAL != 0,
        init_scale,
        activation: if flags & FLAG_TANH != 0 {
            Activation::Tanh
        } else {
            Activation::Identity
        },
    };
    let content = ContentDims {
        text: d_text,
        visual: d_visual,
    };
    if config.input_dim(content) != d_in || d_id == 0 || d_out == 0 || n_videos == 0 {
        return Err(Error::Checkpoint(format!(
            "inconsistent header: n_videos={n_videos} d_id={d_id} d_text={d_text} \
             d_visual={d_visual} d_in={d_in} d_out={d_out} flags={flags:#x}"
        )));
    }
    let payload = n_videos
        .checked_mul(d_id)
        .and_then(|a| d_in.checked_mul(d_out).and_then(|b| a.checked_add(b)))
        .and_then(|a| a.checked_add(d_out))
        .and_then(|a| a.checked_mul(8))
        .ok_or_else(|| Error::Checkpoint("payload size overflows".into()))?;
    if r.remaining() < payload {
        return Err(Error::Truncated {
            expected: bytes.len() - r.remaining() + payload,
            found: bytes.len(),
        });
    }
    if r.remaining() > payload {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after payload",
            r.remaining() - payload
        )));
    }
    let params = TowerParams {
        n_videos,
        d_id,
        d_in,
        d_out,
        content,
        id_table: r.f64_vec(n_videos * d_id)?,
        fusion_weight: r.f64_vec(d_in * d_out)?,
        fusion_bias: r.f64_vec(d_out)?,
    };
    Ok((params, config))
}

pub fn checkpoint_save(path: &Path, params: &TowerParams, config: &ModelConfig) -> Result<()> {
    write_bytes_atomic(path, &checkpoint_to_bytes(params, config))
}

pub fn checkpoint_load(path: &Path) -> Result<(TowerParams, ModelConfig)> {
    checkpoint_from_bytes(&read_bytes(path)?)
}

/// Short content hash of a checkpoint, used to tag indexes built from it.
pub fn fingerprint(params: &TowerParams, config: &ModelConfig) -> String {
    let digest = Sha256::digest(checkpoint_to_bytes(params, config));
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
