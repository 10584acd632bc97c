//! Multi-objective two-tower retrieval for related-video recommendation.
//!
//! A single shared-weight tower maps each video (trainable ID embedding
//! concatenated with frozen text and visual content embeddings) through one
//! dense layer to a latent vector. Training mixes an in-batch sampled-softmax
//! co-engagement loss with a semantic-aware copy of the same loss that only
//! fires on pairs whose text embeddings are close, and can reweight each
//! example by the inverse log frequency of its trigger video.
//!
//! Module map:
//!
//! - [`corpus`]: videos, co-engagement pairs, file formats, splits, trigger frequencies
//! - [`syngen`]: synthetic corpora with topic structure, Zipf popularity and label noise
//! - [`model`]: tower parameters, forward pass, checkpoints
//! - [`objective`]: loss functions and analytic batch gradients
//! - [`trainer`]: mini-batch Adam training with optional popularity correction
//! - [`retrieval`]: exact inner-product top-k over the catalog
//! - [`eval`]: recall@k, topic relevance, popularity metrics
//! - [`ablation`]: the configuration sweep harness and its report files
//! - [`io`]: atomic file writes shared by every output

pub mod ablation;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod objective;
pub mod retrieval;
pub mod syngen;
pub mod trainer;

pub use ablation::{run_ablation, AblationEntry, AblationReport, AblationRow, AblationSpec, EntryKind};
pub use corpus::{
    build_frequency_table, load_dataset, save_dataset, split_dataset, Dataset, FrequencyTable, InteractionPair,
    VideoRecord,
};
pub use error::{Error, Result};
pub use eval::{EvalConfig, MetricsReport};
pub use model::{embed, init_params, Activation, ContentDims, EmbeddingVector, ModelConfig, TowerParams};
pub use objective::{LossBreakdown, LossWeights, SemanticLabelConfig};
pub use retrieval::{build_index, top_k, EmbeddingIndex, Scored};
pub use syngen::{generate_corpus, SynthConfig};
pub use trainer::{opc_weight, train, TrainConfig, TrainReport};
