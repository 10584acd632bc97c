//! Exact inner-product retrieval over the whole catalog.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::VideoRecord;
use crate::error::{Error, Result};
use crate::io::{put_f64s, put_u32, put_u64, read_bytes, write_bytes_atomic, Reader};
use crate::model::{dense_forward, dot, fingerprint, input_row, ModelConfig, TowerParams};

/// One embedding row per catalog video.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    n: usize,
    dim: usize,
    rows: Vec<f64>,
    fingerprint: String,
}

impl EmbeddingIndex {
    pub fn from_rows(rows: Vec<Vec<f64>>, fingerprint: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("index rows have unequal lengths".into()));
        }
        Ok(EmbeddingIndex {
            n: rows.len(),
            dim,
            rows: rows.into_iter().flatten().collect(),
            fingerprint: fingerprint.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.rows[id * self.dim..(id + 1) * self.dim]
    }

    pub fn score(&self, a: usize, b: usize) -> f64 {
        dot(self.row(a), self.row(b))
    }
}

pub fn build_index(params: &TowerParams, config: &ModelConfig, videos: &[VideoRecord]) -> Result<EmbeddingIndex> {
    if params.n_videos != videos.len() {
        return Err(Error::InvalidArgument(format!(
            "parameters cover {} videos, catalog has {}",
            params.n_videos,
            videos.len()
        )));
    }
    let rows = videos
        .par_iter()
        .map(|v| {
            let mut x = Vec::with_capacity(params.d_in);
            input_row(params, config, v, &mut x)?;
            let mut out = Vec::with_capacity(params.d_out);
            dense_forward(params, config.activation, &x, &mut out);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingIndex::from_rows(rows, fingerprint(params, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: usize,
    pub score: f64,
}

/// Ranking order: higher score first, then lower id. Adding `0.0` folds
/// `-0.0` into `+0.0` so equal scores always tie.
fn rank_cmp(a: &Scored, b: &Scored) -> Ordering {
    (b.score + 0.0).total_cmp(&(a.score + 0.0)).then(a.id.cmp(&b.id))
}

/// Heap entry whose maximum is the worst-ranked candidate.
struct Worst(Scored);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        rank_cmp(&self.0, &other.0) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(&self.0, &other.0)
    }
}

/// The `k` best candidates for `trigger_id`, excluding the trigger itself.
pub fn top_k(index: &EmbeddingIndex, trigger_id: usize, k: usize) -> Result<Vec<Scored>> {
    if trigger_id >= index.n {
        return Err(Error::IdOutOfRange {
            id: trigger_id,
            n_videos: index.n,
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let query = index.row(trigger_id);
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for id in 0..index.n {
        if id == trigger_id {
            continue;
        }
        let cand = Scored {
            id,
            score: dot(query, index.row(id)),
        };
        if heap.len() < k {
            heap.push(Worst(cand));
        } else if let Some(worst) = heap.peek() {
            if rank_cmp(&cand, &worst.0) == Ordering::Less {
                heap.pop();
                heap.push(Worst(cand));
            }
        }
    }
    let mut out: Vec<Scored> = heap.into_iter().map(|w| w.0).collect();
    out.sort_by(rank_cmp);
    Ok(out)
}

const INDEX_MAGIC: &[u8; 8] = b"TTRINDX\0";
const INDEX_VERSION: u32 = 1;

/// Index dump: magic, version (u32), N (u64), d_out (u64), fingerprint length
/// (u32) and UTF-8 bytes, then the row-major f64 payload. Little-endian.
pub fn index_to_bytes(index: &EmbeddingIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + index.fingerprint.len() + 8 * index.rows.len());
    out.extend_from_slice(INDEX_MAGIC);
    put_u32(&mut out, INDEX_VERSION);
    put_u64(&mut out, index.n as u64);
    put_u64(&mut out, index.dim as u64);
    put_u32(&mut out, index.fingerprint.len() as u32);
    out.extend_from_slice(index.fingerprint.as_bytes());
    put_f64s(&mut out, &index.rows);
    out
}

pub fn index_from_bytes(bytes: &[u8]) -> Result<EmbeddingIndex> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != INDEX_MAGIC {
        return Err(Error::Checkpoint("bad index magic".into()));
    }
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(Error::Version {
            found: version,
            expected: INDEX_VERSION,
        });
    }
    let n = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let fp_len = r.u32()? as usize;
    let fingerprint = String::from_utf8(r.take(fp_len)?.to_vec())
        .map_err(|_| Error::Checkpoint("fingerprint is not UTF-8".into()))?;
    let count = n
        .checked_mul(dim)
        .ok_or_else(|| Error::Checkpoint("index size overflows".into()))?;
    let rows = r.f64_vec(count)?;
    if r.remaining() != 0 {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    Ok(EmbeddingIndex {
        n,
        dim,
        rows,
        fingerprint,
    })
}

pub fn save_index(path: &Path, index: &EmbeddingIndex) -> Result<()> {
    write_bytes_atomic(path, &index_to_bytes(index))
}

pub fn load_index(path: &Path) -> Result<EmbeddingIndex> {
    index_from_bytes(&read_bytes(path)?)
}
