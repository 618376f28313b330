//! Chunked logistic regression.
//!
//! Logistic models do not decompose into additive statistics, so ranges are
//! instead split into fixed-size chunks, each trained independently with
//! single-pass SGD, and the chunk weight vectors are averaged uniformly
//! into the final model (the mixture weight method). Trained chunks are
//! materialized and reused by later queries; only whole chunks can be
//! reused, which makes this an insertion-only model family.
//!
//! Chunks live on a global alignment grid anchored at id 0, so chunks
//! materialized by different queries coincide, and the per-chunk shuffle
//! seed is a hash of (global seed, chunk start). Together these make a
//! query's result identical whether its chunks were reused from the
//! catalog or trained fresh.

use crate::catalog::{Catalog, ModelKind};
use crate::datastore::{DataStore, Record, RowBlock};
use crate::error::{Error, Result};
use crate::range::IdRange;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// SGD hyperparameters. One pass over the data is the default; the epoch
/// count stays configurable.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SgdConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub epochs: u32,
    pub shuffle_seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            alpha: 0.05,
            lambda: 1e-3,
            epochs: 1,
            shuffle_seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> SgdConfig {
        SgdConfig {
            shuffle_seed: seed,
            ..*self
        }
    }

    /// Replaces the shuffle seed with the per-chunk derivation for a chunk
    /// starting at `chunk_start`, treating the current seed as the global
    /// one.
    pub fn with_chunk_seed(&self, chunk_start: u64) -> SgdConfig {
        self.with_seed(chunk_seed(self.shuffle_seed, chunk_start))
    }
}

/// Weight vector trained on one chunk of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkModel {
    pub descriptor: IdRange,
    pub weights: Vec<f64>,
    pub chunk_size: u64,
}

impl ChunkModel {
    /// Serialized form: descriptor (two u64) + chunk size (u64) + d (u32) +
    /// f64 weights, little-endian.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * self.weights.len());
        out.extend_from_slice(&self.descriptor.lo.to_le_bytes());
        out.extend_from_slice(&self.descriptor.hi.to_le_bytes());
        out.extend_from_slice(&self.chunk_size.to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::BadCatalogIndex("truncated chunk payload".into());
        if bytes.len() < 28 {
            return Err(bad());
        }
        let lo = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        let hi = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let chunk_size = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let d = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
        let rest = &bytes[28..];
        if rest.len() != 8 * d {
            return Err(bad());
        }
        let weights = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ChunkModel {
            descriptor: IdRange::new(lo, hi)?,
            weights,
            chunk_size,
        })
    }
}

/// Uniform average of the contributing chunk weight vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub contributing: Vec<IdRange>,
    pub chunk_size: u64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// ln(1 + e^z) without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn check_binary_label(y: f64) -> Result<()> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::NonBinaryLabel(y));
    }
    Ok(())
}

/// Regularized cross-entropy loss over a batch and its exact gradient:
/// `F(w) = (1/n) sum_i [ln(1+e^{z_i}) - y_i z_i] + lambda ||w||^2` with
/// `z_i = w.x_i`. An empty batch contributes only the regularizer.
pub fn loss_and_gradient(w: &[f64], batch: &[Record], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let d = w.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    for record in batch {
        if record.features.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: record.features.len(),
            });
        }
        check_binary_label(record.target)?;
        let z = dot(w, &record.features);
        loss += log1p_exp(z) - record.target * z;
        let g = sigmoid(z) - record.target;
        for (gj, xj) in grad.iter_mut().zip(&record.features) {
            *gj += g * xj;
        }
    }
    if !batch.is_empty() {
        let inv_n = 1.0 / batch.len() as f64;
        loss *= inv_n;
        for g in grad.iter_mut() {
            *g *= inv_n;
        }
    }
    let w_sq: f64 = w.iter().map(|v| v * v).sum();
    loss += lambda * w_sq;
    for (g, wj) in grad.iter_mut().zip(w) {
        *g += 2.0 * lambda * wj;
    }
    Ok((loss, grad))
}

fn train_rows(block: &RowBlock, cfg: &SgdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = block.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot train a chunk on zero rows".into(),
        ));
    }
    let d = block.d();
    for row in block.iter() {
        check_binary_label(row.target)?;
    }
    let mut w = vec![0.0; d];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.shuffle_seed);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = block.row(i);
            let z = dot(&w, row.features);
            let g = sigmoid(z) - row.target;
            for (wj, xj) in w.iter_mut().zip(row.features) {
                *wj -= cfg.alpha * (g * xj + 2.0 * cfg.lambda * *wj);
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { alpha: cfg.alpha });
        }
    }
    Ok(w)
}

/// Trains one chunk: weights start at zero, then `epochs` passes of
/// per-sample SGD in seeded-shuffled order (the config seed is used as-is).
pub fn train_chunk(points: &[Record], cfg: &SgdConfig) -> Result<ChunkModel> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot train a chunk on zero rows".into(),
        ));
    }
    let block = RowBlock::from_records(points);
    let descriptor = IdRange::new(points[0].id, points[points.len() - 1].id)?;
    train_chunk_from_block(&block, cfg, descriptor)
}

/// `train_chunk` over an already-fetched block.
pub fn train_chunk_from_block(
    block: &RowBlock,
    cfg: &SgdConfig,
    descriptor: IdRange,
) -> Result<ChunkModel> {
    let weights = train_rows(block, cfg)?;
    Ok(ChunkModel {
        chunk_size: descriptor.len(),
        descriptor,
        weights,
    })
}

/// Fraction of rows classified correctly by thresholding at 1/2.
pub fn accuracy(w: &[f64], block: &RowBlock) -> f64 {
    if block.is_empty() {
        return 0.0;
    }
    let correct = block
        .iter()
        .filter(|row| {
            let predicted = if dot(w, row.features) >= 0.0 { 1.0 } else { 0.0 };
            predicted == row.target
        })
        .count();
    correct as f64 / block.len() as f64
}

/// Chunk layout of a range: consecutive closed ranges of exactly `l` ids
/// starting at the range start, plus a flagged remainder shorter than `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkLayout {
    pub chunks: Vec<IdRange>,
    pub remainder: Option<IdRange>,
}

pub fn make_chunks(range: IdRange, l: u64) -> Result<ChunkLayout> {
    if l == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    let len = range.len();
    if 2 * l > len {
        return Err(Error::ChunkTooLarge { l, len });
    }
    let full = len / l;
    let chunks = (0..full)
        .map(|i| IdRange {
            lo: range.lo + i * l,
            hi: range.lo + (i + 1) * l - 1,
        })
        .collect();
    let rem_start = range.lo + full * l;
    let remainder = if rem_start <= range.hi {
        Some(IdRange {
            lo: rem_start,
            hi: range.hi,
        })
    } else {
        None
    };
    Ok(ChunkLayout { chunks, remainder })
}

/// One piece of a query under the global alignment grid. Aligned pieces are
/// full grid cells (start divisible by `l`, length exactly `l`) and are the
/// only ones eligible for materialization and reuse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPiece {
    pub range: IdRange,
    pub aligned: bool,
}

/// Splits a query into grid-aligned cells plus head/tail remainder pieces,
/// in ascending id order.
pub fn grid_pieces(query: IdRange, l: u64) -> Vec<GridPiece> {
    assert!(l > 0, "chunk size must be positive");
    let grid_start = query.lo.div_ceil(l) * l;
    let grid_end = (query.hi + 1) / l * l;
    if grid_start >= grid_end {
        // No full cell fits; the whole query trains as one piece.
        return vec![GridPiece {
            range: query,
            aligned: query.lo % l == 0 && query.len() == l,
        }];
    }
    let mut pieces = Vec::new();
    if query.lo < grid_start {
        pieces.push(GridPiece {
            range: IdRange {
                lo: query.lo,
                hi: grid_start - 1,
            },
            aligned: false,
        });
    }
    let mut start = grid_start;
    while start < grid_end {
        pieces.push(GridPiece {
            range: IdRange {
                lo: start,
                hi: start + l - 1,
            },
            aligned: true,
        });
        start += l;
    }
    if grid_end <= query.hi {
        pieces.push(GridPiece {
            range: IdRange {
                lo: grid_end,
                hi: query.hi,
            },
            aligned: false,
        });
    }
    pieces
}

/// Derives the per-chunk shuffle seed from the global seed and the chunk's
/// absolute start id (splitmix64 finalizer), so a chunk trains identically
/// no matter which query triggered it.
pub fn chunk_seed(global_seed: u64, chunk_start: u64) -> u64 {
    let mut z = global_seed ^ chunk_start.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Execution counters from one mixture build.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MixtureBuildStats {
    pub chunks_reused: usize,
    pub chunks_trained: usize,
    pub io_ms: f64,
    pub train_ms: f64,
    pub bytes_fetched: u64,
}

/// Builds the model for `query`: reuses every materialized chunk fully
/// contained in the query, trains the remaining pieces (materializing the
/// grid-aligned ones), and averages all chunk weights uniformly.
///
/// With `catalog = None` this is the direct no-reuse path; it produces
/// bit-identical weights because chunk boundaries and seeds depend only on
/// the query and the global seed.
pub fn incremental_logreg(
    store: &DataStore,
    catalog: Option<&Catalog>,
    query: IdRange,
    cfg: &SgdConfig,
    chunk_size: u64,
    materialize_new: bool,
) -> Result<(MixtureModel, MixtureBuildStats)> {
    cfg.validate()?;
    if chunk_size == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    let d = store.meta().d as usize;
    let mut sum = vec![0.0; d];
    let mut contributing = Vec::new();
    let mut stats = MixtureBuildStats::default();
    for piece in grid_pieces(query, chunk_size) {
        let reused = if piece.aligned {
            catalog.and_then(|c| c.find_exact(ModelKind::LogregChunk, piece.range))
        } else {
            None
        };
        let weights = match reused {
            Some(entry) => {
                let io_start = Instant::now();
                let (_, payload) = catalog.unwrap().load(entry.descriptor.id)?;
                stats.io_ms += io_start.elapsed().as_secs_f64() * 1e3;
                stats.bytes_fetched += payload.len() as u64;
                let chunk = ChunkModel::from_payload(&payload)?;
                if chunk.weights.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: chunk.weights.len(),
                    });
                }
                stats.chunks_reused += 1;
                chunk.weights
            }
            None => {
                let io_start = Instant::now();
                let block = store.fetch_id_range(piece.range)?;
                stats.io_ms += io_start.elapsed().as_secs_f64() * 1e3;
                stats.bytes_fetched += block.byte_len();
                let train_start = Instant::now();
                let weights = train_rows(&block, &cfg.with_chunk_seed(piece.range.lo))?;
                stats.train_ms += train_start.elapsed().as_secs_f64() * 1e3;
                stats.chunks_trained += 1;
                if piece.aligned && materialize_new {
                    if let Some(c) = catalog {
                        let chunk = ChunkModel {
                            descriptor: piece.range,
                            weights: weights.clone(),
                            chunk_size,
                        };
                        c.materialize(ModelKind::LogregChunk, piece.range, &chunk.to_payload())?;
                    }
                }
                weights
            }
        };
        for (s, w) in sum.iter_mut().zip(&weights) {
            *s += w;
        }
        contributing.push(piece.range);
    }
    let count = contributing.len() as f64;
    for s in sum.iter_mut() {
        *s /= count;
    }
    Ok((
        MixtureModel {
            weights: sum,
            contributing,
            chunk_size,
        },
        stats,
    ))
}

/// Single SGD model over the whole query range: the reference the mixture
/// is compared against, and the baseline build for logistic queries.
pub fn train_direct(store: &DataStore, query: IdRange, cfg: &SgdConfig) -> Result<ChunkModel> {
    let block = store.fetch_id_range(query)?;
    train_chunk_from_block(&block, &cfg.with_chunk_seed(query.lo), query)
}

/// Inputs to the mixture-vs-SGD distance bound.
#[derive(Clone, Copy, Debug)]
pub struct BoundInputs {
    /// Bound on the feature-vector norm over the query range.
    pub feature_norm_bound: f64,
    pub lambda: f64,
    pub chunk_size: u64,
    pub query_size: u64,
    pub chunk_count: u64,
    pub delta: f64,
}

impl BoundInputs {
    pub fn new(
        feature_norm_bound: f64,
        lambda: f64,
        chunk_size: u64,
        query_size: u64,
        delta: f64,
    ) -> Result<Self> {
        let inp = BoundInputs {
            feature_norm_bound,
            lambda,
            chunk_size,
            query_size,
            chunk_count: query_size / chunk_size,
            delta,
        };
        inp.validate()?;
        Ok(inp)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::DeltaOutOfRange(self.delta));
        }
        if !(self.feature_norm_bound > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(
                "bound needs positive feature norm and lambda".into(),
            ));
        }
        if self.chunk_size == 0 || self.query_size == 0 || self.chunk_count == 0 {
            return Err(Error::InvalidArgument(
                "bound needs positive chunk size, query size and chunk count".into(),
            ));
        }
        Ok(())
    }
}

/// With probability at least `1 - delta`, the distance between the mixture
/// weights and direct-SGD weights satisfies
/// `||w_mu - w_sgd|| <= R sqrt(2)/lambda (1/sqrt(l) + 1/sqrt(q))
///  + 2 sqrt(2) R / (lambda sqrt(p l)) * sqrt(ln(1/delta))`.
pub fn theorem_bound(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let r = inp.feature_norm_bound;
    let sqrt2 = std::f64::consts::SQRT_2;
    let l = inp.chunk_size as f64;
    let q = inp.query_size as f64;
    let pl = (inp.chunk_count * inp.chunk_size) as f64;
    let first = r * sqrt2 / inp.lambda * (1.0 / l.sqrt() + 1.0 / q.sqrt());
    let second = 2.0 * sqrt2 * r / (inp.lambda * pl.sqrt()) * (1.0 / inp.delta).ln().sqrt();
    Ok(first + second)
}
