//! Cumulative train/validation pools, one per chunk boundary.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EnvError;
use crate::types::ChunkPlan;

/// First random stream used for pool shuffles; pool `t` uses `SPLIT_STREAM + t`.
const SPLIT_STREAM: u64 = 1 << 20;

/// Disjoint row-index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// For every chunk `t`, splits the rows of chunks `0..=t` into train and
/// validation sets. The validation share is `validation_fraction` of the pool,
/// rounded, and kept between 1 and `pool - 1` rows.
pub fn build_cumulative_splits(
    n_rows: usize,
    plan: &ChunkPlan,
    validation_fraction: f64,
    seed: u64,
) -> Result<Vec<PoolSplit>, EnvError> {
    let needed = plan.num_chunks * plan.batch_size;
    if n_rows < needed || plan.num_chunks == 0 {
        return Err(EnvError::InsufficientData {
            rows: n_rows,
            needed,
        });
    }
    let ranges = plan.chunk_ranges(n_rows);
    let mut out = Vec::with_capacity(ranges.len());
    for (t, range) in ranges.iter().enumerate() {
        let mut pool: Vec<usize> = (0..range.end).collect();
        if pool.len() < 2 {
            return Err(EnvError::InsufficientData {
                rows: n_rows,
                needed: 2 * plan.num_chunks,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SPLIT_STREAM + t as u64);
        pool.shuffle(&mut rng);
        let n_val =
            ((pool.len() as f64 * validation_fraction).round() as usize).clamp(1, pool.len() - 1);
        let mut val = pool.split_off(pool.len() - n_val);
        pool.sort_unstable();
        val.sort_unstable();
        out.push(PoolSplit { train: pool, val });
    }
    Ok(out)
}
