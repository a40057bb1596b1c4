use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};

/// Positions drawn by the fixed-random baseline.
///
/// A partial Fisher–Yates shuffle over `0..n` driven by ChaCha8 seeded with
/// `seed`: step `i` swaps position `i` with `i + next_u64() % (n − i)`.
/// The first `k` positions after `k` steps are the selection, so a larger
/// `k` extends a smaller one.
pub fn fixed_random_positions(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    if k > n {
        return Err(Error::KExceedsDataset { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        positions.swap(i, j);
    }
    positions.truncate(k);
    Ok(positions)
}

/// The same `k` examples for every input, determined by `(dataset, k, seed)`.
pub fn fixed_random_select(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<&Example>> {
    let positions = fixed_random_positions(dataset.len(), k, seed)?;
    Ok(positions.into_iter().map(|p| &dataset.examples()[p]).collect())
}
