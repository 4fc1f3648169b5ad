//! Reproducible randomness.
//!
//! All stochastic routines draw from a [`ChaCha8Rng`]. Independent trials get
//! independent cipher streams of the same master key via [`trial_rng`], so a
//! batch of trials produces identical results no matter how the trials are
//! ordered or spread across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for one trial: stream `trial` of the cipher keyed by `master_seed`.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Uniform `k`-subset of `{0, .., n-1}`, sorted ascending.
///
/// Partial Fisher-Yates over a fresh index vector: exactly uniform, `O(n)`
/// setup. Use [`SubsetSampler`] when sampling many subsets of the same range.
pub fn uniform_subset<R: Rng>(rng: &mut R, n: u32, k: u32) -> Vec<u32> {
    assert!(k <= n, "subset size {k} exceeds range {n}");
    let mut perm: Vec<u32> = (0..n).collect();
    let mut out = Vec::with_capacity(k as usize);
    for i in 0..k as usize {
        let j = rng.gen_range(i..n as usize);
        perm.swap(i, j);
        out.push(perm[i]);
    }
    out.sort_unstable();
    out
}

/// Repeated uniform `k`-subset sampling from `{0, .., n-1}`.
///
/// Keeps one index permutation alive across calls and runs a partial
/// Fisher-Yates pass per sample, so each subset costs `O(k)`. The pass is
/// uniform from any starting arrangement, so the permutation is not reset
/// between calls.
pub struct SubsetSampler {
    perm: Vec<u32>,
}

impl SubsetSampler {
    pub fn new(n: u32) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn range(&self) -> u32 {
        self.perm.len() as u32
    }

    /// Sample a uniform `k`-subset into `out` (cleared first; sampling order,
    /// not sorted).
    pub fn sample_into<R: Rng>(&mut self, k: u32, rng: &mut R, out: &mut Vec<u32>) {
        let n = self.perm.len();
        assert!(k as usize <= n, "subset size {k} exceeds range {n}");
        out.clear();
        for i in 0..k as usize {
            let j = rng.gen_range(i..n);
            self.perm.swap(i, j);
            out.push(self.perm[i]);
        }
    }
}
