use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

/// Bucket sizes `floor(0.4n), floor(0.4n), floor(0.1n)` and the remainder.
pub fn bucket_sizes(n: usize) -> [usize; 4] {
    let big = n * 2 / 5;
    let small = n / 10;
    [big, big, small, n - 2 * big - small]
}

/// Training instances split by target length into four buckets, visited
/// shortest first; each bucket is reshuffled every epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurriculumDataset {
    buckets: [Vec<usize>; 4],
    seed: u64,
}

impl CurriculumDataset {
    /// `target_lengths[i]` is the target length of instance `i`. Instances
    /// are stably sorted by length before splitting.
    pub fn new(target_lengths: &[usize], seed: u64) -> Result<Self> {
        contract!(!target_lengths.is_empty(), "empty training set");
        let mut order: Vec<usize> = (0..target_lengths.len()).collect();
        order.sort_by_key(|&i| target_lengths[i]);
        let mut buckets: [Vec<usize>; 4] = Default::default();
        let mut rest = order.as_slice();
        for (b, size) in buckets.iter_mut().zip(bucket_sizes(target_lengths.len())) {
            let (head, tail) = rest.split_at(size);
            *b = head.to_vec();
            rest = tail;
        }
        Ok(Self { buckets, seed })
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket membership in sorted order.
    pub fn buckets(&self) -> &[Vec<usize>; 4] {
        &self.buckets
    }

    /// Buckets for `epoch`, each shuffled by a generator seeded from the
    /// dataset seed and the epoch.
    pub fn epoch_buckets(&self, epoch: usize) -> [Vec<usize>; 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        let mut out = self.buckets.clone();
        for b in &mut out {
            b.shuffle(&mut rng);
        }
        out
    }

    /// Instance ids of `epoch` in visiting order.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        self.epoch_buckets(epoch).concat()
    }

    /// Batches of up to `batch_size` consecutive ids; batches never span
    /// two buckets.
    pub fn epoch_batches(&self, epoch: usize, batch_size: usize) -> Result<Vec<Vec<usize>>> {
        contract!(batch_size >= 1, "batch size must be >= 1");
        Ok(self
            .epoch_buckets(epoch)
            .iter()
            .flat_map(|b| b.chunks(batch_size).map(<[usize]>::to_vec).collect::<Vec<_>>())
            .collect())
    }
}
