//! Epoch-wise frame shuffling and the normalized training matrices.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{CorpusManifest, Domain, NormStats, Split, Utterance};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Shuffles `0..n` once per epoch. The permutation depends only on
/// `(seed, stream, epoch)`, so independent domains use distinct streams.
#[derive(Debug, Clone, Copy)]
pub struct BatchSampler {
    n: usize,
    batch_size: usize,
    seed: u64,
    stream: u64,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64, stream: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("cannot sample batches from an empty domain".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(BatchSampler {
            n,
            batch_size,
            seed,
            stream,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    fn permutation(&self, epoch: usize, round: usize) -> Vec<usize> {
        let mut h = Sha256::new();
        h.update(b"batch-sampler");
        h.update(self.seed.to_le_bytes());
        h.update(self.stream.to_le_bytes());
        h.update((epoch as u64).to_le_bytes());
        h.update((round as u64).to_le_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&h.finalize());
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.shuffle(&mut rng);
        idx
    }

    /// One epoch's batches: a permutation of every index cut into
    /// `batch_size` chunks, the last chunk possibly short.
    pub fn epoch_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        self.permutation(epoch, 0)
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// `len` indices for training step `step` of `epoch`, read from the
    /// stream of consecutive permutations starting at offset
    /// `step * batch_size`. Used for domains that do not drive the epoch.
    pub fn cycled_batch(&self, epoch: usize, step: usize, len: usize) -> Vec<usize> {
        let start = step * self.batch_size;
        let mut out = Vec::with_capacity(len);
        let mut round = start / self.n;
        let mut pos = start % self.n;
        let mut perm = self.permutation(epoch, round);
        while out.len() < len {
            if pos == self.n {
                round += 1;
                pos = 0;
                perm = self.permutation(epoch, round);
            }
            out.push(perm[pos]);
            pos += 1;
        }
        out
    }
}

/// Normalized training frames of each domain. F0 rows hold only voiced
/// frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub whisper: Matrix,
    pub normal: Matrix,
    pub f0: Matrix,
}

impl TrainingSet {
    pub fn from_utterances(
        whisper: &[Utterance],
        normal: &[Utterance],
        stats: &NormStats,
    ) -> Result<Self> {
        let stack = |utts: &[Utterance], domain: Domain| -> Result<Matrix> {
            let rows: Vec<&[f64]> = utts
                .iter()
                .flat_map(|u| u.frames.iter().map(|f| &f.mcc[..]))
                .collect();
            if rows.is_empty() {
                return Err(Error::Empty(format!("no {} training frames", domain.as_str())));
            }
            Ok(stats.normalize_mcc(domain, &Matrix::from_rows(&rows)?))
        };
        let f0: Vec<f64> = normal
            .iter()
            .flat_map(|u| u.frames.iter())
            .filter_map(|f| stats.normalize_f0(f.f0_hz))
            .collect();
        if f0.is_empty() {
            return Err(Error::Empty("no voiced training frames".into()));
        }
        let n = f0.len();
        Ok(TrainingSet {
            whisper: stack(whisper, Domain::Whisper)?,
            normal: stack(normal, Domain::Normal)?,
            f0: Matrix::new(n, 1, f0)?,
        })
    }

    pub fn from_manifest(manifest: &CorpusManifest, stats: &NormStats) -> Result<Self> {
        let w = manifest.load_split(Domain::Whisper, Split::Train)?;
        let n = manifest.load_split(Domain::Normal, Split::Train)?;
        Self::from_utterances(&w, &n, stats)
    }
}
