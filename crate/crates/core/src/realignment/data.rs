//! Synthetic bilingual embeddings and round-robin interleaving of per-language streams.

use std::iter::Peekable;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::RealignError;
use crate::corpus_io::{Provenance, WordPair, WordPairSet};
use crate::embedding_store::{EmbeddingSet, EmbxHeader, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    /// Unpaired target-language vectors generated per pair.
    pub distractors_per_pair: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_pairs: 64,
            dim: 32,
            noise_sigma: 0.05,
            distractors_per_pair: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthBilingual {
    pub pairs: WordPairSet,
    /// Single-layer f32 copy of `source` and `target`.
    pub embeddings: EmbeddingSet,
    pub source: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    /// Distractors of pair `i` are rows `i * k .. (i + 1) * k`.
    pub distractors: Vec<Vec<f64>>,
    /// Row-major orthogonal matrix mapping source to target space.
    pub rotation: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Haar-ish random orthogonal matrix via Gram-Schmidt on Gaussian rows.
pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v = gaussian(rng, dim);
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for r in &rows {
                let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            rows.push(unit(v));
        }
    }
    rows.concat()
}

pub fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Multiplies by the transpose, i.e. the inverse of an orthogonal matrix.
pub fn mat_t_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|j| (0..d).map(|i| m[i * d + j] * v[i]).sum()).collect()
}

pub fn synth_bilingual(cfg: &SynthConfig) -> Result<SynthBilingual, RealignError> {
    if cfg.dim < 2 || cfg.n_pairs < 2 {
        return Err(RealignError::InvalidConfig(
            "synthetic data needs dim >= 2 and n_pairs >= 2".into(),
        ));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(RealignError::InvalidConfig(format!("noise sigma {}", cfg.noise_sigma)));
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rotation = random_orthogonal(d, &mut rng);
    let source: Vec<Vec<f64>> = (0..cfg.n_pairs).map(|_| unit(gaussian(&mut rng, d))).collect();
    let target: Vec<Vec<f64>> = source
        .iter()
        .map(|s| {
            let noise = gaussian(&mut rng, d);
            mat_vec(&rotation, s)
                .into_iter()
                .zip(noise)
                .map(|(x, e)| x + cfg.noise_sigma * e)
                .collect()
        })
        .collect();
    let distractors = (0..cfg.n_pairs * cfg.distractors_per_pair)
        .map(|_| unit(gaussian(&mut rng, d)))
        .collect();

    let pairs = (0..cfg.n_pairs)
        .map(|i| WordPair {
            pair_id: i as u32,
            sentence: i,
            src_idx: 0,
            tgt_idx: 0,
            src_word: format!("src{i}"),
            tgt_word: format!("tgt{i}"),
        })
        .collect();
    let pairs = WordPairSet::new(Provenance::Lexicon, pairs).expect("synthetic pairs are valid");
    let embeddings = to_embedding_set(&source, &target, "synthetic")?;
    Ok(SynthBilingual {
        pairs,
        embeddings,
        source,
        target,
        distractors,
        rotation,
    })
}

/// Packs paired vectors into a single-layer set; pair `i` gets id `i`.
pub fn to_embedding_set(source: &[Vec<f64>], target: &[Vec<f64>], model: &str) -> Result<EmbeddingSet, RealignError> {
    let dim = source.first().map_or(1, Vec::len);
    let header =
        EmbxHeader::new(1, dim, "src", "tgt", model).map_err(|e| RealignError::InvalidConfig(e.to_string()))?;
    let mut set = EmbeddingSet::new(header);
    for (i, (s, t)) in source.iter().zip(target).enumerate() {
        for (side, v) in [(Side::Src, s), (Side::Tgt, t)] {
            set.insert(i as u32, side, v.iter().map(|&x| x as f32).collect())
                .map_err(|e| RealignError::InvalidConfig(e.to_string()))?;
        }
    }
    Ok(set)
}

/// Round-robin over streams in their given order, skipping exhausted ones.
pub struct Interleave<I: Iterator> {
    streams: Vec<Peekable<I>>,
    next: usize,
}

pub fn interleave<I: Iterator>(streams: Vec<I>) -> Result<Interleave<I>, RealignError> {
    let mut streams: Vec<Peekable<I>> = streams.into_iter().map(Iterator::peekable).collect();
    if !streams.iter_mut().any(|s| s.peek().is_some()) {
        return Err(RealignError::AllStreamsEmpty);
    }
    Ok(Interleave { streams, next: 0 })
}

impl<I: Iterator> Iterator for Interleave<I> {
    type Item = I::Item;

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.streams.len();
        for _ in 0..n {
            let k = self.next;
            self.next = (self.next + 1) % n;
            if let Some(item) = self.streams[k].next() {
                return Some(item);
            }
        }
        None
    }
}
