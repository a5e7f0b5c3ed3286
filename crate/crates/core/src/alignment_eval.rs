//! Top-1 cosine nearest-neighbor alignment accuracy over sampled word pairs.
//!
//! For a query word of language A the candidates are the B-side words of all
//! sampled pairs (weak), or those plus the other A-side words (strong). A
//! query scores a hit only if its own translation is the unique maximum.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus_io::{WordPair, WordPairSet};
use crate::embedding_store::{EmbeddingSet, Side};

pub const DEFAULT_SAMPLE_SIZE: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("pair set is empty")]
    EmptyPairSet,
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("no vectors for pair {0}")]
    MissingVectors(u32),
    #[error("zero vector for pair {0}, side {1:?}")]
    ZeroVector(u32, Side),
    #[error("layer {layer} out of range for {layers} layers")]
    LayerOutOfRange { layer: usize, layers: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    SrcToTgt,
    TgtToSrc,
}

impl Direction {
    pub fn query_side(self) -> Side {
        match self {
            Direction::SrcToTgt => Side::Src,
            Direction::TgtToSrc => Side::Tgt,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::SrcToTgt => "src-tgt",
            Direction::TgtToSrc => "tgt-src",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "src-tgt" => Ok(Direction::SrcToTgt),
            "tgt-src" => Ok(Direction::TgtToSrc),
            _ => Err(format!("unknown direction {s:?} (expected src-tgt or tgt-src)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Weak,
    Strong,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Weak => "weak",
            Mode::Strong => "strong",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weak" => Ok(Mode::Weak),
            "strong" => Ok(Mode::Strong),
            _ => Err(format!("unknown mode {s:?} (expected weak or strong)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub n_sample: usize,
    pub seed: u64,
    pub direction: Direction,
    pub mode: Mode,
    pub layer: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_sample: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            direction: Direction::SrcToTgt,
            mode: Mode::Strong,
            layer: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentScore {
    pub accuracy: f64,
    pub hits: usize,
    pub n_evaluated: usize,
    pub mode: Mode,
    pub direction: Direction,
    pub layer: usize,
}

/// Draws `min(n, |pairs|)` pairs uniformly without replacement, in pair_id order.
pub fn sample_pairs(pairs: &WordPairSet, n: usize, seed: u64) -> Result<Vec<WordPair>, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroSampleSize);
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairSet);
    }
    let all = pairs.pairs();
    let k = n.min(all.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, all.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| all[i].clone()).collect())
}

/// Row-major matrix of unit vectors.
struct UnitRows {
    dim: usize,
    data: Vec<f64>,
}

impl UnitRows {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn unit_rows(set: &EmbeddingSet, ids: &[u32], side: Side, layer: usize) -> Result<UnitRows, EvalError> {
    let dim = set.header.dim;
    let mut data = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        let v = set.vector(id, side, layer).ok_or(EvalError::MissingVectors(id))?;
        let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EvalError::ZeroVector(id, side));
        }
        data.extend(v.iter().map(|&x| f64::from(x) / norm));
    }
    Ok(UnitRows { dim, data })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-query hit flags, in sample order.
pub fn hit_flags(
    set: &EmbeddingSet,
    sample: &[WordPair],
    layer: usize,
    direction: Direction,
    mode: Mode,
) -> Result<Vec<bool>, EvalError> {
    if layer >= set.header.layers {
        return Err(EvalError::LayerOutOfRange {
            layer,
            layers: set.header.layers,
        });
    }
    if sample.is_empty() {
        return Err(EvalError::EmptyPairSet);
    }
    let ids: Vec<u32> = sample.iter().map(|p| p.pair_id).collect();
    let side = direction.query_side();
    // both sides are loaded up front so missing/zero vectors are reported regardless of mode
    let queries = unit_rows(set, &ids, side, layer)?;
    let targets = unit_rows(set, &ids, side.other(), layer)?;
    let n = ids.len();

    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let q = queries.row(k);
            let own = dot(q, targets.row(k));
            let beaten = |rows: &UnitRows| (0..n).any(|j| j != k && dot(q, rows.row(j)) >= own);
            !(beaten(&targets) || (mode == Mode::Strong && beaten(&queries)))
        })
        .collect())
}

pub fn eval_alignment(set: &EmbeddingSet, sample: &[WordPair], cfg: &EvalConfig) -> Result<AlignmentScore, EvalError> {
    let flags = hit_flags(set, sample, cfg.layer, cfg.direction, cfg.mode)?;
    let hits = flags.iter().filter(|&&h| h).count();
    Ok(AlignmentScore {
        accuracy: hits as f64 / flags.len() as f64,
        hits,
        n_evaluated: flags.len(),
        mode: cfg.mode,
        direction: cfg.direction,
        layer: cfg.layer,
    })
}

/// Evaluates every layer on the same sample; `cfg.layer` is ignored.
pub fn eval_by_layer(
    set: &EmbeddingSet,
    sample: &[WordPair],
    cfg: &EvalConfig,
) -> Result<Vec<AlignmentScore>, EvalError> {
    (0..set.header.layers)
        .map(|layer| eval_alignment(set, sample, &EvalConfig { layer, ..*cfg }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Provenance;
    use crate::embedding_store::EmbxHeader;

    fn toy_pairs(n: usize) -> WordPairSet {
        let v = (0..n)
            .map(|i| WordPair {
                pair_id: i as u32,
                sentence: i,
                src_idx: 0,
                tgt_idx: 0,
                src_word: format!("s{i}"),
                tgt_word: format!("t{i}"),
            })
            .collect();
        WordPairSet::new(Provenance::Lexicon, v).unwrap()
    }

    fn set_from(src: &[&[f32]], tgt: &[&[f32]]) -> EmbeddingSet {
        let d = src[0].len();
        let mut set = EmbeddingSet::new(EmbxHeader::new(1, d, "en", "fr", "t").unwrap());
        for (i, (s, t)) in src.iter().zip(tgt).enumerate() {
            set.insert(i as u32, Side::Src, s.to_vec()).unwrap();
            set.insert(i as u32, Side::Tgt, t.to_vec()).unwrap();
        }
        set
    }

    fn cfg(mode: Mode, direction: Direction) -> EvalConfig {
        EvalConfig {
            mode,
            direction,
            ..Default::default()
        }
    }

    #[test]
    fn sampling_clamps_and_is_deterministic() {
        let pairs = toy_pairs(3);
        assert_eq!(sample_pairs(&pairs, 5, 1).unwrap().len(), 3);
        let big = toy_pairs(100);
        let a = sample_pairs(&big, 10, 7).unwrap();
        assert_eq!(a, sample_pairs(&big, 10, 7).unwrap());
        assert!(a.windows(2).all(|w| w[0].pair_id < w[1].pair_id));
        assert_eq!(
            sample_pairs(&WordPairSet::empty(Provenance::Lexicon), 3, 0),
            Err(EvalError::EmptyPairSet)
        );
        assert_eq!(sample_pairs(&big, 0, 0), Err(EvalError::ZeroSampleSize));
    }

    #[test]
    fn sample_overlap_matches_hypergeometric() {
        let pairs = toy_pairs(5000);
        let a = sample_pairs(&pairs, 1000, 11).unwrap();
        let b = sample_pairs(&pairs, 1000, 12).unwrap();
        let ids: std::collections::BTreeSet<u32> = a.iter().map(|p| p.pair_id).collect();
        let overlap = b.iter().filter(|p| ids.contains(&p.pair_id)).count() as f64;
        // mean 1000*1000/5000 = 200, variance 1000*(1/5)*(4/5)*(4000/4999) = 128.03
        let sd = 128.025_6_f64.sqrt();
        assert!((overlap - 200.0).abs() < 5.0 * sd, "overlap {overlap}");
    }

    #[test]
    fn singleton_is_perfect() {
        let set = set_from(&[&[1.0, 2.0]], &[&[-3.0, 0.5]]);
        let s = toy_pairs(1);
        for mode in [Mode::Weak, Mode::Strong] {
            assert_eq!(
                eval_alignment(&set, s.pairs(), &cfg(mode, Direction::SrcToTgt))
                    .unwrap()
                    .accuracy,
                1.0
            );
        }
    }

    #[test]
    fn two_pair_fixture_weak_vs_strong() {
        // sources at 0 and ~11 degrees; translations at ~-31 and 45 degrees
        let set = set_from(&[&[1.0, 0.0], &[1.0, 0.2]], &[&[1.0, -0.6], &[1.0, 1.0]]);
        let s = toy_pairs(2);
        let weak = eval_alignment(&set, s.pairs(), &cfg(Mode::Weak, Direction::SrcToTgt)).unwrap();
        let strong = eval_alignment(&set, s.pairs(), &cfg(Mode::Strong, Direction::SrcToTgt)).unwrap();
        assert_eq!((weak.accuracy, strong.accuracy), (1.0, 0.0));
    }

    #[test]
    fn ties_are_misses() {
        let v: &[f32] = &[0.3, 0.4];
        let set = set_from(&[v, v, v], &[v, v, v]);
        let s = toy_pairs(3);
        for mode in [Mode::Weak, Mode::Strong] {
            for dir in [Direction::SrcToTgt, Direction::TgtToSrc] {
                assert_eq!(eval_alignment(&set, s.pairs(), &cfg(mode, dir)).unwrap().accuracy, 0.0);
            }
        }
    }

    #[test]
    fn error_paths() {
        let set = set_from(&[&[1.0, 0.0], &[0.0, 0.0]], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let s = toy_pairs(2);
        assert_eq!(
            eval_alignment(&set, s.pairs(), &cfg(Mode::Weak, Direction::SrcToTgt)),
            Err(EvalError::ZeroVector(1, Side::Src))
        );
        let s3 = toy_pairs(3);
        assert_eq!(
            eval_alignment(&set, s3.pairs(), &cfg(Mode::Weak, Direction::TgtToSrc)),
            Err(EvalError::MissingVectors(2))
        );
        let bad_layer = EvalConfig {
            layer: 1,
            ..Default::default()
        };
        assert!(matches!(
            eval_alignment(&set, s.pairs(), &bad_layer),
            Err(EvalError::LayerOutOfRange { layer: 1, layers: 1 })
        ));
    }

    #[test]
    fn by_layer_single_and_constant() {
        let set = set_from(&[&[1.0, 0.0], &[1.0, 0.2]], &[&[1.0, -0.6], &[1.0, 1.0]]);
        let s = toy_pairs(2);
        let c = cfg(Mode::Weak, Direction::SrcToTgt);
        assert_eq!(
            eval_by_layer(&set, s.pairs(), &c).unwrap(),
            vec![eval_alignment(&set, s.pairs(), &c).unwrap()]
        );

        let mut set3 = EmbeddingSet::new(EmbxHeader::new(3, 2, "en", "fr", "t").unwrap());
        let src = [[1.0f32, 0.0], [1.0, 0.2]];
        let tgt = [[1.0f32, -0.6], [1.0, 1.0]];
        for i in 0..2 {
            set3.insert(i as u32, Side::Src, src[i].repeat(3)).unwrap();
            set3.insert(i as u32, Side::Tgt, tgt[i].repeat(3)).unwrap();
        }
        let scores = eval_by_layer(&set3, s.pairs(), &cfg(Mode::Strong, Direction::SrcToTgt)).unwrap();
        assert_eq!(scores.len(), 3);
        assert!(scores.iter().all(|x| x.accuracy == scores[0].accuracy));
        assert_eq!(scores.iter().map(|x| x.layer).collect::<Vec<_>>(), [0, 1, 2]);
    }
}
