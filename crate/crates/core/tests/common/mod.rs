//! Helpers shared by the integration tests: naive oracles, random instances
//! and fixture locations.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xlalign::alignment_eval::{Direction, Mode};
use xlalign::corpus_io::{Provenance, WordPair, WordPairSet};
use xlalign::embedding_store::{EmbeddingSet, EmbxHeader, Side};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn pair_set(n: usize) -> WordPairSet {
    let pairs = (0..n)
        .map(|i| WordPair {
            pair_id: i as u32,
            sentence: i,
            src_idx: 0,
            tgt_idx: 0,
            src_word: format!("s{i}"),
            tgt_word: format!("t{i}"),
        })
        .collect();
    WordPairSet::new(Provenance::Lexicon, pairs).unwrap()
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random Gaussian embeddings for `n` pairs over `layers` layers.
pub fn random_set(n: usize, dim: usize, layers: usize, seed: u64) -> (EmbeddingSet, WordPairSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = EmbeddingSet::new(EmbxHeader::new(layers, dim, "en", "xx", "random").unwrap());
    for i in 0..n as u32 {
        for side in [Side::Src, Side::Tgt] {
            let payload: Vec<f32> = (0..layers * dim)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect();
            set.insert(i, side, payload).unwrap();
        }
    }
    (set, pair_set(n))
}

pub fn set_from_vectors(src: &[Vec<f64>], tgt: &[Vec<f64>]) -> (EmbeddingSet, WordPairSet) {
    let dim = src[0].len();
    let mut set = EmbeddingSet::new(EmbxHeader::new(1, dim, "en", "xx", "fixture").unwrap());
    for (i, (s, t)) in src.iter().zip(tgt).enumerate() {
        set.insert(i as u32, Side::Src, s.iter().map(|&x| x as f32).collect())
            .unwrap();
        set.insert(i as u32, Side::Tgt, t.iter().map(|&x| x as f32).collect())
            .unwrap();
    }
    (set, pair_set(src.len()))
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Double-loop nearest-neighbor oracle: a query hits when its own
/// translation is strictly more similar than every other candidate.
pub fn naive_hits(set: &EmbeddingSet, sample: &[WordPair], layer: usize, dir: Direction, mode: Mode) -> Vec<bool> {
    let (q_side, c_side) = match dir {
        Direction::SrcToTgt => (Side::Src, Side::Tgt),
        Direction::TgtToSrc => (Side::Tgt, Side::Src),
    };
    let v = |id: u32, side: Side| set.vector(id, side, layer).unwrap();
    sample
        .iter()
        .map(|q| {
            let query = v(q.pair_id, q_side);
            let own = cosine(query, v(q.pair_id, c_side));
            let mut hit = true;
            for c in sample {
                if c.pair_id != q.pair_id && cosine(query, v(c.pair_id, c_side)) >= own {
                    hit = false;
                }
                if mode == Mode::Strong && c.pair_id != q.pair_id && cosine(query, v(c.pair_id, q_side)) >= own {
                    hit = false;
                }
            }
            hit
        })
        .collect()
}

/// Hand-computed grow-diag-final-and cases: (forward, backward, src_len, tgt_len, expected).
pub type GdfaCase = (
    Vec<(usize, usize)>,
    Vec<(usize, usize)>,
    usize,
    usize,
    Vec<(usize, usize)>,
);

pub fn gdfa_golden() -> Vec<GdfaCase> {
    vec![
        (vec![(0, 0)], vec![(0, 0)], 1, 1, vec![(0, 0)]),
        (vec![(0, 0)], vec![(0, 1)], 1, 2, vec![(0, 0)]),
        (
            vec![(0, 0), (1, 1)],
            vec![(0, 0), (1, 2)],
            2,
            3,
            vec![(0, 0), (1, 1), (1, 2)],
        ),
        // grow from (0,0): diagonal (1,1), then from (1,1): (2,1) below, (1,2) right;
        // (2,2) then has both ends aligned and is never added
        (
            vec![(0, 0), (1, 2), (2, 1)],
            vec![(0, 0), (1, 1), (2, 2)],
            3,
            3,
            vec![(0, 0), (1, 1), (1, 2), (2, 1)],
        ),
        // empty intersection; final-and adds forward-only (0,1), then backward-only (1,0)
        (vec![(0, 1)], vec![(1, 0)], 2, 2, vec![(0, 1), (1, 0)]),
    ]
}

/// Random batch with up to 32 vectors of dimension up to 16 and disjoint pairs.
pub fn random_batch(rng: &mut ChaCha8Rng) -> xlalign::realignment::RealignBatch {
    use rand::seq::SliceRandom;
    let n = rng.random_range(2..=32);
    let dim = rng.random_range(2..=16);
    let vectors: Vec<Vec<f64>> = (0..n).map(|_| gaussian(rng, dim)).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_pairs = rng.random_range(1..=n / 2);
    let pairs = (0..n_pairs).map(|k| (idx[2 * k], idx[2 * k + 1])).collect();
    xlalign::realignment::RealignBatch::new(vectors, pairs)
}

/// The contrastive loss by direct summation of exponentials, no log-sum-exp.
pub fn direct_loss(b: &xlalign::realignment::RealignBatch) -> f64 {
    let cos = |i: usize, j: usize| {
        let (a, c) = (&b.vectors[i], &b.vectors[j]);
        let dot: f64 = a.iter().zip(c).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * c.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let t = b.temperature;
    let n = b.vectors.len();
    let mut total = 0.0;
    for &(s, tg) in &b.pairs {
        let num = (cos(s, tg) / t).exp();
        let den_s: f64 = (0..n).filter(|&h| h != s).map(|h| (cos(s, h) / t).exp()).sum();
        let den_t: f64 = (0..n).filter(|&h| h != tg).map(|h| (cos(h, tg) / t).exp()).sum();
        total += (num / den_s).ln() + (num / den_t).ln();
    }
    -total / (2.0 * b.pairs.len() as f64)
}

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) of the
/// gradient against central differences with step `h`.
pub fn fd_relative_error(b: &xlalign::realignment::RealignBatch, h: f64) -> f64 {
    use xlalign::realignment::{contrastive_grad, contrastive_loss};
    let analytic = contrastive_grad(b).unwrap();
    let mut diff = 0.0;
    let mut scale_a = 0.0;
    let mut scale_n = 0.0;
    for i in 0..b.vectors.len() {
        for k in 0..b.vectors[i].len() {
            let mut plus = b.clone();
            plus.vectors[i][k] += h;
            let mut minus = b.clone();
            minus.vectors[i][k] -= h;
            let num = (contrastive_loss(&plus).unwrap() - contrastive_loss(&minus).unwrap()) / (2.0 * h);
            let a = analytic[i][k];
            diff += (a - num).powi(2);
            scale_a += a * a;
            scale_n += num * num;
        }
    }
    let scale = scale_a.max(scale_n).sqrt();
    if scale == 0.0 {
        diff.sqrt()
    } else {
        diff.sqrt() / scale
    }
}

pub fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_xlalign"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Run-record CSV with `rows` before-stage records for task `pos` at the last
/// layer, plus matching after-stage records when `with_after` is set.
pub fn runs_csv(rows: usize, with_after: bool, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out =
        String::from("model,task,language,seed,stage,layer,alignment_weak,alignment_strong,metric_en,metric_tgt\n");
    for k in 0..rows {
        let (model, language, run) = (format!("m{}", k % 4), format!("l{}", (k / 4) % 5), k / 20);
        let strong: f64 = rng.random_range(0.05..0.6);
        let weak = (strong + rng.random_range(0.0..0.3)).min(1.0);
        let en: f64 = rng.random_range(0.8..0.95);
        let tgt = (en * (0.4 + strong) + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
        out.push_str(&format!(
            "{model},pos,{language},{run},before,last,{weak},{strong},{en},{tgt}\n"
        ));
        if with_after {
            let s2 = (strong * 1.2).min(1.0);
            out.push_str(&format!(
                "{model},pos,{language},{run},after,last,{weak},{s2},{en},{tgt}\n"
            ));
        }
    }
    out
}

/// Two-layer EMBX file plus pair TSV; layer 1 is layer 0 scaled, so accuracies match.
pub fn write_two_layer(dir: &std::path::Path) -> (PathBuf, PathBuf) {
    let (one, pairs) = random_set(30, 6, 1, 3);
    let mut set = EmbeddingSet::new(EmbxHeader::new(2, 6, "en", "xx", "two-layer").unwrap());
    for id in one.pair_ids() {
        for side in [Side::Src, Side::Tgt] {
            let v = one.vector(id, side, 0).unwrap();
            let payload: Vec<f32> = v.iter().copied().chain(v.iter().map(|x| 2.0 * x)).collect();
            set.insert(id, side, payload).unwrap();
        }
    }
    let (e, p) = (dir.join("two.embx"), dir.join("two.tsv"));
    xlalign::embedding_store::write_embx(&set, &e).unwrap();
    xlalign::corpus_io::write_pairs(&pairs, &p).unwrap();
    (e, p)
}

fn p(path: &std::path::Path) -> &str {
    path.to_str().unwrap()
}

fn determinism_cases(dir: &std::path::Path) -> Vec<(Vec<String>, Vec<std::path::PathBuf>)> {
    let runs = dir.join("runs.csv");
    std::fs::write(&runs, runs_csv(30, true, 5)).unwrap();
    let (embx, pairs) = write_two_layer(dir);
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let o = |name: &str| dir.join(name);
    vec![
        (
            s(&[
                "extract-pairs",
                "--src",
                p(&fixture("extract/en.txt")),
                "--tgt",
                p(&fixture("extract/fr.txt")),
                "--lexicon",
                p(&fixture("extract/lexicon.txt")),
                "--out",
                p(&o("x.tsv")),
            ]),
            vec![o("x.tsv")],
        ),
        (
            s(&[
                "--seed",
                "3",
                "synth",
                "--pairs-out",
                p(&o("s.tsv")),
                "--embx-out",
                p(&o("s.embx")),
            ]),
            vec![o("s.tsv"), o("s.embx")],
        ),
        (
            s(&[
                "--seed",
                "3",
                "eval-alignment",
                "--embx",
                p(&embx),
                "--pairs",
                p(&pairs),
                "--all-layers",
                "--n",
                "10",
                "--out",
                p(&o("e.csv")),
            ]),
            vec![o("e.csv")],
        ),
        (
            s(&["ctl", "--runs", p(&runs), "--out", p(&o("c.csv"))]),
            vec![o("c.csv")],
        ),
        (
            s(&["rel-var", "--runs", p(&runs), "--kind", "weak", "--out", p(&o("r.csv"))]),
            vec![o("r.csv")],
        ),
        (
            s(&[
                "--seed",
                "5",
                "correlate",
                "--runs",
                p(&runs),
                "--stage",
                "after",
                "--resamples",
                "500",
                "--permutations",
                "500",
                "--out",
                p(&o("k.csv")),
                "--svg",
                p(&o("k.svg")),
            ]),
            vec![o("k.csv"), o("k.svg")],
        ),
        (
            s(&[
                "--seed",
                "5",
                "realign-demo",
                "--steps",
                "50",
                "--languages",
                "2",
                "--out",
                p(&o("t.csv")),
            ]),
            vec![o("t.csv")],
        ),
    ]
}

/// Runs every subcommand twice with the same flags; returns the names of those whose outputs differ.
pub fn nondeterministic_subcommands(dir: &std::path::Path) -> Vec<String> {
    let mut bad = Vec::new();
    for (args, outputs) in determinism_cases(dir) {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let run = || {
            let out = run_cli(&argv);
            assert!(
                out.status.success(),
                "{argv:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            let mut bytes = out.stdout;
            for f in &outputs {
                bytes.extend(std::fs::read(f).unwrap());
            }
            bytes
        };
        if run() != run() {
            bad.push(
                args.iter()
                    .find(|a| !a.starts_with('-') && a.parse::<u64>().is_err())
                    .unwrap()
                    .clone(),
            );
        }
    }
    bad
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exact permutation p-value by enumerating every reordering of `y`.
pub fn exact_pvalue(x: &[f64], y: &[f64]) -> f64 {
    let observed = xlalign::stats::spearman(x, y).unwrap().abs();
    let perms = permutations(x.len());
    let extreme = perms
        .iter()
        .filter(|p| {
            let yp: Vec<f64> = p.iter().map(|&i| y[i]).collect();
            xlalign::stats::spearman(x, &yp).unwrap().abs() >= observed - xlalign::stats::TIE_EPS
        })
        .count();
    extreme as f64 / perms.len() as f64
}
