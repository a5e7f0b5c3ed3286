//! Spearman rank correlation, permutation p-values and BCa bootstrap intervals.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Permuted statistics within this distance of the observed one count as "at least as extreme".
pub const TIE_EPS: f64 = 1e-12;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Redraws allowed per bootstrap resample before giving up.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite input value")]
    NonFinite,
    #[error("one side is constant; rank correlation undefined")]
    DegenerateInput,
    #[error("{name} = {value} out of range")]
    RangeError { name: &'static str, value: f64 },
    #[error("bootstrap resample {0} stayed degenerate after {MAX_REDRAWS} redraws")]
    TooManyDegenerateResamples(usize),
}

/// Mid-ranks (1-based); tied values share the average of their positions.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold equal values
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ss = c.iter().map(|x| x * x).sum::<f64>();
    (c, ss)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let (ca, sa) = centered(a);
    let (cb, sb) = centered(b);
    if sa == 0.0 || sb == 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    let cov: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    Ok((cov / (sa * sb).sqrt()).clamp(-1.0, 1.0))
}

fn rank_corr(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    pearson(&midranks(x), &midranks(y))
}

fn check(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check(x, y)?;
    rank_corr(x, y)
}

/// Two-sided permutation p-value, `(1 + #{|rho*| >= |rho|}) / (iters + 1)`.
pub fn perm_pvalue(x: &[f64], y: &[f64], iters: usize, seed: u64) -> Result<f64, StatsError> {
    check(x, y)?;
    if iters == 0 {
        return Err(StatsError::RangeError {
            name: "iters",
            value: 0.0,
        });
    }
    let (cx, sx) = centered(&midranks(x));
    let (mut cy, sy) = centered(&midranks(y));
    if sx == 0.0 || sy == 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    let norm = (sx * sy).sqrt();
    let corr = |cy: &[f64]| cx.iter().zip(cy).map(|(a, b)| a * b).sum::<f64>() / norm;
    let observed = corr(&cy).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..iters {
        cy.shuffle(&mut rng);
        if corr(&cy).abs() >= observed - TIE_EPS {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (iters + 1) as f64)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation refined by one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

fn bootstrap_stat(x: &[f64], y: &[f64], seed: u64, index: usize) -> Result<f64, StatsError> {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for _ in 0..=MAX_REDRAWS {
        for k in 0..n {
            let i = rng.random_range(0..n);
            bx[k] = x[i];
            by[k] = y[i];
        }
        match rank_corr(&bx, &by) {
            Err(StatsError::DegenerateInput) => continue,
            other => return other,
        }
    }
    Err(StatsError::TooManyDegenerateResamples(index))
}

/// Jackknife acceleration over the leave-one-out estimates that are defined.
fn acceleration(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let thetas: Vec<f64> = (0..n)
        .filter_map(|i| {
            let lx: Vec<f64> = x.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, v)| *v).collect();
            let ly: Vec<f64> = y.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, v)| *v).collect();
            rank_corr(&lx, &ly).ok()
        })
        .collect();
    if thetas.len() < 2 {
        return 0.0;
    }
    let mean = thetas.iter().sum::<f64>() / thetas.len() as f64;
    let num: f64 = thetas.iter().map(|t| (mean - t).powi(3)).sum();
    let den: f64 = thetas.iter().map(|t| (mean - t).powi(2)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / (6.0 * den.powf(1.5))
    }
}

/// Bias-corrected and accelerated bootstrap interval for Spearman's rho.
///
/// Resample `b` draws its RNG stream from `(seed, b)`, so the result does not
/// depend on how resamples are scheduled.
pub fn bca_interval(x: &[f64], y: &[f64], resamples: usize, alpha: f64, seed: u64) -> Result<(f64, f64), StatsError> {
    let theta = spearman(x, y)?;
    if resamples < 100 {
        return Err(StatsError::RangeError {
            name: "resamples",
            value: resamples as f64,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::RangeError {
            name: "alpha",
            value: alpha,
        });
    }
    let mut stats = (0..resamples)
        .into_par_iter()
        .map(|b| bootstrap_stat(x, y, seed, b))
        .collect::<Result<Vec<f64>, StatsError>>()?;
    stats.sort_by(f64::total_cmp);

    let bf = resamples as f64;
    let below = stats.iter().filter(|&&t| t < theta).count() as f64;
    let z0 = normal_quantile((below / bf).clamp(1.0 / (bf + 1.0), bf / (bf + 1.0)));
    let a = acceleration(x, y);
    let adjusted = |z: f64| {
        let s = z0 + z;
        normal_cdf(z0 + s / (1.0 - a * s))
    };
    let a_lo = adjusted(normal_quantile(alpha / 2.0));
    let a_hi = adjusted(normal_quantile(1.0 - alpha / 2.0));
    let last = (resamples - 1) as f64;
    let pick = |q: f64, round: fn(f64) -> f64| {
        let q = if q.is_nan() { 0.5 } else { q.clamp(0.0, 1.0) };
        stats[round(q * last) as usize]
    };
    let lo = pick(a_lo, f64::floor);
    let hi = pick(a_hi, f64::ceil);
    Ok((lo.min(hi), lo.max(hi)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationConfig {
    pub permutations: usize,
    pub resamples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            resamples: DEFAULT_RESAMPLES,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub rho: f64,
    pub n: usize,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    pub seed: u64,
}

pub fn correlate(x: &[f64], y: &[f64], cfg: &CorrelationConfig) -> Result<CorrelationResult, StatsError> {
    let rho = spearman(x, y)?;
    let p_value = perm_pvalue(x, y, cfg.permutations, cfg.seed)?;
    let (ci_low, ci_high) = bca_interval(x, y, cfg.resamples, cfg.alpha, cfg.seed)?;
    Ok(CorrelationResult {
        rho,
        n: x.len(),
        p_value,
        ci_low,
        ci_high,
        resamples: cfg.resamples,
        seed: cfg.seed,
    })
}
