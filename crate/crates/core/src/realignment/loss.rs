//! Contrastive realignment loss over cosine similarities.
//!
//! For every translated pair `(s, t)` the loss averages two log-softmax terms
//! at temperature `T`: `s` against every other vector of the batch, and `t`
//! against every other vector of the batch. Denominators exclude only the
//! anchor itself, so each contains the positive term.

use super::RealignError;

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RealignBatch {
    /// All word vectors of the batch, both languages.
    pub vectors: Vec<Vec<f64>>,
    /// Translated pairs as (source index, target index) into `vectors`.
    pub pairs: Vec<(usize, usize)>,
    pub temperature: f64,
}

impl RealignBatch {
    pub fn new(vectors: Vec<Vec<f64>>, pairs: Vec<(usize, usize)>) -> Self {
        Self {
            vectors,
            pairs,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn validate(&self) -> Result<(), RealignError> {
        if self.vectors.len() < 2 {
            return Err(RealignError::InvalidBatch("need at least 2 vectors".into()));
        }
        if self.pairs.is_empty() {
            return Err(RealignError::EmptyPairList);
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(RealignError::InvalidBatch(format!("temperature {}", self.temperature)));
        }
        let dim = self.vectors[0].len();
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(RealignError::InvalidBatch(format!(
                    "vector {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(RealignError::InvalidBatch(format!("vector {i} is not finite")));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(RealignError::ZeroVector(i));
            }
        }
        let n = self.vectors.len();
        for &(s, t) in &self.pairs {
            if s == t || s >= n || t >= n {
                return Err(RealignError::InvalidBatch(format!("bad pair ({s}, {t})")));
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Normalized {
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
    sim: Vec<Vec<f64>>,
}

fn normalize(batch: &RealignBatch) -> Normalized {
    let norms: Vec<f64> = batch.vectors.iter().map(|v| dot(v, v).sqrt()).collect();
    let units: Vec<Vec<f64>> = batch
        .vectors
        .iter()
        .zip(&norms)
        .map(|(v, n)| v.iter().map(|x| x / n).collect())
        .collect();
    let sim = units
        .iter()
        .map(|a| units.iter().map(|b| dot(a, b)).collect())
        .collect();
    Normalized { units, norms, sim }
}

/// `log sum exp(values[h] / T)` over `h != skip`, plus the softmax weights (zero at `skip`).
fn log_softmax_excluding(values: impl Fn(usize) -> f64, n: usize, skip: usize, temp: f64) -> (f64, Vec<f64>) {
    let max = (0..n)
        .filter(|&h| h != skip)
        .map(|h| values(h) / temp)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights = vec![0.0; n];
    let mut total = 0.0;
    for (h, w) in weights.iter_mut().enumerate() {
        if h != skip {
            *w = (values(h) / temp - max).exp();
            total += *w;
        }
    }
    for w in &mut weights {
        *w /= total;
    }
    (max + total.ln(), weights)
}

/// Loss value and its gradient with respect to every vector of the batch.
pub fn contrastive_loss_grad(batch: &RealignBatch) -> Result<(f64, Vec<Vec<f64>>), RealignError> {
    batch.validate()?;
    let n = batch.vectors.len();
    let temp = batch.temperature;
    let norm = normalize(batch);
    let sim = &norm.sim;
    let c = 1.0 / (2.0 * batch.pairs.len() as f64);

    // d loss / d sim[i][j], with sim[i][j] treated as a function of (u_i, u_j)
    let mut dsim = vec![vec![0.0; n]; n];
    let mut loss = 0.0;
    for &(s, t) in &batch.pairs {
        let positive = sim[s][t] / temp;

        let (lse, w) = log_softmax_excluding(|h| sim[s][h], n, s, temp);
        loss -= c * (positive - lse);
        dsim[s][t] -= c / temp;
        for h in 0..n {
            dsim[s][h] += c / temp * w[h];
        }

        let (lse, w) = log_softmax_excluding(|h| sim[h][t], n, t, temp);
        loss -= c * (positive - lse);
        dsim[s][t] -= c / temp;
        for h in 0..n {
            dsim[h][t] += c / temp * w[h];
        }
    }

    let dim = batch.vectors[0].len();
    let grads = (0..n)
        .map(|i| {
            let mut g = vec![0.0; dim];
            for j in 0..n {
                let coef = dsim[i][j] + dsim[j][i];
                if coef != 0.0 {
                    for (gk, uk) in g.iter_mut().zip(&norm.units[j]) {
                        *gk += coef * uk;
                    }
                }
            }
            // back through u = h / |h|: project out the radial component
            let u = &norm.units[i];
            let radial = dot(&g, u);
            g.iter()
                .zip(u)
                .map(|(gk, uk)| (gk - radial * uk) / norm.norms[i])
                .collect()
        })
        .collect();
    Ok((loss, grads))
}

pub fn contrastive_loss(batch: &RealignBatch) -> Result<f64, RealignError> {
    contrastive_loss_grad(batch).map(|(l, _)| l)
}

pub fn contrastive_grad(batch: &RealignBatch) -> Result<Vec<Vec<f64>>, RealignError> {
    contrastive_loss_grad(batch).map(|(_, g)| g)
}
