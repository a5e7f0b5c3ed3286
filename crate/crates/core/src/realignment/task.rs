//! Linear softmax classifier used as the stand-in downstream task.

use super::RealignError;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTaskHead {
    pub classes: usize,
    pub dim: usize,
    /// Row-major `classes x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToyTaskHead {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn param_count(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                self.bias[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGrad {
    pub loss: f64,
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
    pub d_inputs: Vec<Vec<f64>>,
}

/// Mean cross-entropy of the head over `vectors`, with analytic gradients.
pub fn task_loss_grad(head: &ToyTaskHead, vectors: &[Vec<f64>], labels: &[usize]) -> Result<TaskGrad, RealignError> {
    if vectors.len() != labels.len() || vectors.is_empty() {
        return Err(RealignError::InvalidBatch(format!(
            "{} vectors for {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    let (k, d) = (head.classes, head.dim);
    let scale = 1.0 / vectors.len() as f64;
    let mut out = TaskGrad {
        loss: 0.0,
        d_weights: vec![0.0; k * d],
        d_bias: vec![0.0; k],
        d_inputs: Vec::with_capacity(vectors.len()),
    };
    for (x, &y) in vectors.iter().zip(labels) {
        if y >= k {
            return Err(RealignError::LabelOutOfRange { label: y, classes: k });
        }
        if x.len() != d {
            return Err(RealignError::InvalidBatch(format!(
                "input dimension {} != {d}",
                x.len()
            )));
        }
        let logits = head.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + z.ln();
        out.loss += scale * (lse - logits[y]);

        let mut dx = vec![0.0; d];
        for c in 0..k {
            let p = (logits[c] - lse).exp();
            let delta = scale * (p - if c == y { 1.0 } else { 0.0 });
            out.d_bias[c] += delta;
            let row = &head.weights[c * d..(c + 1) * d];
            for j in 0..d {
                out.d_weights[c * d + j] += delta * x[j];
                dx[j] += delta * row[j];
            }
        }
        out.d_inputs.push(dx);
    }
    Ok(out)
}
