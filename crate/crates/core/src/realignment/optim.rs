//! Adam over a flat parameter vector and a linear warmup/decay schedule.

/// Reference fine-tuning learning rate of the transformer setting. The toy trainer
/// optimizes raw embeddings and defaults to [`DEFAULT_TOY_LR`] instead.
pub const REFERENCE_LR: f64 = 2e-5;
pub const DEFAULT_TOY_LR: f64 = 1e-2;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            if lr != 0.0 {
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Linear warmup over the first `warmup` steps, then linear decay towards zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub base_lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LinearSchedule {
    pub fn new(base_lr: f64, total_steps: usize, warmup_fraction: f64) -> Self {
        Self {
            base_lr,
            total_steps,
            warmup_steps: (warmup_fraction * total_steps as f64).ceil() as usize,
        }
    }

    /// Learning rate for 0-based step `k`.
    pub fn lr(&self, k: usize) -> f64 {
        if k < self.warmup_steps {
            self.base_lr * (k + 1) as f64 / self.warmup_steps as f64
        } else if k >= self.total_steps {
            0.0
        } else {
            self.base_lr * (self.total_steps - k) as f64 / (self.total_steps - self.warmup_steps) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_is_identity() {
        let mut p = vec![1.0, -2.0, 3.5];
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), 3);
        for _ in 0..5 {
            adam.step(&mut p, &[0.3, -1.0, 7.0], 0.0);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0, 0.0];
        let mut adam = Adam::new(AdamConfig::default(), 2);
        adam.step(&mut p, &[2.0, -0.5], 0.1);
        assert!((p[0] + 0.1).abs() < 1e-6 && (p[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn schedule_shape() {
        let s = LinearSchedule::new(1.0, 100, 0.1);
        assert_eq!(s.warmup_steps, 10);
        assert!((s.lr(0) - 0.1).abs() < 1e-15);
        assert_eq!(s.lr(9), 1.0);
        assert_eq!(s.lr(10), 1.0);
        assert!((s.lr(55) - 0.5).abs() < 1e-15);
        assert!((s.lr(99) - 1.0 / 90.0).abs() < 1e-15);
        assert_eq!(s.lr(100), 0.0);
        let peak = (0..100).map(|k| s.lr(k)).fold(0.0, f64::max);
        assert_eq!(peak, 1.0);
    }
}
