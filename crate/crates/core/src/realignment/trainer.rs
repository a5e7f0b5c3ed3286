//! Desk-scale realignment: the encoder is the identity, so the trainable
//! parameters are the raw target-side vectors (paired words and distractors)
//! plus, when a task is trained, a linear softmax head over source vectors.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{interleave, synth_bilingual, to_embedding_set, SynthBilingual, SynthConfig};
use super::loss::{contrastive_loss_grad, RealignBatch, DEFAULT_TEMPERATURE};
use super::optim::{Adam, AdamConfig, LinearSchedule, DEFAULT_TOY_LR, DEFAULT_WARMUP_FRACTION};
use super::task::{task_loss_grad, ToyTaskHead};
use super::RealignError;
use crate::alignment_eval::{eval_alignment, sample_pairs, Direction, EvalConfig, Mode};
use crate::corpus_io::WordPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Realignment-only steps, then task-only steps with a fresh optimizer.
    Sequential,
    /// Every step optimizes the task loss plus the realignment loss.
    Joint,
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(TrainMode::Sequential),
            "joint" => Ok(TrainMode::Joint),
            _ => Err(format!("unknown mode {s:?} (expected sequential or joint)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub mode: TrainMode,
    /// Realignment steps (sequential) or joint steps.
    pub steps: usize,
    /// Task-only steps after realignment in sequential mode.
    pub task_steps: usize,
    pub lr: f64,
    pub adam: AdamConfig,
    pub warmup_fraction: f64,
    pub temperature: f64,
    /// Translated pairs per realignment batch.
    pub batch_pairs: usize,
    pub task_batch: usize,
    pub classes: usize,
    /// Number of source-target language pairs whose batches are interleaved.
    pub languages: usize,
    pub n_pairs: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub distractors_per_pair: usize,
    pub probe_size: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Joint,
            steps: 500,
            task_steps: 100,
            lr: DEFAULT_TOY_LR,
            adam: AdamConfig::default(),
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            temperature: DEFAULT_TEMPERATURE,
            batch_pairs: 16,
            task_batch: 32,
            classes: 4,
            languages: 1,
            n_pairs: 64,
            dim: 32,
            noise_sigma: 0.05,
            distractors_per_pair: 1,
            probe_size: 64,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    fn validate(&self) -> Result<(), RealignError> {
        let bad = |m: &str| Err(RealignError::InvalidConfig(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_pairs == 0 || self.task_batch == 0 || self.probe_size == 0 {
            return bad("batch and probe sizes must be at least 1");
        }
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.languages == 0 {
            return bad("need at least 1 language");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Source, target and distractor vectors of one language pair.
pub type LanguageData = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>);

#[derive(Debug, Clone, PartialEq)]
struct LanguageBlock {
    source: Vec<Vec<f64>>,
    target_offset: usize,
    distractor_offset: usize,
    distractors_per_pair: usize,
}

/// Which translated pairs of which language make up a realignment batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSelection {
    pub language: usize,
    pub pairs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub realign: Option<f64>,
    pub task: Option<f64>,
}

impl StepLosses {
    pub fn total(&self) -> f64 {
        self.realign.unwrap_or(0.0) + self.task.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub dim: usize,
    pub temperature: f64,
    languages: Vec<LanguageBlock>,
    /// Target vectors, distractors, then head weights and bias.
    pub params: Vec<f64>,
    head_offset: usize,
    classes: usize,
    task_inputs: Vec<Vec<f64>>,
    task_labels: Vec<usize>,
    adam: Adam,
}

impl TrainState {
    /// Builds a state from explicit vectors. Task inputs are the first
    /// language's source vectors.
    pub fn new(
        data: &[LanguageData],
        distractors_per_pair: usize,
        task_labels: Vec<usize>,
        classes: usize,
        adam: AdamConfig,
    ) -> Result<Self, RealignError> {
        let dim = data
            .first()
            .and_then(|(s, _, _)| s.first())
            .map(Vec::len)
            .ok_or_else(|| RealignError::InvalidConfig("no data".into()))?;
        let mut params = Vec::new();
        let mut languages = Vec::with_capacity(data.len());
        for (source, target, distractors) in data {
            if source.len() != target.len() || distractors.len() != source.len() * distractors_per_pair {
                return Err(RealignError::InvalidConfig("inconsistent language block sizes".into()));
            }
            if source.iter().chain(target).chain(distractors).any(|v| v.len() != dim) {
                return Err(RealignError::InvalidConfig("inconsistent vector dimension".into()));
            }
            let target_offset = params.len();
            params.extend(target.iter().flatten());
            let distractor_offset = params.len();
            params.extend(distractors.iter().flatten());
            languages.push(LanguageBlock {
                source: source.clone(),
                target_offset,
                distractor_offset,
                distractors_per_pair,
            });
        }
        let task_inputs = languages[0].source.clone();
        if task_labels.len() != task_inputs.len() {
            return Err(RealignError::InvalidConfig(
                "one task label per source vector expected".into(),
            ));
        }
        if let Some(&label) = task_labels.iter().find(|&&l| l >= classes) {
            return Err(RealignError::LabelOutOfRange { label, classes });
        }
        let head_offset = params.len();
        params.extend(std::iter::repeat_n(0.0, classes * (dim + 1)));
        let adam = Adam::new(adam, params.len());
        Ok(Self {
            dim,
            temperature: DEFAULT_TEMPERATURE,
            languages,
            params,
            head_offset,
            classes,
            task_inputs,
            task_labels,
            adam,
        })
    }

    pub fn language_count(&self) -> usize {
        self.languages.len()
    }

    pub fn pair_count(&self, language: usize) -> usize {
        self.languages[language].source.len()
    }

    pub fn task_len(&self) -> usize {
        self.task_inputs.len()
    }

    pub fn reset_optimizer(&mut self) {
        self.adam = Adam::new(self.adam.config, self.params.len());
    }

    fn row(&self, offset: usize, i: usize) -> &[f64] {
        &self.params[offset + i * self.dim..offset + (i + 1) * self.dim]
    }

    pub fn source(&self, language: usize, i: usize) -> &[f64] {
        &self.languages[language].source[i]
    }

    pub fn target(&self, language: usize, i: usize) -> &[f64] {
        self.row(self.languages[language].target_offset, i)
    }

    pub fn head(&self) -> ToyTaskHead {
        let d = self.dim;
        let k = self.classes;
        let w = &self.params[self.head_offset..self.head_offset + k * d];
        let b = &self.params[self.head_offset + k * d..self.head_offset + k * (d + 1)];
        ToyTaskHead {
            classes: k,
            dim: d,
            weights: w.to_vec(),
            bias: b.to_vec(),
        }
    }

    /// The batch for `sel` plus, for each batch vector, the parameter offset it reads from
    /// (`None` for fixed source vectors).
    pub fn realign_batch(&self, sel: &BatchSelection) -> (RealignBatch, Vec<Option<usize>>) {
        let block = &self.languages[sel.language];
        let mut vectors = Vec::new();
        let mut offsets = Vec::new();
        let mut pairs = Vec::with_capacity(sel.pairs.len());
        for &i in &sel.pairs {
            pairs.push((vectors.len(), vectors.len() + 1));
            vectors.push(block.source[i].clone());
            offsets.push(None);
            let t = block.target_offset + i * self.dim;
            vectors.push(self.params[t..t + self.dim].to_vec());
            offsets.push(Some(t));
        }
        for &i in &sel.pairs {
            for k in 0..block.distractors_per_pair {
                let o = block.distractor_offset + (i * block.distractors_per_pair + k) * self.dim;
                vectors.push(self.params[o..o + self.dim].to_vec());
                offsets.push(Some(o));
            }
        }
        let mut batch = RealignBatch::new(vectors, pairs);
        batch.temperature = self.temperature;
        (batch, offsets)
    }

    /// Losses at the current parameters and the gradient of their sum.
    pub fn loss_and_grad(
        &self,
        realign: Option<&BatchSelection>,
        task: Option<&[usize]>,
    ) -> Result<(StepLosses, Vec<f64>), RealignError> {
        let mut grad = vec![0.0; self.params.len()];
        let mut losses = StepLosses {
            realign: None,
            task: None,
        };
        if let Some(sel) = realign {
            let (batch, offsets) = self.realign_batch(sel);
            let (loss, g) = contrastive_loss_grad(&batch)?;
            for (gv, off) in g.iter().zip(&offsets) {
                if let Some(o) = *off {
                    for (acc, x) in grad[o..o + self.dim].iter_mut().zip(gv) {
                        *acc += x;
                    }
                }
            }
            losses.realign = Some(loss);
        }
        if let Some(idx) = task {
            let inputs: Vec<Vec<f64>> = idx.iter().map(|&i| self.task_inputs[i].clone()).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| self.task_labels[i]).collect();
            let g = task_loss_grad(&self.head(), &inputs, &labels)?;
            let kd = self.classes * self.dim;
            grad[self.head_offset..self.head_offset + kd].copy_from_slice(&g.d_weights);
            grad[self.head_offset + kd..].copy_from_slice(&g.d_bias);
            losses.task = Some(g.loss);
        }
        Ok((losses, grad))
    }

    /// Strong src-to-tgt accuracy of one language on a fixed probe sample.
    pub fn probe_accuracy(&self, language: usize, probe: &[WordPair]) -> Result<f64, RealignError> {
        let n = self.pair_count(language);
        let source = &self.languages[language].source;
        let target: Vec<Vec<f64>> = (0..n).map(|i| self.target(language, i).to_vec()).collect();
        let set = to_embedding_set(source, &target, "probe")?;
        let cfg = EvalConfig {
            mode: Mode::Strong,
            direction: Direction::SrcToTgt,
            ..Default::default()
        };
        Ok(eval_alignment(&set, probe, &cfg)?.accuracy)
    }
}

/// One Adam update on the summed losses of the given batches.
pub fn joint_step(
    state: &mut TrainState,
    realign: Option<&BatchSelection>,
    task: Option<&[usize]>,
    lr: f64,
) -> Result<StepLosses, RealignError> {
    let (losses, grad) = state.loss_and_grad(realign, task)?;
    state.adam.step(&mut state.params, &grad, lr);
    Ok(losses)
}

/// Endless shuffled epochs over `0..n`, cut into chunks of `batch`.
#[derive(Debug, Clone)]
pub struct EpochBatches {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl EpochBatches {
    pub fn new(n: usize, batch: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            batch: batch.max(1),
            rng,
        }
    }
}

impl Iterator for EpochBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.order.is_empty() {
            return None;
        }
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub realign_loss: Option<f64>,
    pub task_loss: Option<f64>,
    pub probe_strong_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// Row 0 is the initial probe; row `k` holds the losses of update `k` and the probe after it.
    pub rows: Vec<TrajectoryRow>,
}

pub const TRAJECTORY_HEADER: &str = "step,realign_loss,task_loss,probe_strong_acc";

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{TRAJECTORY_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.step,
                cell(r.realign_loss),
                cell(r.task_loss),
                r.probe_strong_acc
            );
        }
        out
    }

    pub fn initial_probe(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.probe_strong_acc)
    }

    pub fn final_probe(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.probe_strong_acc)
    }
}

fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Labels each vector by its nearest of `classes` random unit centroids.
pub fn cluster_labels(inputs: &[Vec<f64>], classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let dim = inputs.first().map_or(0, Vec::len);
    let centroids: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    inputs
        .iter()
        .map(|x| {
            let score = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            (0..classes)
                .max_by(|&a, &b| score(&centroids[a]).total_cmp(&score(&centroids[b])))
                .unwrap_or(0)
        })
        .collect()
}

fn build_state(cfg: &TrainerConfig) -> Result<(TrainState, Vec<SynthBilingual>), RealignError> {
    let data: Vec<SynthBilingual> = (0..cfg.languages)
        .map(|l| {
            synth_bilingual(&SynthConfig {
                n_pairs: cfg.n_pairs,
                dim: cfg.dim,
                noise_sigma: cfg.noise_sigma,
                distractors_per_pair: cfg.distractors_per_pair,
                seed: cfg.seed.wrapping_add(l as u64),
            })
        })
        .collect::<Result<_, _>>()?;
    let labels = cluster_labels(&data[0].source, cfg.classes, &mut derived_rng(cfg.seed, 1));
    let blocks: Vec<_> = data
        .iter()
        .map(|d| (d.source.clone(), d.target.clone(), d.distractors.clone()))
        .collect();
    let mut state = TrainState::new(&blocks, cfg.distractors_per_pair, labels, cfg.classes, cfg.adam)?;
    state.temperature = cfg.temperature;
    Ok((state, data))
}

/// Runs the synthetic realignment experiment and records the probe trajectory.
pub fn train_realign_demo(cfg: &TrainerConfig) -> Result<Trajectory, RealignError> {
    cfg.validate()?;
    let (mut state, data) = build_state(cfg)?;
    let probes: Vec<Vec<WordPair>> = data
        .iter()
        .enumerate()
        .map(|(l, d)| sample_pairs(&d.pairs, cfg.probe_size, cfg.seed.wrapping_add(l as u64)))
        .collect::<Result<_, _>>()?;
    let probe = |state: &TrainState| -> Result<f64, RealignError> {
        let mut total = 0.0;
        for (l, p) in probes.iter().enumerate() {
            total += state.probe_accuracy(l, p)?;
        }
        Ok(total / probes.len() as f64)
    };

    let streams = (0..cfg.languages)
        .map(|l| {
            EpochBatches::new(cfg.n_pairs, cfg.batch_pairs, derived_rng(cfg.seed, 100 + l as u64))
                .map(move |pairs| BatchSelection { language: l, pairs })
        })
        .collect();
    let mut realign_batches = interleave(streams)?;
    let mut task_batches = EpochBatches::new(state.task_len(), cfg.task_batch, derived_rng(cfg.seed, 2));

    let mut traj = Trajectory::default();
    traj.rows.push(TrajectoryRow {
        step: 0,
        realign_loss: None,
        task_loss: None,
        probe_strong_acc: probe(&state)?,
    });

    let schedule = LinearSchedule::new(cfg.lr, cfg.steps, cfg.warmup_fraction);
    for k in 0..cfg.steps {
        let sel = realign_batches.next().ok_or(RealignError::AllStreamsEmpty)?;
        let task = match cfg.mode {
            TrainMode::Joint => task_batches.next(),
            TrainMode::Sequential => None,
        };
        let losses = joint_step(&mut state, Some(&sel), task.as_deref(), schedule.lr(k))?;
        traj.rows.push(TrajectoryRow {
            step: k + 1,
            realign_loss: losses.realign,
            task_loss: losses.task,
            probe_strong_acc: probe(&state)?,
        });
    }

    if cfg.mode == TrainMode::Sequential && cfg.task_steps > 0 {
        state.reset_optimizer();
        let schedule = LinearSchedule::new(cfg.lr, cfg.task_steps, cfg.warmup_fraction);
        for k in 0..cfg.task_steps {
            let task = task_batches.next();
            let losses = joint_step(&mut state, None, task.as_deref(), schedule.lr(k))?;
            traj.rows.push(TrajectoryRow {
                step: cfg.steps + k + 1,
                realign_loss: None,
                task_loss: losses.task,
                probe_strong_acc: probe(&state)?,
            });
        }
    }
    Ok(traj)
}
