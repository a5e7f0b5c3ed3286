//! Command-line front end. Every subcommand is a pure function of its flags,
//! input files and `--seed`; CSV outputs start with a `# seed=N` line.

pub mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use thiserror::Error;

use crate::alignment_eval::{
    eval_alignment, eval_by_layer, sample_pairs, Direction, EvalConfig, Mode, DEFAULT_SAMPLE_SIZE,
};
use crate::corpus_io::{
    load_lexicon, load_parallel_corpus, load_pharaoh, read_pairs, write_atomic, write_pairs, CorpusError, Provenance,
};
use crate::embedding_store::{read_embx, validate_against, write_embx, EmbxError};
use crate::pair_extraction::{
    extract_pairs_lexicon, pairs_from_links, symmetrize_corpus, ExtractionError, ExtractionOptions,
};
use crate::realignment::data::{mat_t_vec, to_embedding_set};
use crate::realignment::trainer::{train_realign_demo, TrainMode, TrainerConfig};
use crate::realignment::{synth_bilingual, RealignError, SynthConfig};
use crate::stats::{correlate, CorrelationConfig, StatsError, DEFAULT_ALPHA, DEFAULT_PERMUTATIONS, DEFAULT_RESAMPLES};
use crate::transfer_metrics::{
    alignment_variation, correlation_dataset, ctl_score, load_run_table, selectors, LayerRef, MetricError, Selector,
    Stage,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or bad input data; exit code 2.
    #[error("{0}")]
    Input(String),
    /// Anything else, including failed writes; exit code 1.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

macro_rules! input_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        })*
    };
}

input_errors!(
    CorpusError,
    ExtractionError,
    EmbxError,
    crate::alignment_eval::EvalError,
    MetricError,
    StatsError
);

impl From<RealignError> for CliError {
    fn from(e: RealignError) -> Self {
        match e {
            RealignError::InvalidConfig(_) | RealignError::LabelOutOfRange { .. } => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "xlalign",
    version,
    about = "Multilingual alignment measurement and realignment toolkit"
)]
pub struct Cli {
    /// Seed for every random choice of the invocation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract translated word pairs from a parallel corpus.
    ExtractPairs(ExtractArgs),
    /// Weak/strong nearest-neighbor alignment accuracy of an EMBX file.
    EvalAlignment(EvalArgs),
    /// Cross-lingual transfer scores, from two metrics or a run-record CSV.
    Ctl(CtlArgs),
    /// Relative alignment variation between before/after records.
    RelVar(RelVarArgs),
    /// Spearman correlation of alignment with transfer, with p-value and BCa interval.
    Correlate(CorrelateArgs),
    /// Contrastive realignment on synthetic bilingual embeddings.
    RealignDemo(RealignArgs),
    /// Write a synthetic pair TSV and matching EMBX file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["lexicon", "pharaoh_fwd"])))]
pub struct ExtractArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long, default_value = "src")]
    pub src_lang: String,
    #[arg(long, default_value = "tgt")]
    pub tgt_lang: String,
    #[arg(long, conflicts_with_all = ["pharaoh_fwd", "pharaoh_bwd"])]
    pub lexicon: Option<PathBuf>,
    /// Source-to-target alignments; used alone, or symmetrized with --pharaoh-bwd.
    #[arg(long)]
    pub pharaoh_fwd: Option<PathBuf>,
    #[arg(long, requires = "pharaoh_fwd")]
    pub pharaoh_bwd: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lowercase: bool,
    #[arg(long)]
    pub max_per_sentence: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("layers").args(["layer", "all_layers"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub embx: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub all_layers: bool,
    #[arg(long, default_value = "strong")]
    pub mode: Mode,
    #[arg(long, default_value = "src-tgt")]
    pub direction: Direction,
    /// Number of pairs sampled.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["runs", "m_en"])))]
pub struct CtlArgs {
    #[arg(long)]
    pub runs: Option<PathBuf>,
    #[arg(long, requires = "m_tgt")]
    pub m_en: Option<f64>,
    #[arg(long, requires = "m_en")]
    pub m_tgt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RelVarArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, default_value = "strong")]
    pub kind: Mode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub layer: Option<LayerRef>,
    #[arg(long)]
    pub stage: Option<Stage>,
    #[arg(long, default_value = "strong")]
    pub kind: Mode,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scatter plot of the selected records; the selection must be a single (task, layer, stage).
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RealignArgs {
    #[arg(long, default_value = "joint")]
    pub mode: TrainMode,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Task-only steps after realignment in sequential mode.
    #[arg(long, default_value_t = 100)]
    pub task_steps: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 64)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub distractors: usize,
    #[arg(long, default_value_t = 1)]
    pub languages: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub pairs: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Undo the rotation so the target space lines up with the source space.
    #[arg(long)]
    pub aligned: bool,
    #[arg(long)]
    pub pairs_out: PathBuf,
    #[arg(long)]
    pub embx_out: PathBuf,
}

fn seed_line(seed: u64) -> String {
    format!("# seed={seed}\n")
}

fn emit(out: Option<&Path>, text: &str) -> Result<String, CliError> {
    match out {
        Some(p) => {
            write_atomic(p, text.as_bytes()).map_err(|e| CliError::Internal(format!("{}: {e}", p.display())))?;
            Ok(String::new())
        }
        None => Ok(text.to_owned()),
    }
}

/// Runs a parsed command; returns what should go to stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let seed = cli.seed;
    match &cli.command {
        Command::ExtractPairs(a) => extract(a),
        Command::EvalAlignment(a) => eval(a, seed),
        Command::Ctl(a) => ctl(a, seed),
        Command::RelVar(a) => rel_var(a, seed),
        Command::Correlate(a) => correlate_cmd(a, seed),
        Command::RealignDemo(a) => realign(a, seed),
        Command::Synth(a) => synth(a, seed),
    }
}

fn extract(a: &ExtractArgs) -> Result<String, CliError> {
    let corpus = load_parallel_corpus(&a.src, &a.tgt, &a.src_lang, &a.tgt_lang, false)?;
    let opts = ExtractionOptions {
        lowercase: a.lowercase,
        max_pairs_per_sentence: a.max_per_sentence,
    };
    let pairs = match (&a.lexicon, &a.pharaoh_fwd, &a.pharaoh_bwd) {
        (Some(lex), None, None) => {
            let lexicon = load_lexicon(lex, &a.src_lang, &a.tgt_lang, a.lowercase)?;
            extract_pairs_lexicon(&corpus, &lexicon, opts)?
        }
        (None, Some(fwd), bwd) => {
            let forward = load_pharaoh(fwd, &corpus)?;
            let links = match bwd {
                Some(b) => symmetrize_corpus(&corpus, &forward, &load_pharaoh(b, &corpus)?)?,
                None => forward,
            };
            let mut set = pairs_from_links(&corpus, &links)?;
            if let Some(cap) = a.max_per_sentence {
                set = cap_per_sentence(set, cap)?;
            }
            set
        }
        _ => {
            return Err(CliError::Input(
                "choose exactly one of --lexicon or --pharaoh-fwd".into(),
            ))
        }
    };
    write_pairs(&pairs, &a.out)?;
    Ok(format!("{} pairs\n", pairs.len()))
}

fn cap_per_sentence(set: crate::corpus_io::WordPairSet, cap: usize) -> Result<crate::corpus_io::WordPairSet, CliError> {
    if cap == 0 {
        return Err(ExtractionError::InvalidCap.into());
    }
    let provenance = set.provenance;
    let mut kept = Vec::new();
    let mut last = (usize::MAX, 0);
    for p in set.pairs() {
        if p.sentence != last.0 {
            last = (p.sentence, 0);
        }
        if last.1 < cap {
            last.1 += 1;
            let mut p = p.clone();
            p.pair_id = kept.len() as u32;
            kept.push(p);
        }
    }
    Ok(crate::corpus_io::WordPairSet::new(provenance, kept)?)
}

fn eval(a: &EvalArgs, seed: u64) -> Result<String, CliError> {
    let set = read_embx(&a.embx)?;
    let pairs = read_pairs(&a.pairs, Provenance::Lexicon)?;
    let report = validate_against(&set, &pairs);
    if let Some(id) = report.missing.first() {
        return Err(CliError::Input(format!(
            "{}: no vectors for pair_id {id} ({} missing)",
            a.embx.display(),
            report.missing.len()
        )));
    }
    let sample = sample_pairs(&pairs, a.n, seed)?;
    let cfg = EvalConfig {
        n_sample: a.n,
        seed,
        direction: a.direction,
        mode: a.mode,
        layer: a.layer.unwrap_or(0),
    };
    let scores = if a.all_layers {
        eval_by_layer(&set, &sample, &cfg)?
    } else {
        vec![eval_alignment(&set, &sample, &cfg)?]
    };
    let mut text = seed_line(seed);
    text.push_str("layer,direction,mode,n,accuracy\n");
    for s in scores {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            s.layer, s.direction, s.mode, s.n_evaluated, s.accuracy
        );
    }
    emit(a.out.as_deref(), &text)
}

fn ctl(a: &CtlArgs, seed: u64) -> Result<String, CliError> {
    let mut text = seed_line(seed);
    if let (Some(m_en), Some(m_tgt)) = (a.m_en, a.m_tgt) {
        text.push_str("metric_en,metric_tgt,ctl\n");
        let _ = writeln!(text, "{m_en},{m_tgt},{}", ctl_score(m_en, m_tgt)?.score);
    } else if let Some(runs) = &a.runs {
        let table = load_run_table(runs)?;
        text.push_str("model,task,language,seed,stage,layer,metric_en,metric_tgt,ctl\n");
        for (n, r) in table.records().iter().enumerate() {
            let s = ctl_score(r.metric_en, r.metric_tgt).map_err(|e| CliError::Input(format!("row {}: {e}", n + 1)))?;
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{}",
                r.model, r.task, r.language, r.seed, r.stage, r.layer, r.metric_en, r.metric_tgt, s.score
            );
        }
    }
    emit(a.out.as_deref(), &text)
}

fn rel_var(a: &RelVarArgs, seed: u64) -> Result<String, CliError> {
    let table = load_run_table(&a.runs)?;
    let rows = alignment_variation(&table, a.kind)?;
    let mut text = seed_line(seed);
    text.push_str("model,task,language,seed,layer,kind,before,after,variation\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            r.model, r.task, r.language, r.seed, r.layer, r.kind, r.before, r.after, r.variation
        );
    }
    emit(a.out.as_deref(), &text)
}

fn correlate_cmd(a: &CorrelateArgs, seed: u64) -> Result<String, CliError> {
    let table = load_run_table(&a.runs)?;
    let chosen: Vec<Selector> = selectors(&table)
        .into_iter()
        .filter(|(t, l, s)| {
            a.task.as_ref().is_none_or(|x| x == t) && a.layer.is_none_or(|x| x == *l) && a.stage.is_none_or(|x| x == *s)
        })
        .map(|(task, layer, stage)| Selector {
            task,
            layer,
            stage,
            kind: a.kind,
        })
        .collect();
    if chosen.is_empty() {
        return Err(CliError::Input("no records match the selection".into()));
    }
    if a.svg.is_some() && chosen.len() != 1 {
        return Err(CliError::Input(format!(
            "--svg needs a single (task, layer, stage); the selection has {}",
            chosen.len()
        )));
    }
    let cfg = CorrelationConfig {
        permutations: a.permutations,
        resamples: a.resamples,
        alpha: a.alpha,
        seed,
    };
    let mut text = seed_line(seed);
    text.push_str("task,layer,stage,kind,n,rho,p,ci_low,ci_high,B,seed\n");
    for sel in &chosen {
        let points = correlation_dataset(&table, sel)?;
        let x: Vec<f64> = points.iter().map(|p| p.x).collect();
        let y: Vec<f64> = points.iter().map(|p| p.y).collect();
        let r = correlate(&x, &y, &cfg)
            .map_err(|e| CliError::Input(format!("{} {} {}: {e}", sel.task, sel.layer, sel.stage)))?;
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{}",
            sel.task, sel.layer, sel.stage, sel.kind, r.n, r.rho, r.p_value, r.ci_low, r.ci_high, r.resamples, r.seed
        );
        if let Some(path) = &a.svg {
            let title = format!("{} / layer {} / {}", sel.task, sel.layer, sel.stage);
            let plot = svg::scatter(&points, &title, &format!("{} alignment", sel.kind), "CTL score");
            write_atomic(path, plot.as_bytes()).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        }
    }
    emit(a.out.as_deref(), &text)
}

fn realign(a: &RealignArgs, seed: u64) -> Result<String, CliError> {
    let cfg = TrainerConfig {
        mode: a.mode,
        steps: a.steps,
        task_steps: a.task_steps,
        lr: a.lr,
        batch_pairs: a.batch,
        languages: a.languages,
        n_pairs: a.pairs,
        dim: a.dim,
        noise_sigma: a.noise,
        distractors_per_pair: a.distractors,
        probe_size: a.pairs,
        seed,
        ..Default::default()
    };
    let traj = train_realign_demo(&cfg)?;
    let text = seed_line(seed) + &traj.to_csv();
    emit(a.out.as_deref(), &text)
}

fn synth(a: &SynthArgs, seed: u64) -> Result<String, CliError> {
    let data = synth_bilingual(&SynthConfig {
        n_pairs: a.pairs,
        dim: a.dim,
        noise_sigma: a.noise,
        distractors_per_pair: 0,
        seed,
    })?;
    let embeddings = if a.aligned {
        let target: Vec<Vec<f64>> = data.target.iter().map(|t| mat_t_vec(&data.rotation, t)).collect();
        to_embedding_set(&data.source, &target, "synthetic")?
    } else {
        data.embeddings
    };
    write_pairs(&data.pairs, &a.pairs_out)?;
    write_embx(&embeddings, &a.embx_out)?;
    Ok(format!("{} pairs\n", data.pairs.len()))
}
