//! Cross-lingual transfer score, relative alignment variation, and run-record
//! tables that feed the correlation analysis.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::alignment_eval::Mode;

pub const RUN_COLUMNS: [&str; 10] = [
    "model",
    "task",
    "language",
    "seed",
    "stage",
    "layer",
    "alignment_weak",
    "alignment_strong",
    "metric_en",
    "metric_tgt",
];

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("English metric is zero; transfer score undefined")]
    ZeroDenominator,
    #[error("baseline alignment is zero; relative variation undefined")]
    ZeroBaseline,
    #[error("{field} = {value} outside [0, 1]")]
    RangeError { field: &'static str, value: f64 },
    #[error("row {row}: {field} out of range")]
    RowRange { row: usize, field: &'static str },
    #[error("row {row}: cannot parse {field}: {value:?}")]
    Parse {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("row {0}: duplicate (model, task, language, seed, stage, layer)")]
    DuplicateKey(usize),
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("selector matches only {0} records (need at least 3)")]
    TooFewPoints(usize),
    #[error("row {row}: {source}")]
    Record {
        row: usize,
        #[source]
        source: Box<MetricError>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_unit(field: &'static str, value: f64) -> Result<(), MetricError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MetricError::RangeError { field, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferScore {
    pub m_en: f64,
    pub m_tgt: f64,
    pub score: f64,
}

/// Relative difference of the target-language metric to the English one; in [-1, +inf).
pub fn ctl_score(m_en: f64, m_tgt: f64) -> Result<TransferScore, MetricError> {
    check_unit("m_en", m_en)?;
    check_unit("m_tgt", m_tgt)?;
    if m_en == 0.0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(TransferScore {
        m_en,
        m_tgt,
        score: (m_tgt - m_en) / m_en,
    })
}

/// Relative change of an alignment accuracy, built the same way as [`ctl_score`].
pub fn relative_variation(before: f64, after: f64) -> Result<f64, MetricError> {
    check_unit("before", before)?;
    check_unit("after", after)?;
    if before == 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok((after - before) / before)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Before,
    After,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Before => "before",
            Stage::After => "after",
        })
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "before" => Ok(Stage::Before),
            "after" => Ok(Stage::After),
            _ => Err(format!("unknown stage {s:?} (expected before or after)")),
        }
    }
}

/// Layer label: non-negative indices count from the embedding layer, negative
/// ones from the top (`last` = -1, `penult` = -2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerRef(pub i64);

impl fmt::Display for LayerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            -1 => f.write_str("last"),
            -2 => f.write_str("penult"),
            k => write!(f, "{k}"),
        }
    }
}

impl FromStr for LayerRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last" => Ok(LayerRef(-1)),
            "penult" => Ok(LayerRef(-2)),
            _ => s.parse().map(LayerRef).map_err(|_| format!("bad layer {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub model: String,
    pub task: String,
    pub language: String,
    pub seed: u64,
    pub stage: Stage,
    pub layer: LayerRef,
    pub alignment_weak: f64,
    pub alignment_strong: f64,
    pub metric_en: f64,
    pub metric_tgt: f64,
}

impl RunRecord {
    pub fn alignment(&self, kind: Mode) -> f64 {
        match kind {
            Mode::Weak => self.alignment_weak,
            Mode::Strong => self.alignment_strong,
        }
    }

    fn key(&self) -> (&str, &str, &str, u64, Stage, LayerRef) {
        (
            &self.model,
            &self.task,
            &self.language,
            self.seed,
            self.stage,
            self.layer,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTable {
    records: Vec<RunRecord>,
}

impl RunTable {
    pub fn new(records: Vec<RunRecord>) -> Result<Self, MetricError> {
        let mut seen = HashSet::new();
        for (n, r) in records.iter().enumerate() {
            let row = n + 1;
            for (field, v) in [
                ("alignment_weak", r.alignment_weak),
                ("alignment_strong", r.alignment_strong),
                ("metric_en", r.metric_en),
                ("metric_tgt", r.metric_tgt),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(MetricError::RowRange { row, field });
                }
            }
            if !seen.insert(r.key()) {
                return Err(MetricError::DuplicateKey(row));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Percentages (values above 1.5) are rescaled to [0, 1].
fn normalize_metric(v: f64) -> f64 {
    if v > 1.5 {
        v / 100.0
    } else {
        v
    }
}

pub fn parse_run_table<R: io::Read>(reader: R) -> Result<RunTable, MetricError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col = [0usize; 10];
    for (k, name) in RUN_COLUMNS.iter().enumerate() {
        col[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or(MetricError::MissingColumn(name))?;
    }
    let mut records = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec?;
        let field = |k: usize| rec.get(col[k]).unwrap_or("");
        let parse_err = |k: usize| MetricError::Parse {
            row,
            field: RUN_COLUMNS[k],
            value: field(k).to_owned(),
        };
        let num = |k: usize| -> Result<f64, MetricError> {
            let v: f64 = field(k).parse().map_err(|_| parse_err(k))?;
            if !v.is_finite() {
                return Err(parse_err(k));
            }
            Ok(normalize_metric(v))
        };
        records.push(RunRecord {
            model: field(0).to_owned(),
            task: field(1).to_owned(),
            language: field(2).to_owned(),
            seed: field(3).parse().map_err(|_| parse_err(3))?,
            stage: field(4).parse().map_err(|_| parse_err(4))?,
            layer: field(5).parse().map_err(|_| parse_err(5))?,
            alignment_weak: num(6)?,
            alignment_strong: num(7)?,
            metric_en: num(8)?,
            metric_tgt: num(9)?,
        });
    }
    RunTable::new(records)
}

pub fn load_run_table(path: &Path) -> Result<RunTable, MetricError> {
    parse_run_table(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selector {
    pub task: String,
    pub layer: LayerRef,
    pub stage: Stage,
    pub kind: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPoint {
    pub model: String,
    pub language: String,
    pub seed: u64,
    /// Alignment accuracy.
    pub x: f64,
    /// Transfer score.
    pub y: f64,
}

/// One (alignment, transfer) point per matching record, ordered by (model, language, seed).
pub fn correlation_dataset(table: &RunTable, sel: &Selector) -> Result<Vec<CorrelationPoint>, MetricError> {
    let mut points = table
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.task == sel.task && r.layer == sel.layer && r.stage == sel.stage)
        .map(|(n, r)| {
            let ctl = ctl_score(r.metric_en, r.metric_tgt).map_err(|e| MetricError::Record {
                row: n + 1,
                source: Box::new(e),
            })?;
            Ok(CorrelationPoint {
                model: r.model.clone(),
                language: r.language.clone(),
                seed: r.seed,
                x: r.alignment(sel.kind),
                y: ctl.score,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    if points.len() < 3 {
        return Err(MetricError::TooFewPoints(points.len()));
    }
    points.sort_by(|a, b| (&a.model, &a.language, a.seed).cmp(&(&b.model, &b.language, b.seed)));
    Ok(points)
}

/// Distinct (task, layer, stage) combinations present in the table, sorted.
pub fn selectors(table: &RunTable) -> Vec<(String, LayerRef, Stage)> {
    let mut v: Vec<_> = table
        .records()
        .iter()
        .map(|r| (r.task.clone(), r.layer, r.stage))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationRow {
    pub model: String,
    pub task: String,
    pub language: String,
    pub seed: u64,
    pub layer: LayerRef,
    pub kind: Mode,
    pub before: f64,
    pub after: f64,
    pub variation: f64,
}

/// Matches before/after records sharing (model, task, language, seed, layer)
/// and computes the relative alignment variation for the given kind.
pub fn alignment_variation(table: &RunTable, kind: Mode) -> Result<Vec<VariationRow>, MetricError> {
    type Key<'a> = (&'a str, &'a str, &'a str, u64, LayerRef);
    let mut groups: BTreeMap<Key, [Option<f64>; 2]> = BTreeMap::new();
    for r in table.records() {
        let slot = groups
            .entry((&r.model, &r.task, &r.language, r.seed, r.layer))
            .or_default();
        slot[r.stage as usize] = Some(r.alignment(kind));
    }
    groups
        .into_iter()
        .filter_map(|((model, task, language, seed, layer), s)| match s {
            [Some(before), Some(after)] => Some((model, task, language, seed, layer, before, after)),
            _ => None,
        })
        .map(|(model, task, language, seed, layer, before, after)| {
            Ok(VariationRow {
                model: model.to_owned(),
                task: task.to_owned(),
                language: language.to_owned(),
                seed,
                layer,
                kind,
                before,
                after,
                variation: relative_variation(before, after)?,
            })
        })
        .collect()
}
