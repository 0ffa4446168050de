//! Dataset loading and metrics: AUROC, 3-way accuracy, question timing and
//! success-rate gap.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::SceneDescription;
use crate::triage::TriageLabel;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("both positive and negative examples are required (got {positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("score {index} is not a number")]
    NotANumber { index: usize },
    #[error("unknown stratification key {0:?} (expected robot_type, label or scene_id)")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SagcLabel {
    Certain,
    Ambiguous,
    Infeasible,
}

impl SagcLabel {
    pub const ALL: [SagcLabel; 3] = [SagcLabel::Certain, SagcLabel::Ambiguous, SagcLabel::Infeasible];

    pub fn as_str(self) -> &'static str {
        match self {
            SagcLabel::Certain => "certain",
            SagcLabel::Ambiguous => "ambiguous",
            SagcLabel::Infeasible => "infeasible",
        }
    }

    /// Ambiguous and infeasible both count as uncertain.
    pub fn is_uncertain(self) -> bool {
        self != SagcLabel::Certain
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl From<TriageLabel> for SagcLabel {
    fn from(label: TriageLabel) -> Self {
        match label {
            TriageLabel::Clear => SagcLabel::Certain,
            TriageLabel::Ambiguous => SagcLabel::Ambiguous,
            TriageLabel::Infeasible => SagcLabel::Infeasible,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotType {
    Cook,
    Clean,
    Massage,
    #[serde(other)]
    Other,
}

impl RobotType {
    pub fn as_str(self) -> &'static str {
        match self {
            RobotType::Cook => "cook",
            RobotType::Clean => "clean",
            RobotType::Massage => "massage",
            RobotType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SagcRecord {
    pub goal_text: String,
    pub robot_type: RobotType,
    pub scene: SceneDescription,
    pub label: SagcLabel,
    pub scene_id: String,
}

/// Read a newline-delimited JSON dataset. Blank lines are skipped; the first
/// malformed line aborts the load.
pub fn load_sagc(path: impl AsRef<Path>) -> Result<Vec<SagcRecord>, EvalError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let io = |source| EvalError::Io {
        path: shown.clone(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SagcRecord = serde_json::from_str(&line).map_err(|e| EvalError::Record {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.goal_text.trim().is_empty() {
            return Err(EvalError::Record {
                path: shown.clone(),
                line: i + 1,
                message: "goal_text is empty".into(),
            });
        }
        records.push(record);
    }
    tracing::info!(path = %shown, counts = ?class_counts(&records), "loaded dataset");
    Ok(records)
}

pub fn class_counts(records: &[SagcRecord]) -> BTreeMap<SagcLabel, usize> {
    let mut counts: BTreeMap<SagcLabel, usize> = SagcLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for r in records {
        *counts.entry(r.label).or_default() += 1;
    }
    counts
}

/// Rank-based AUROC with mid-ranks for ties; positives are expected to score
/// higher.
pub fn auroc(scores: &[f64], is_positive: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != is_positive.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: is_positive.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NotANumber { index });
    }
    let positives = is_positive.iter().filter(|&&p| p).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share their average, 1-based
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| is_positive[i]).count();
        positive_rank_sum += mid_rank * tied_positives as f64;
        start = end;
    }
    let n_pos = positives as f64;
    let u = positive_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// `counts[gold][predicted]`, indexed certain, ambiguous, infeasible.
    pub counts: [[usize; 3]; 3],
}

impl Confusion {
    pub fn get(&self, gold: SagcLabel, predicted: SagcLabel) -> usize {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn trace(&self) -> usize {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, gold: SagcLabel) -> usize {
        self.counts[gold.index()].iter().sum()
    }
}

pub fn accuracy3(predictions: &[SagcLabel], gold: &[SagcLabel]) -> Result<(f64, Confusion), EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut confusion = Confusion { counts: [[0; 3]; 3] };
    for (p, g) in predictions.iter().zip(gold) {
        confusion.counts[g.index()][p.index()] += 1;
    }
    Ok((confusion.trace() as f64 / gold.len() as f64, confusion))
}

/// How the question-timing metric is normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingVariant {
    /// Share of ambiguous rows that got a question minus the share of the
    /// other rows that got one.
    #[default]
    PerClass,
    /// Among rows that got a question: share that were ambiguous minus share
    /// that were not.
    PerQuestion,
}

impl FromStr for TimingVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_class" | "per-class" => Ok(TimingVariant::PerClass),
            "per_question" | "per-question" => Ok(TimingVariant::PerQuestion),
            other => Err(format!("unknown timing variant {other:?}")),
        }
    }
}

pub fn timing_metric(questioned: &[bool], is_ambiguous: &[bool]) -> Result<f64, EvalError> {
    timing_metric_with(questioned, is_ambiguous, TimingVariant::PerClass)
}

pub fn timing_metric_with(questioned: &[bool], is_ambiguous: &[bool], variant: TimingVariant) -> Result<f64, EvalError> {
    if questioned.len() != is_ambiguous.len() {
        return Err(EvalError::LengthMismatch {
            left: questioned.len(),
            right: is_ambiguous.len(),
        });
    }
    let count = |q: bool, a: bool| {
        questioned
            .iter()
            .zip(is_ambiguous)
            .filter(|&(&qi, &ai)| qi == q && ai == a)
            .count() as f64
    };
    let (q_amb, q_other) = (count(true, true), count(true, false));
    match variant {
        TimingVariant::PerClass => {
            let ambiguous = is_ambiguous.iter().filter(|&&a| a).count();
            let others = is_ambiguous.len() - ambiguous;
            if ambiguous == 0 || others == 0 {
                return Err(EvalError::SingleClass {
                    positives: ambiguous,
                    negatives: others,
                });
            }
            Ok(q_amb / ambiguous as f64 - q_other / others as f64)
        }
        TimingVariant::PerQuestion => {
            let asked = q_amb + q_other;
            if asked == 0.0 {
                return Err(EvalError::Empty);
            }
            Ok((q_amb - q_other) / asked)
        }
    }
}

/// Success-rate change in percentage points.
pub fn success_gap(before: &[bool], after: &[bool]) -> Result<f64, EvalError> {
    if before.len() != after.len() {
        return Err(EvalError::LengthMismatch {
            left: before.len(),
            right: after.len(),
        });
    }
    if before.is_empty() {
        return Err(EvalError::Empty);
    }
    let rate = |v: &[bool]| v.iter().filter(|&&s| s).count() as f64 / v.len() as f64;
    Ok((rate(after) - rate(before)) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratifyKey {
    RobotType,
    Label,
    SceneId,
}

impl FromStr for StratifyKey {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "robot_type" => Ok(StratifyKey::RobotType),
            "label" => Ok(StratifyKey::Label),
            "scene_id" => Ok(StratifyKey::SceneId),
            other => Err(EvalError::UnknownKey(other.to_string())),
        }
    }
}

/// Partition records by key, preserving input order inside each group.
pub fn stratify(records: &[SagcRecord], by: StratifyKey) -> BTreeMap<String, Vec<SagcRecord>> {
    let mut groups: BTreeMap<String, Vec<SagcRecord>> = BTreeMap::new();
    for r in records {
        let key = match by {
            StratifyKey::RobotType => r.robot_type.as_str().to_string(),
            StratifyKey::Label => r.label.as_str().to_string(),
            StratifyKey::SceneId => r.scene_id.clone(),
        };
        groups.entry(key).or_default().push(r.clone());
    }
    groups
}

/// One metric cell: a value, or the reason there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MetricEntry {
    Ok { value: f64 },
    Unsupported { reason: String },
    Undefined { reason: String },
}

impl MetricEntry {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricEntry::Ok { value } => Some(*value),
            _ => None,
        }
    }

    fn cell(&self) -> String {
        match self {
            MetricEntry::Ok { value } => format!("{value:.4}"),
            MetricEntry::Unsupported { .. } => "unsupported".into(),
            MetricEntry::Undefined { .. } => "undefined".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    /// Rows per gold class.
    pub n: BTreeMap<SagcLabel, usize>,
    /// AUROC per estimator, certain vs uncertain.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub auroc: BTreeMap<String, MetricEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<f64>,
    /// Success-rate gap on ambiguous episodes, percentage points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_gap: Option<f64>,
}

impl MetricsReport {
    pub fn new(n: BTreeMap<SagcLabel, usize>) -> Self {
        Self {
            schema_version: METRICS_SCHEMA_VERSION,
            n,
            auroc: BTreeMap::new(),
            accuracy3: None,
            confusion: None,
            timing: None,
            a_gap: None,
        }
    }

    /// Aligned two-column text rendering.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        for (label, count) in &self.n {
            rows.push((format!("n[{}]", label.as_str()), count.to_string()));
        }
        for (name, entry) in &self.auroc {
            rows.push((format!("auroc[{name}]"), entry.cell()));
        }
        if let Some(acc) = self.accuracy3 {
            rows.push(("accuracy3".into(), format!("{acc:.4}")));
        }
        if let Some(t) = self.timing {
            rows.push(("timing".into(), format!("{t:.4}")));
        }
        if let Some(g) = self.a_gap {
            rows.push(("a_gap".into(), format!("{g:+.1}")));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        if let Some(c) = &self.confusion {
            let _ = writeln!(out, "\nconfusion (rows gold, columns predicted)");
            let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>10}", "", "certain", "ambiguous", "infeasible");
            for g in SagcLabel::ALL {
                let r = c.counts[g.index()];
                let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>10}", g.as_str(), r[0], r[1], r[2]);
            }
        }
        out
    }
}
