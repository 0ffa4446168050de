//! The batch-style subcommands. Each writes its JSON to `out` and returns the
//! process exit code.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cmdtriage_core::eval::{
    accuracy3, auroc, class_counts, load_sagc, stratify, timing_metric_with, EvalError, MetricEntry, MetricsReport,
    SagcLabel, SagcRecord, StratifyKey, TimingVariant,
};
use cmdtriage_core::prompt::{GoalCommand, SceneDescription};
use cmdtriage_core::sim::{load_batch, run_batch_item, summarize, BatchOutcome, BatchSummary};
use cmdtriage_core::triage::{
    AnswerError, AnswerSource, DialogueState, DialogueStatus, QaTurn, ScriptedAnswers, TriageConfig, TriageError,
    TriagePipeline, TriageResult, ValidationRow,
};
use cmdtriage_core::uq::{self, EstimatorKind, UqError};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EngineConfig, LoadedConfig};
use crate::{exit_code, CliError, EXIT_CLEAR, OUTPUT_SCHEMA_VERSION};

#[derive(Debug, Clone, Args)]
pub struct TriageArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// The operator's command.
    #[arg(long)]
    pub goal: String,
    /// Scene description JSON.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Answer to feed a clarifying question; repeat for several rounds.
    #[arg(long = "answer")]
    pub answers: Vec<String>,
    /// Read answers to clarifying questions from stdin.
    #[arg(long, conflicts_with = "answers")]
    pub interactive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// AUROC of each estimator, certain vs uncertain.
    Uq,
    /// Three-way classification accuracy.
    Cls,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the dataset named in the config.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Where to write the report; defaults to results/<dataset>_<metric>.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report per group: robot_type, label or scene_id.
    #[arg(long)]
    pub stratify: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// JSON list of episodes.
    #[arg(long)]
    pub batch: PathBuf,
    /// Also write the NDJSON lines to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn effective(loaded: &LoadedConfig, seed: Option<u64>, epsilon: Option<f64>) -> Result<EngineConfig, CliError> {
    let mut config = loaded.config.clone();
    if let Some(seed) = seed {
        config.triage.seed = seed;
    }
    if let Some(epsilon) = epsilon {
        config.triage.epsilon = epsilon;
    }
    config.triage.validate()?;
    Ok(config)
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

struct StdinAnswers;

impl AnswerSource for StdinAnswers {
    fn answer(&mut self, question: &str, _state: &DialogueState) -> Result<String, AnswerError> {
        eprintln!("robot asks: {question}");
        eprint!("> ");
        let mut line = String::new();
        match std::io::stdin().lock().read_line(&mut line) {
            Ok(0) => Err(AnswerError("stdin closed".into())),
            Ok(_) => Ok(line.trim().to_string()),
            Err(e) => Err(AnswerError(e.to_string())),
        }
    }
}

#[derive(Serialize)]
struct DialogueSummary<'a> {
    status: DialogueStatus,
    rounds_used: usize,
    history: &'a [QaTurn],
    pending_question: Option<&'a str>,
}

#[derive(Serialize)]
struct TriageOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a EngineConfig,
    scene_path: &'a Path,
    goal: &'a GoalCommand,
    #[serde(flatten)]
    result: &'a TriageResult,
    dialogue: DialogueSummary<'a>,
}

/// Classify one goal, running clarification rounds while answers last.
pub fn cmd_triage(args: &TriageArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(&args.config)?;
    let config = effective(&loaded, args.seed, args.epsilon)?;
    let scene = SceneDescription::load(&args.scene)?;
    let pipeline = loaded.pipeline()?;

    let mut state = DialogueState::new(GoalCommand::new(args.goal.clone()), scene);
    let mut source: Box<dyn AnswerSource> = if args.interactive {
        Box::new(StdinAnswers)
    } else {
        Box::new(ScriptedAnswers::new(args.answers.clone()))
    };
    match pipeline.run_dialogue(&mut state, &config.triage, source.as_mut()) {
        Ok(()) => {}
        // out of answers: report the open question
        Err(TriageError::Answer(e)) if state.last_result.is_some() => {
            tracing::info!(reason = %e, "dialogue left open");
        }
        Err(e) => return Err(e.into()),
    }
    let result = state.last_result.as_ref().expect("dialogue ran at least once");
    write_json(
        out,
        &TriageOutput {
            schema_version: OUTPUT_SCHEMA_VERSION,
            command: "triage",
            config: &config,
            scene_path: &args.scene,
            goal: &state.goal,
            result,
            dialogue: DialogueSummary {
                status: state.status,
                rounds_used: state.rounds_used,
                history: &state.history,
                pending_question: state.pending_question.as_deref(),
            },
        },
    )?;
    Ok(exit_code(result.label))
}

fn dataset_path(loaded: &LoadedConfig, arg: Option<&Path>) -> Result<PathBuf, CliError> {
    arg.map(Path::to_path_buf)
        .or_else(|| loaded.dataset_path())
        .ok_or_else(|| CliError::Config("no dataset given on the command line or in the config".into()))
}

/// Sample every record once and score the sample set with every estimator.
pub fn uq_report(
    records: &[SagcRecord],
    pipeline: &TriagePipeline,
    config: &TriageConfig,
) -> Result<MetricsReport, CliError> {
    let with_probs = pipeline.backend().supports_token_probs();
    let config = TriageConfig {
        estimator: EstimatorKind::ContextSampling,
        collect_token_probs: with_probs,
        ..config.clone()
    };
    let per_row: Vec<Vec<Result<f64, UqError>>> = records
        .par_iter()
        .map(|r| {
            let estimate = pipeline
                .forked()
                .estimate_sigma(&GoalCommand::new(r.goal_text.clone()), &r.scene, &config)?;
            Ok(EstimatorKind::ALL
                .iter()
                .map(|&kind| uq::score(kind, &estimate.samples).map(|s| s.value))
                .collect())
        })
        .collect::<Result<_, CliError>>()?;

    let uncertain: Vec<bool> = records.iter().map(|r| r.label.is_uncertain()).collect();
    let mut report = MetricsReport::new(class_counts(records));
    for (column, kind) in EstimatorKind::ALL.iter().enumerate() {
        let entry = if kind.needs_token_probs() && !with_probs {
            MetricEntry::Unsupported {
                reason: "backend does not return token probabilities".into(),
            }
        } else {
            match per_row.iter().map(|row| row[column].as_ref().copied()).collect::<Result<Vec<f64>, _>>() {
                Err(&UqError::MissingTokenProbs) => MetricEntry::Unsupported {
                    reason: UqError::MissingTokenProbs.to_string(),
                },
                Err(e) => MetricEntry::Undefined { reason: e.to_string() },
                Ok(scores) => match auroc(&scores, &uncertain) {
                    Ok(value) => MetricEntry::Ok { value },
                    Err(e) => MetricEntry::Undefined { reason: e.to_string() },
                },
            }
        };
        report.auroc.insert(kind.as_str().to_string(), entry);
    }
    Ok(report)
}

/// Run the full cascade on every record and compare with the gold labels.
pub fn cls_report(
    records: &[SagcRecord],
    pipeline: &TriagePipeline,
    config: &TriageConfig,
    timing: TimingVariant,
) -> Result<(MetricsReport, Vec<TriageResult>), CliError> {
    let results: Vec<TriageResult> = records
        .par_iter()
        .map(|r| {
            pipeline
                .forked()
                .classify(&GoalCommand::new(r.goal_text.clone()), &r.scene, config)
        })
        .collect::<Result<_, _>>()?;
    let predicted: Vec<SagcLabel> = results.iter().map(|r| r.label.into()).collect();
    let gold: Vec<SagcLabel> = records.iter().map(|r| r.label).collect();
    let mut report = MetricsReport::new(class_counts(records));
    match accuracy3(&predicted, &gold) {
        Ok((acc, confusion)) => {
            report.accuracy3 = Some(acc);
            report.confusion = Some(confusion);
        }
        Err(EvalError::Empty) => {}
        Err(e) => return Err(e.into()),
    }
    let questioned: Vec<bool> = results.iter().map(|r| r.question.is_some()).collect();
    let ambiguous: Vec<bool> = gold.iter().map(|&g| g == SagcLabel::Ambiguous).collect();
    report.timing = timing_metric_with(&questioned, &ambiguous, timing).ok();
    Ok((report, results))
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    #[serde(flatten)]
    report: &'a MetricsReport,
    command: &'static str,
    metric: Metric,
    dataset: &'a Path,
    config: &'a EngineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    groups: Option<BTreeMap<String, MetricsReport>>,
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(&args.config)?;
    let config = effective(&loaded, args.seed, None)?;
    let key = args.stratify.as_deref().map(str::parse::<StratifyKey>).transpose()?;
    let dataset = dataset_path(&loaded, args.dataset.as_deref())?;
    let records = load_sagc(&dataset)?;
    let pipeline = loaded.pipeline()?;

    let report_for = |rows: &[SagcRecord]| -> Result<MetricsReport, CliError> {
        match args.metric {
            Metric::Uq => uq_report(rows, &pipeline, &config.triage),
            Metric::Cls => Ok(cls_report(rows, &pipeline, &config.triage, config.timing_variant)?.0),
        }
    };
    let report = report_for(&records)?;
    let groups = match key {
        Some(key) => Some(
            stratify(&records, key)
                .into_iter()
                .map(|(name, rows)| Ok((name, report_for(&rows)?)))
                .collect::<Result<BTreeMap<_, _>, CliError>>()?,
        ),
        None => None,
    };
    eprint!("{}", report.render_table());

    let output = EvalOutput {
        report: &report,
        command: "eval",
        metric: args.metric,
        dataset: &dataset,
        config: &config,
        groups,
    };
    let path = args.out.clone().unwrap_or_else(|| {
        let stem = dataset.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        let metric = match args.metric {
            Metric::Uq => "uq",
            Metric::Cls => "cls",
        };
        PathBuf::from("results").join(format!("{stem}_{metric}.json"))
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_json(&mut file, &output)?;
    write_json(out, &output)?;
    Ok(EXIT_CLEAR)
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a EngineConfig,
    batch: &'a Path,
    summary: &'a BatchSummary,
}

/// Run every batch episode and print one NDJSON line each, then a summary
/// line. Per-episode failures are recorded in their line.
pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(&args.config)?;
    let config = effective(&loaded, None, None)?;
    let batch = load_batch(&args.batch)?;
    let pipeline = loaded.pipeline()?;
    let outcomes: Vec<BatchOutcome> = batch
        .par_iter()
        .enumerate()
        .map(|(i, item)| run_batch_item(i, item, &pipeline, &config.triage))
        .collect();
    let summary = summarize(&outcomes);

    let mut lines = Vec::with_capacity(outcomes.len() + 1);
    for o in &outcomes {
        lines.push(serde_json::to_string(o)?);
    }
    lines.push(serde_json::to_string(&SimulateSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        command: "simulate",
        config: &config,
        batch: &args.batch,
        summary: &summary,
    })?);
    let text = lines.join("\n") + "\n";
    if let Some(path) = &args.out {
        std::fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
    }
    out.write_all(text.as_bytes())?;
    Ok(EXIT_CLEAR)
}

#[derive(Serialize)]
struct CalibrateOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a EngineConfig,
    dataset: &'a Path,
    epsilon: f64,
    youden_j: f64,
    /// Context-sampling AUROC on the same scores.
    auroc: f64,
    scores: &'a [f64],
}

/// Pick epsilon by Youden's J over a labelled dataset.
pub fn cmd_calibrate(args: &CalibrateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let loaded = LoadedConfig::load(&args.config)?;
    let config = effective(&loaded, args.seed, None)?;
    let dataset = dataset_path(&loaded, args.dataset.as_deref())?;
    let records = load_sagc(&dataset)?;
    let pipeline = loaded.pipeline()?;
    let rows: Vec<ValidationRow> = records
        .iter()
        .map(|r| ValidationRow {
            goal: GoalCommand::new(r.goal_text.clone()),
            scene: r.scene.clone(),
            uncertain: r.label.is_uncertain(),
        })
        .collect();
    let calibration = pipeline.calibrate_epsilon(&rows, &config.triage)?;
    let labels: Vec<bool> = rows.iter().map(|r| r.uncertain).collect();
    write_json(
        out,
        &CalibrateOutput {
            schema_version: OUTPUT_SCHEMA_VERSION,
            command: "calibrate",
            config: &config,
            dataset: &dataset,
            epsilon: calibration.choice.epsilon,
            youden_j: calibration.choice.j,
            auroc: auroc(&calibration.scores, &labels)?,
            scores: &calibration.scores,
        },
    )?;
    Ok(EXIT_CLEAR)
}
