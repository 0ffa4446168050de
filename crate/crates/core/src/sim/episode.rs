//! Running triage dialogues against the symbolic world.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::task::{check_success, oracle_answer, TaskCategory, TaskSpec, TemplateId, UNINFORMATIVE_ANSWER};
use super::world::{Action, TabletopState};
use super::SimError;
use crate::eval::{success_gap, timing_metric};
use crate::prompt::GoalCommand;
use crate::triage::{
    AnswerError, AnswerSource, DialogueState, QaTurn, TranscriptEntry, TriageConfig, TriageLabel, TriagePipeline,
};

pub const DEFAULT_ITEMS: [&str; 4] = ["coke", "water bottle", "apple", "sponge"];
pub const DEFAULT_PEOPLE: [&str; 2] = ["alice", "bob"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub template_id: TemplateId,
    pub goal: String,
    pub gold: TaskCategory,
    pub seed: u64,
    pub budget: usize,
    pub label: Option<TriageLabel>,
    pub sigma: Option<f64>,
    pub asked_question: bool,
    pub questions: Vec<QaTurn>,
    pub actions: Vec<Action>,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub transcript: Vec<TranscriptEntry>,
}

struct Oracle<'a>(&'a TaskSpec);

impl AnswerSource for Oracle<'_> {
    fn answer(&mut self, question: &str, _state: &DialogueState) -> Result<String, AnswerError> {
        if !self.0.is_ambiguous() {
            return Ok(UNINFORMATIVE_ANSWER.to_string());
        }
        oracle_answer(question, self.0).map_err(|e| AnswerError(e.to_string()))
    }
}

fn execute(state: &TabletopState, plan: &crate::skill::SkillPlan) -> (TabletopState, Vec<Action>, Option<String>) {
    let mut current = state.clone();
    let mut done = Vec::new();
    for call in &plan.calls {
        let step = Action::from_call(call).and_then(|a| current.apply_action(&a).map(|next| (a, next)));
        match step {
            Ok((action, next)) => {
                done.push(action);
                current = next;
            }
            Err(e) => return (current, done, Some(format!("executing {call}: {e}"))),
        }
    }
    (current, done, None)
}

/// Run the dialogue with the scripted user, then execute whatever skill the
/// pipeline settles on. Ambiguous outcomes still execute their best-guess
/// skill. Pipeline failures make the episode unsuccessful rather than an error.
pub fn run_episode(
    task: &TaskSpec,
    state: &TabletopState,
    pipeline: &TriagePipeline,
    config: &TriageConfig,
    budget: usize,
) -> Result<EpisodeResult, SimError> {
    task.validate_against(state)?;
    let goal = task.goal_text();
    let config = TriageConfig {
        max_question_rounds: budget,
        ..config.clone()
    };
    let mut result = EpisodeResult {
        template_id: task.template_id,
        goal: goal.clone(),
        gold: task.template_id.category(),
        seed: config.seed,
        budget,
        label: None,
        sigma: None,
        asked_question: false,
        questions: Vec::new(),
        actions: Vec::new(),
        success: false,
        error: None,
        transcript: Vec::new(),
    };

    let mut dialogue = DialogueState::new(GoalCommand::new(goal), state.describe());
    let outcome = pipeline.forked().run_dialogue(&mut dialogue, &config, &mut Oracle(task));
    result.questions = dialogue.history.clone();
    result.asked_question = dialogue.rounds_used > 0;
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
        return Ok(result);
    }
    let last = dialogue.last_result.expect("a finished dialogue has a result");
    result.label = Some(last.label);
    result.sigma = Some(last.sigma.value);
    result.transcript = last.transcript;

    let mut final_state = state.clone();
    if last.label != TriageLabel::Infeasible {
        if let Some(plan) = &last.skill {
            let (after, actions, error) = execute(state, plan);
            final_state = after;
            result.actions = actions;
            result.error = error;
        }
    }
    result.success = match task.template_id.category() {
        TaskCategory::Infeasible => last.label == TriageLabel::Infeasible && result.actions.is_empty(),
        _ => result.error.is_none() && check_success(task, &final_state)?,
    };
    Ok(result)
}

fn default_budget() -> usize {
    1
}

/// One line of a simulator batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub template_id: TemplateId,
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_intent: Option<BTreeMap<String, String>>,
    /// Explicit block colors; otherwise the scene is drawn from the seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bowls: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bowls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub people: Option<Vec<String>>,
}

impl BatchItem {
    pub fn task(&self) -> TaskSpec {
        TaskSpec {
            template_id: self.template_id,
            bindings: self.bindings.clone(),
            hidden_intent: self.hidden_intent.clone(),
        }
    }

    pub fn state(&self) -> Result<TabletopState, SimError> {
        if self.template_id.is_handover() {
            let items = self.items.clone().unwrap_or_else(|| DEFAULT_ITEMS.map(String::from).to_vec());
            let people = self.people.clone().unwrap_or_else(|| DEFAULT_PEOPLE.map(String::from).to_vec());
            return TabletopState::handover(&items, &people);
        }
        match (&self.blocks, &self.bowls) {
            (Some(blocks), Some(bowls)) => TabletopState::from_colors(blocks, bowls),
            (None, None) => TabletopState::init_scene(self.seed, self.n_blocks.unwrap_or(3), self.n_bowls.unwrap_or(3)),
            _ => Err(SimError::Scene("give both blocks and bowls, or neither".into())),
        }
    }
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<Vec<BatchItem>, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Batch(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| SimError::Batch(format!("{}: {e}", path.display())))
}

/// The interactive episode and, for ambiguous tasks, its budget-0 replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub index: usize,
    pub episode: EpisodeResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<EpisodeResult>,
}

/// Run one batch line. Invalid lines become failed episodes.
pub fn run_batch_item(index: usize, item: &BatchItem, pipeline: &TriagePipeline, config: &TriageConfig) -> BatchOutcome {
    let config = TriageConfig {
        seed: item.seed,
        ..config.clone()
    };
    let task = item.task();
    let failed = |e: SimError| EpisodeResult {
        template_id: item.template_id,
        goal: task.goal_text(),
        gold: item.template_id.category(),
        seed: item.seed,
        budget: item.budget,
        label: None,
        sigma: None,
        asked_question: false,
        questions: Vec::new(),
        actions: Vec::new(),
        success: false,
        error: Some(e.to_string()),
        transcript: Vec::new(),
    };
    let state = match item.state() {
        Ok(s) => s,
        Err(e) => {
            return BatchOutcome {
                index,
                episode: failed(e),
                before: None,
            }
        }
    };
    let run = |budget| run_episode(&task, &state, pipeline, &config, budget).unwrap_or_else(&failed);
    let episode = run(item.budget);
    let before = task.is_ambiguous().then(|| run(0));
    BatchOutcome { index, episode, before }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub episodes: usize,
    pub by_category: BTreeMap<TaskCategory, usize>,
    pub successes: usize,
    pub failures_with_error: usize,
    /// Question timing over all episodes; absent without both ambiguous and
    /// other episodes.
    pub timing: Option<f64>,
    /// Success gap on ambiguous episodes versus their budget-0 replay, in
    /// percentage points.
    pub success_gap: Option<f64>,
}

pub fn summarize(outcomes: &[BatchOutcome]) -> BatchSummary {
    let mut by_category = BTreeMap::new();
    for o in outcomes {
        *by_category.entry(o.episode.gold).or_insert(0) += 1;
    }
    let questioned: Vec<bool> = outcomes.iter().map(|o| o.episode.asked_question).collect();
    let ambiguous: Vec<bool> = outcomes.iter().map(|o| o.episode.gold == TaskCategory::Ambiguous).collect();
    let (before, after): (Vec<bool>, Vec<bool>) = outcomes
        .iter()
        .filter_map(|o| o.before.as_ref().map(|b| (b.success, o.episode.success)))
        .unzip();
    BatchSummary {
        episodes: outcomes.len(),
        by_category,
        successes: outcomes.iter().filter(|o| o.episode.success).count(),
        failures_with_error: outcomes.iter().filter(|o| o.episode.error.is_some()).count(),
        timing: timing_metric(&questioned, &ambiguous).ok(),
        success_gap: success_gap(&before, &after).ok(),
    }
}
