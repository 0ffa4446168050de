//! Multi-turn clarification: ask, fold the answer into the goal, re-triage.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{TriageConfig, TriageError, TriageLabel, TriagePipeline, TriageResult};
use crate::prompt::{GoalCommand, SceneDescription};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct AnswerError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueStatus {
    Open,
    Resolved,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTurn {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub goal: GoalCommand,
    pub scene: SceneDescription,
    pub rounds_used: usize,
    pub history: Vec<QaTurn>,
    pub status: DialogueStatus,
    pub pending_question: Option<String>,
    pub last_result: Option<TriageResult>,
}

impl DialogueState {
    pub fn new(goal: GoalCommand, scene: SceneDescription) -> Self {
        Self {
            goal,
            scene,
            rounds_used: 0,
            history: Vec::new(),
            status: DialogueStatus::Open,
            pending_question: None,
            last_result: None,
        }
    }

    /// Attach the user's answer to the pending question and add it to the
    /// goal as a fact. Does not re-triage.
    pub fn record_answer(&mut self, answer: impl Into<String>) -> Result<(), TriageError> {
        if self.status != DialogueStatus::Open {
            return Err(TriageError::DialogueClosed(self.status));
        }
        let question = self.pending_question.take().ok_or(TriageError::NoPendingQuestion)?;
        let answer = answer.into();
        self.goal.augmented_facts.push(answer.trim().to_string());
        self.history.push(QaTurn { question, answer });
        self.rounds_used += 1;
        Ok(())
    }
}

/// Where clarifying answers come from: a person, a script, or a simulator
/// oracle.
pub trait AnswerSource {
    fn answer(&mut self, question: &str, state: &DialogueState) -> Result<String, AnswerError>;
}

impl<F> AnswerSource for F
where
    F: FnMut(&str) -> Result<String, AnswerError>,
{
    fn answer(&mut self, question: &str, _state: &DialogueState) -> Result<String, AnswerError> {
        self(question)
    }
}

/// Replays a fixed list of answers in order.
#[derive(Debug, Clone, Default)]
pub struct ScriptedAnswers(VecDeque<String>);

impl ScriptedAnswers {
    pub fn new(answers: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self(answers.into_iter().map(Into::into).collect())
    }
}

impl AnswerSource for ScriptedAnswers {
    fn answer(&mut self, _question: &str, _state: &DialogueState) -> Result<String, AnswerError> {
        self.0.pop_front().ok_or_else(|| AnswerError("no scripted answers left".into()))
    }
}

impl TriagePipeline {
    /// Classify the current goal once and update the dialogue status.
    ///
    /// Clear resolves the dialogue and infeasible abandons it. Ambiguous
    /// results leave it open with a pending question while rounds remain,
    /// and abandon it otherwise.
    pub fn advance(&self, state: &mut DialogueState, config: &TriageConfig) -> Result<TriageResult, TriageError> {
        if state.status != DialogueStatus::Open {
            return Err(TriageError::DialogueClosed(state.status));
        }
        let result = self.classify(&state.goal, &state.scene, config)?;
        state.pending_question = None;
        match result.label {
            TriageLabel::Clear => state.status = DialogueStatus::Resolved,
            TriageLabel::Infeasible => state.status = DialogueStatus::Abandoned,
            TriageLabel::Ambiguous if state.rounds_used < config.max_question_rounds => {
                state.pending_question = result.question.clone();
            }
            TriageLabel::Ambiguous => state.status = DialogueStatus::Abandoned,
        }
        state.last_result = Some(result.clone());
        Ok(result)
    }

    /// Drive the dialogue to completion, classifying at most
    /// `max_question_rounds + 1` times.
    ///
    /// If the answer source fails the state keeps its pending question and
    /// no answer is recorded, so the dialogue can be resumed.
    pub fn run_dialogue(
        &self,
        state: &mut DialogueState,
        config: &TriageConfig,
        answers: &mut dyn AnswerSource,
    ) -> Result<(), TriageError> {
        loop {
            if state.pending_question.is_none() {
                self.advance(state, config)?;
            }
            let Some(question) = state.pending_question.clone() else {
                return Ok(());
            };
            let answer = answers.answer(&question, state)?;
            state.record_answer(answer)?;
        }
    }
}
