//! The classification cascade.
//!
//! 1. Sample H context/scene variants of the action prompt and score the
//!    spread of the generations.
//! 2. At or below the threshold the command is clear and the majority skill
//!    is returned.
//! 3. Above it, a zero-shot feasibility question decides between infeasible
//!    and ambiguous; a reason is generated for both and a clarifying question
//!    for ambiguous commands.

mod calibrate;
mod dialogue;
mod feasibility;

use std::collections::HashMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibrate::{youden_threshold, Calibration, ThresholdChoice, ValidationRow};
pub use dialogue::{AnswerError, AnswerSource, DialogueState, DialogueStatus, QaTurn, ScriptedAnswers};
pub use feasibility::{parse_feasibility_answer, FeasibilityKeywords, FeasibilityVerdict};

use crate::embed::{embed, extract_keywords_any, EmbeddingTable};
use crate::gateway::{generate, generate_h, BackendHandle, GatewayError, GenerationSample, PromptRequest};
use crate::prompt::{
    assemble_action_prompt, assemble_feasibility_prompt, assemble_question_prompt, assemble_reason_prompt,
    sample_context_indices, shuffle_scene_with_permutation, AssembledPrompt, ContextExemplar, GoalCommand,
    PromptError, PromptKind, SceneDescription,
};
use crate::skill::{SkillPlan, SkillTemplate};
use crate::uq::{self, EstimatorKind, SampleSet, UncertaintyScore, UqError};

#[derive(Debug, Error)]
pub enum TriageError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error("invalid triage config: {0}")]
    Config(String),
    #[error("context set has {available} exemplars but k = {k}")]
    NotEnoughContexts { k: usize, available: usize },
    #[error("dialogue is {0:?}, not open")]
    DialogueClosed(DialogueStatus),
    #[error("no question is pending")]
    NoPendingQuestion,
    #[error("answer source failed: {0}")]
    Answer(#[from] AnswerError),
    #[error("validation set needs both certain and uncertain rows")]
    DegenerateValidation,
}

fn default_rounds() -> usize {
    1
}
fn default_action_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    64
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageConfig {
    /// Threshold on the uncertainty score; scores at or below it are clear.
    pub epsilon: f64,
    /// Number of sampled variants.
    pub h: usize,
    /// Context exemplars per variant.
    pub k: usize,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default = "default_rounds")]
    pub max_question_rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_action_temperature")]
    pub action_temperature: f64,
    /// Temperature for feasibility, reason and question calls.
    #[serde(default)]
    pub control_temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_true")]
    pub uncertainty_aware: bool,
    /// Request token probabilities even when the estimator does not need them.
    #[serde(default)]
    pub collect_token_probs: bool,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            h: 5,
            k: 3,
            estimator: EstimatorKind::ContextSampling,
            max_question_rounds: default_rounds(),
            seed: 0,
            action_temperature: default_action_temperature(),
            control_temperature: 0.0,
            max_tokens: default_max_tokens(),
            uncertainty_aware: true,
            collect_token_probs: false,
        }
    }
}

impl TriageConfig {
    pub fn validate(&self) -> Result<(), TriageError> {
        let fail = |m: &str| Err(TriageError::Config(m.to_string()));
        if self.h < 2 {
            return fail("h must be at least 2");
        }
        if self.k < 1 {
            return fail("k must be at least 1");
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return fail("epsilon must be finite and non-negative");
        }
        if self.max_tokens == 0 {
            return fail("max_tokens must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriageLabel {
    Clear,
    Ambiguous,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub kind: PromptKind,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageResult {
    pub label: TriageLabel,
    pub sigma: UncertaintyScore,
    /// The chosen skill plan. Always present for clear commands; for
    /// ambiguous ones it holds the best guess, if any generation parsed.
    pub skill: Option<SkillPlan>,
    pub explanation: Option<String>,
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilityVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub transcript: Vec<TranscriptEntry>,
}

impl TriageResult {
    /// Field presence required by the label.
    pub fn check_invariants(&self) -> Result<(), String> {
        match self.label {
            TriageLabel::Clear if self.skill.is_none() => Err("clear result without a skill".into()),
            TriageLabel::Clear if self.question.is_some() => Err("clear result with a question".into()),
            TriageLabel::Ambiguous if self.question.is_none() => Err("ambiguous result without a question".into()),
            TriageLabel::Infeasible if self.explanation.is_none() => {
                Err("infeasible result without an explanation".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SigmaEstimate {
    pub score: UncertaintyScore,
    pub samples: SampleSet,
    pub prompts: Vec<AssembledPrompt>,
    /// No generation yielded keywords; the score is the sentinel.
    pub all_degenerate: bool,
}

/// Index of the most frequent generation (ties go to the lowest index) and
/// its parsed plan, if it parses.
pub fn majority_plan(samples: &[GenerationSample]) -> Option<(usize, Option<SkillPlan>)> {
    let keyed: Vec<(String, Option<SkillPlan>)> = samples
        .iter()
        .map(|s| match SkillPlan::parse(&s.text) {
            Some(plan) => (plan.canonical(), Some(plan)),
            None => (format!("\u{0}{}", s.text.trim()), None),
        })
        .collect();
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, (key, _)) in keyed.iter().enumerate() {
        counts.entry(key.as_str()).or_insert((0, i)).0 += 1;
    }
    let (_, first) = counts
        .values()
        .copied()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))?;
    Some((first, keyed[first].1.clone()))
}

/// Everything needed to run the cascade against one backend.
#[derive(Clone)]
pub struct TriagePipeline {
    backend: BackendHandle,
    table: Arc<EmbeddingTable>,
    contexts: Arc<Vec<ContextExemplar>>,
    keywords: FeasibilityKeywords,
}

impl std::fmt::Debug for TriagePipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TriagePipeline")
            .field("backend", &self.backend.id())
            .field("contexts", &self.contexts.len())
            .field("embedding_words", &self.table.len())
            .finish()
    }
}

impl TriagePipeline {
    pub fn new(backend: BackendHandle, table: Arc<EmbeddingTable>, contexts: Vec<ContextExemplar>) -> Self {
        Self {
            backend,
            table,
            contexts: Arc::new(contexts),
            keywords: FeasibilityKeywords::default(),
        }
    }

    pub fn with_keywords(mut self, keywords: FeasibilityKeywords) -> Self {
        self.keywords = keywords;
        self
    }

    /// Same pipeline over a forked backend (fresh scripted state).
    pub fn forked(&self) -> Self {
        Self {
            backend: self.backend.fork(),
            ..self.clone()
        }
    }

    pub fn backend(&self) -> &BackendHandle {
        &self.backend
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn keywords(&self) -> &FeasibilityKeywords {
        &self.keywords
    }

    /// Draw H variants, generate, embed and score.
    pub fn estimate_sigma(
        &self,
        goal: &GoalCommand,
        scene: &SceneDescription,
        config: &TriageConfig,
    ) -> Result<SigmaEstimate, TriageError> {
        config.validate()?;
        goal.validate()?;
        scene.validate()?;
        if self.contexts.len() < config.k {
            return Err(TriageError::NotEnoughContexts {
                k: config.k,
                available: self.contexts.len(),
            });
        }
        let want_probs = config.estimator.needs_token_probs() || config.collect_token_probs;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut prompts = Vec::with_capacity(config.h);
        let mut requests = Vec::with_capacity(config.h);
        for i in 0..config.h {
            let context_seed = rng.next_u64();
            let scene_seed = rng.next_u64();
            let indices = sample_context_indices(self.contexts.len(), config.k, context_seed)?;
            let contexts: Vec<ContextExemplar> = indices.iter().map(|&c| self.contexts[c].clone()).collect();
            let (shuffled, permutation) = shuffle_scene_with_permutation(scene, scene_seed);
            let mut prompt = assemble_action_prompt(goal, &shuffled, &contexts, config.uncertainty_aware)?;
            prompt.provenance.context_indices = indices;
            prompt.provenance.scene_permutation = Some(permutation);
            requests.push(
                PromptRequest::new(prompt.text.clone())
                    .temperature(config.action_temperature)
                    .max_tokens(config.max_tokens)
                    .with_token_probs(want_probs)
                    .sample_index(i as u64),
            );
            prompts.push(prompt);
        }
        let samples = generate_h(&requests, self.backend.as_ref())?;

        let templates: Vec<SkillTemplate> = scene.action_set.iter().filter_map(|s| SkillTemplate::parse(s)).collect();
        let embeddings = samples
            .iter()
            .map(|s| {
                extract_keywords_any(&s.text, &templates)
                    .ok()
                    .map(|k| embed(&k, &self.table).vector)
            })
            .collect();
        let set = SampleSet::new(samples, embeddings, self.table.sentinel_distance())?;
        let all_degenerate = set.degenerate_count() == set.h();
        if all_degenerate {
            tracing::warn!(goal = %goal.text, "no generation produced keywords; scoring at the sentinel distance");
        }
        let score = uq::score(config.estimator, &set)?;
        Ok(SigmaEstimate {
            score,
            samples: set,
            prompts,
            all_degenerate,
        })
    }

    fn ask(&self, prompt: &AssembledPrompt, config: &TriageConfig) -> Result<String, TriageError> {
        let request = PromptRequest::new(prompt.text.clone())
            .temperature(config.control_temperature)
            .max_tokens(config.max_tokens);
        Ok(generate(&request, self.backend.as_ref())?.text.trim().to_string())
    }

    /// Reason, then (optionally) question, chained onto `conversation`.
    fn explain(
        &self,
        conversation: &str,
        with_question: bool,
        config: &TriageConfig,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<(String, Option<String>), TriageError> {
        let reason_prompt = assemble_reason_prompt(conversation)?;
        let reason = self.ask(&reason_prompt, config)?;
        let continued = format!("{} {reason}", reason_prompt.text);
        transcript.push(TranscriptEntry {
            kind: PromptKind::Reason,
            prompt: reason_prompt.text,
            response: reason.clone(),
        });
        if !with_question {
            return Ok((reason, None));
        }
        let question_prompt = assemble_question_prompt(&continued)?;
        let question = self.ask(&question_prompt, config)?;
        transcript.push(TranscriptEntry {
            kind: PromptKind::Question,
            prompt: question_prompt.text,
            response: question.clone(),
        });
        Ok((reason, Some(question)))
    }

    pub fn classify(
        &self,
        goal: &GoalCommand,
        scene: &SceneDescription,
        config: &TriageConfig,
    ) -> Result<TriageResult, TriageError> {
        let estimate = self.estimate_sigma(goal, scene, config)?;
        let mut transcript: Vec<TranscriptEntry> = estimate
            .prompts
            .iter()
            .zip(estimate.samples.samples())
            .map(|(p, s)| TranscriptEntry {
                kind: PromptKind::Action,
                prompt: p.text.clone(),
                response: s.text.clone(),
            })
            .collect();
        let majority = majority_plan(estimate.samples.samples());
        let guess = majority.as_ref().and_then(|(_, plan)| plan.clone());

        if estimate.score.value <= config.epsilon {
            if let Some(plan) = guess.clone() {
                return Ok(TriageResult {
                    label: TriageLabel::Clear,
                    sigma: estimate.score,
                    skill: Some(plan),
                    explanation: None,
                    question: None,
                    feasibility: None,
                    note: None,
                    transcript,
                });
            }
            tracing::warn!(goal = %goal.text, "confident generation does not parse as a skill; treating as ambiguous");
            let (index, _) = majority.unwrap_or((0, None));
            let conversation = format!(
                "{} {}",
                estimate.prompts[index].text,
                estimate.samples.samples()[index].text.trim()
            );
            let (reason, question) = self.explain(&conversation, true, config, &mut transcript)?;
            return Ok(TriageResult {
                label: TriageLabel::Ambiguous,
                sigma: estimate.score,
                skill: None,
                explanation: Some(reason),
                question,
                feasibility: None,
                note: Some("clear-path generation did not parse as a skill call".into()),
                transcript,
            });
        }

        let feasibility_prompt = assemble_feasibility_prompt(goal, scene);
        let answer = self.ask(&feasibility_prompt, config)?;
        let verdict = parse_feasibility_answer(&answer, &self.keywords);
        let conversation = format!("{}\n{answer}", feasibility_prompt.text);
        transcript.push(TranscriptEntry {
            kind: PromptKind::Feasibility,
            prompt: feasibility_prompt.text,
            response: answer,
        });
        let (reason, question) = self.explain(&conversation, verdict.feasible, config, &mut transcript)?;
        let label = if verdict.feasible {
            TriageLabel::Ambiguous
        } else {
            TriageLabel::Infeasible
        };
        Ok(TriageResult {
            label,
            sigma: estimate.score,
            skill: if verdict.feasible { guess } else { None },
            explanation: Some(reason),
            question,
            feasibility: Some(verdict),
            note: None,
            transcript,
        })
    }
}
