//! Ambiguity and feasibility triage for natural-language robot commands.
//!
//! A command is sampled several times under different few-shot contexts and
//! scene orderings; the spread of the resulting skill calls in embedding
//! space is the uncertainty score. Confident commands get a skill, uncertain
//! ones are checked for feasibility and either explained or met with a
//! clarifying question.

pub mod embed;
pub mod eval;
pub mod gateway;
pub mod prompt;
pub mod sim;
pub mod skill;
pub mod triage;
pub mod uq;

pub use embed::{EmbeddingTable, Vector};
pub use eval::{MetricsReport, SagcLabel, SagcRecord};
pub use gateway::{Backend, BackendHandle, GenerationSample, HttpBackend, HttpConfig, MockBackend, PromptRequest, ScriptedRule};
pub use prompt::{ContextExemplar, GoalCommand, SceneDescription};
pub use skill::{SkillCall, SkillPlan};
pub use triage::{DialogueState, TriageConfig, TriageLabel, TriagePipeline, TriageResult};
pub use uq::{EstimatorKind, SampleSet, UncertaintyScore};
