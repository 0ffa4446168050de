//! Symbolic pick-and-place and handover world for interaction experiments.

mod episode;
mod task;
mod world;

use thiserror::Error;

pub use episode::{
    load_batch, run_batch_item, run_episode, summarize, BatchItem, BatchOutcome, BatchSummary, EpisodeResult,
    DEFAULT_ITEMS, DEFAULT_PEOPLE,
};
pub use task::{
    check_success, is_drink, oracle_answer, Slot, TaskCategory, TaskSpec, TemplateId, UNINFORMATIVE_ANSWER,
};
pub use world::{color_of, normalize_name, Action, Base, Corner, TabletopState, GIVE, PALETTE, PICK_AND_PLACE};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("palette has {available} colors but {requested} were requested")]
    PaletteExhausted { requested: usize, available: usize },
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("{0} is under another object")]
    Buried(String),
    #[error("unusable skill: {0}")]
    BadSkill(String),
    #[error("invalid task: {0}")]
    Task(String),
    #[error("task has open slots without a hidden intent")]
    Unresolved,
    #[error("{0:?} has no success predicate")]
    NoPredicate(TemplateId),
    #[error("invalid batch: {0}")]
    Batch(String),
}
