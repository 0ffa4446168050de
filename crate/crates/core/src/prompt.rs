//! Prompt assembly: sampled few-shot action prompts and the zero-shot
//! feasibility, reason and question prompts.
//!
//! Everything here is a pure function of its inputs (seeds included).

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNCERTAINTY_PREFIX: &str = "Considering ambiguity of a goal, ";
pub const FACTS_SPLICE: &str = ", given that: ";
pub const REASON_CUE: &str = "This code is uncertain because";
pub const QUESTION_CUE: &str = "What can I ask the user? Please ";
/// Completion cue closing every action prompt.
pub const ACTION_CUE: &str = "robot:";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("k = {k} is outside 1..={available}")]
    KOutOfRange { k: usize, available: usize },
    #[error("at least one context exemplar is required")]
    NoContexts,
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error("reading {path}: {reason}")]
    Load { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalCommand {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub augmented_facts: Vec<String>,
}

impl GoalCommand {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            augmented_facts: Vec::new(),
        }
    }

    pub fn with_fact(mut self, fact: impl Into<String>) -> Self {
        self.augmented_facts.push(fact.into());
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.text.trim().is_empty() {
            return Err(PromptError::Invalid {
                what: "goal",
                reason: "text is empty".into(),
            });
        }
        Ok(())
    }

    /// Goal text with terminal `.`/`?` stripped and any augmented facts spliced in.
    pub fn phrase(&self) -> String {
        let mut out = normalize_goal_text(&self.text);
        if !self.augmented_facts.is_empty() {
            out.push_str(FACTS_SPLICE);
            out.push_str(&self.augmented_facts.join("; "));
        }
        out
    }
}

pub fn normalize_goal_text(text: &str) -> String {
    text.trim().trim_end_matches(['.', '?']).trim_end().to_string()
}

/// A named object or person, optionally with attributes such as color.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "EntityRepr")]
pub struct Entity {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EntityRepr {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        attributes: BTreeMap<String, String>,
    },
}

impl From<EntityRepr> for Entity {
    fn from(r: EntityRepr) -> Self {
        match r {
            EntityRepr::Name(name) => Entity::named(name),
            EntityRepr::Full { name, attributes } => Entity { name, attributes },
        }
    }
}

impl Entity {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    fn render(&self) -> String {
        if self.attributes.is_empty() {
            self.name.clone()
        } else {
            let attrs: Vec<String> = self.attributes.iter().map(|(k, v)| format!("{k}: {v}")).collect();
            format!("{} ({})", self.name, attrs.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub robot_type: String,
    #[serde(default)]
    pub objects: Vec<Entity>,
    #[serde(default)]
    pub people: Vec<Entity>,
    pub action_set: Vec<String>,
}

impl SceneDescription {
    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |reason: String| PromptError::Invalid { what: "scene", reason };
        if self.action_set.is_empty() {
            return Err(invalid("action_set is empty".into()));
        }
        for (list, label) in [(&self.objects, "object"), (&self.people, "person")] {
            let mut seen = HashSet::new();
            for e in list.iter() {
                if !seen.insert(e.name.as_str()) {
                    return Err(invalid(format!("duplicate {label} name {:?}", e.name)));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let scene: Self = load_json(path.as_ref())?;
        scene.validate()?;
        Ok(scene)
    }

    /// One-line rendering of the scene entities.
    pub fn render(&self) -> String {
        let list = |items: &[Entity]| {
            if items.is_empty() {
                "none".to_string()
            } else {
                items.iter().map(Entity::render).collect::<Vec<_>>().join(", ")
            }
        };
        format!("objects: {}; people: {}", list(&self.objects), list(&self.people))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextExemplar {
    pub scene_snippet: String,
    pub goal_text: String,
    pub skill_text: String,
}

impl ContextExemplar {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.scene_snippet.trim().is_empty() || self.goal_text.trim().is_empty() || self.skill_text.trim().is_empty() {
            return Err(PromptError::Invalid {
                what: "context exemplar",
                reason: "all fields must be non-empty".into(),
            });
        }
        Ok(())
    }

    fn render(&self) -> String {
        format!(
            "scene: {}\ngoal: {}\n{ACTION_CUE} {}",
            self.scene_snippet.trim(),
            self.goal_text.trim(),
            self.skill_text.trim()
        )
    }
}

/// Read a JSON list of context exemplars.
pub fn load_context_set(path: impl AsRef<Path>) -> Result<Vec<ContextExemplar>, PromptError> {
    let set: Vec<ContextExemplar> = load_json(path.as_ref())?;
    for c in &set {
        c.validate()?;
    }
    Ok(set)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PromptError> {
    let err = |reason: String| PromptError::Load {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Action,
    Feasibility,
    Reason,
    Question,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenePermutation {
    pub objects: Vec<usize>,
    pub people: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: PromptKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_permutation: Option<ScenePermutation>,
    pub uncertainty_aware: bool,
}

impl Provenance {
    fn of(kind: PromptKind) -> Self {
        Self {
            kind,
            context_indices: Vec::new(),
            scene_permutation: None,
            uncertainty_aware: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub provenance: Provenance,
}

/// Indices of `k` distinct exemplars out of `n`, in random order.
pub fn sample_context_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, PromptError> {
    if k == 0 || k > n {
        return Err(PromptError::KOutOfRange { k, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, n, k).into_vec())
}

pub fn sample_contexts(context_set: &[ContextExemplar], k: usize, seed: u64) -> Result<Vec<ContextExemplar>, PromptError> {
    Ok(sample_context_indices(context_set.len(), k, seed)?
        .into_iter()
        .map(|i| context_set[i].clone())
        .collect())
}

/// Permute objects and people; robot type and action set order are untouched.
pub fn shuffle_scene(scene: &SceneDescription, seed: u64) -> SceneDescription {
    shuffle_scene_with_permutation(scene, seed).0
}

pub fn shuffle_scene_with_permutation(scene: &SceneDescription, seed: u64) -> (SceneDescription, ScenePermutation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects: Vec<usize> = (0..scene.objects.len()).collect();
    let mut people: Vec<usize> = (0..scene.people.len()).collect();
    objects.shuffle(&mut rng);
    people.shuffle(&mut rng);
    let shuffled = SceneDescription {
        robot_type: scene.robot_type.clone(),
        objects: objects.iter().map(|&i| scene.objects[i].clone()).collect(),
        people: people.iter().map(|&i| scene.people[i].clone()).collect(),
        action_set: scene.action_set.clone(),
    };
    (shuffled, ScenePermutation { objects, people })
}

pub fn wrap_uncertainty_aware(goal: &GoalCommand) -> String {
    format!("{UNCERTAINTY_PREFIX}{}", goal.phrase())
}

pub fn assemble_action_prompt(
    goal: &GoalCommand,
    scene: &SceneDescription,
    contexts: &[ContextExemplar],
    uncertainty_aware: bool,
) -> Result<AssembledPrompt, PromptError> {
    if contexts.is_empty() {
        return Err(PromptError::NoContexts);
    }
    let goal_line = if uncertainty_aware {
        wrap_uncertainty_aware(goal)
    } else {
        goal.phrase()
    };
    let mut text = contexts.iter().map(ContextExemplar::render).collect::<Vec<_>>().join("\n\n");
    text.push_str(&format!("\n\nscene: {}\ngoal: {goal_line}\n{ACTION_CUE}", scene.render()));
    Ok(AssembledPrompt {
        text,
        provenance: Provenance {
            context_indices: (0..contexts.len()).collect(),
            uncertainty_aware,
            ..Provenance::of(PromptKind::Action)
        },
    })
}

pub fn feasibility_question(goal: &GoalCommand, robot_type: &str) -> String {
    format!("I am a {robot_type} robot. Considering the action set, can I {}?", goal.phrase())
}

pub fn assemble_feasibility_prompt(goal: &GoalCommand, scene: &SceneDescription) -> AssembledPrompt {
    let text = format!(
        "scene: {}\naction set: {}\n{}",
        scene.render(),
        scene.action_set.join("; "),
        feasibility_question(goal, &scene.robot_type)
    );
    AssembledPrompt {
        text,
        provenance: Provenance::of(PromptKind::Feasibility),
    }
}

fn with_cue(transcript: &str, cue: &str, kind: PromptKind) -> Result<AssembledPrompt, PromptError> {
    if transcript.trim().is_empty() {
        return Err(PromptError::EmptyTranscript);
    }
    Ok(AssembledPrompt {
        text: format!("{}\n{cue}", transcript.trim_end()),
        provenance: Provenance::of(kind),
    })
}

pub fn assemble_reason_prompt(transcript: &str) -> Result<AssembledPrompt, PromptError> {
    with_cue(transcript, REASON_CUE, PromptKind::Reason)
}

pub fn assemble_question_prompt(transcript: &str) -> Result<AssembledPrompt, PromptError> {
    with_cue(transcript, QUESTION_CUE, PromptKind::Question)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exemplar(i: usize) -> ContextExemplar {
        ContextExemplar {
            scene_snippet: format!("objects: thing{i}"),
            goal_text: format!("goal {i}"),
            skill_text: format!("robot.do(thing{i})"),
        }
    }

    fn scene() -> SceneDescription {
        SceneDescription {
            robot_type: "cooking".into(),
            objects: vec![Entity::named("a"), Entity::named("b"), Entity::named("c").with("color", "red")],
            people: vec![Entity::named("alice"), Entity::named("bob")],
            action_set: vec!["robot.cook(<food>)".into(), "robot.serve(<item>, <person>)".into()],
        }
    }

    #[test]
    fn full_draw_is_a_permutation() {
        let set: Vec<_> = (0..5).map(exemplar).collect();
        let mut idx = sample_context_indices(5, 5, 11).unwrap();
        idx.sort();
        assert_eq!(idx, [0, 1, 2, 3, 4]);
        assert_eq!(sample_contexts(&set, 5, 11).unwrap().len(), 5);
    }

    #[test]
    fn draws_are_seed_deterministic_and_distinct() {
        let set: Vec<_> = (0..4).map(exemplar).collect();
        let a = sample_contexts(&set, 2, 7).unwrap();
        let b = sample_contexts(&set, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn k_out_of_range() {
        assert_eq!(
            sample_context_indices(4, 0, 1),
            Err(PromptError::KOutOfRange { k: 0, available: 4 })
        );
        assert!(sample_context_indices(4, 5, 1).is_err());
    }

    #[test]
    fn selection_frequency_is_uniform() {
        let mut counts = [0usize; 4];
        let seeds = 10_000u64;
        for seed in 0..seeds {
            for i in sample_context_indices(4, 2, seed).unwrap() {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / seeds as f64;
            assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn shuffle_preserves_multiset_and_fixed_parts() {
        let s = scene();
        for seed in [1, 2] {
            let out = shuffle_scene(&s, seed);
            let mut names: Vec<_> = out.objects.iter().map(|e| e.name.clone()).collect();
            names.sort();
            assert_eq!(names, ["a", "b", "c"]);
            assert_eq!(out.robot_type, s.robot_type);
            assert_eq!(out.action_set, s.action_set);
        }
        assert_eq!(shuffle_scene(&s, 3), shuffle_scene(&s, 3));
    }

    #[test]
    fn shuffle_singleton_unchanged() {
        let mut s = scene();
        s.objects.truncate(1);
        s.people.clear();
        assert_eq!(shuffle_scene(&s, 99), s);
    }

    #[test]
    fn uncertainty_prefix() {
        assert_eq!(
            wrap_uncertainty_aware(&GoalCommand::new("make coffee")),
            "Considering ambiguity of a goal, make coffee"
        );
        assert_eq!(
            wrap_uncertainty_aware(&GoalCommand::new("make coffee").with_fact("the cup is red")),
            "Considering ambiguity of a goal, make coffee, given that: the cup is red"
        );
        let two = GoalCommand::new("make coffee").with_fact("a").with_fact("b");
        assert_eq!(wrap_uncertainty_aware(&two), "Considering ambiguity of a goal, make coffee, given that: a; b");
        assert!(!wrap_uncertainty_aware(&GoalCommand::new("x")).ends_with(", "));
    }

    #[test]
    fn action_prompt_layout() {
        let goal = GoalCommand::new("serve coffee.");
        let ctx = vec![exemplar(0), exemplar(2)];
        let p = assemble_action_prompt(&goal, &scene(), &ctx, true).unwrap();
        assert_eq!(p, assemble_action_prompt(&goal, &scene(), &ctx, true).unwrap());
        assert!(p.text.ends_with("goal: Considering ambiguity of a goal, serve coffee\nrobot:"));
        assert!(p.text.starts_with("scene: objects: thing0\ngoal: goal 0\nrobot: robot.do(thing0)\n\n"));
        assert!(p.provenance.uncertainty_aware);

        let plain = assemble_action_prompt(&goal, &scene(), &ctx, false).unwrap();
        assert!(!plain.text.contains(UNCERTAINTY_PREFIX));
        assert!(plain.text.ends_with("goal: serve coffee\nrobot:"));

        let swapped = assemble_action_prompt(&goal, &scene(), &[exemplar(2), exemplar(0)], true).unwrap();
        assert_ne!(swapped.text, p.text);
        assert_eq!(swapped.text.matches("\nrobot: ").count(), p.text.matches("\nrobot: ").count());

        assert_eq!(assemble_action_prompt(&goal, &scene(), &[], true), Err(PromptError::NoContexts));
    }

    #[test]
    fn feasibility_suffix() {
        let p = assemble_feasibility_prompt(&GoalCommand::new("go for a walk"), &scene());
        assert!(p
            .text
            .ends_with("I am a cooking robot. Considering the action set, can I go for a walk?"));
        let actions_at = p.text.find("robot.cook(<food>)").unwrap();
        let question_at = p.text.find("I am a cooking robot").unwrap();
        assert!(actions_at < question_at);
        let q = assemble_feasibility_prompt(&GoalCommand::new("can you make tea?"), &scene());
        assert!(q.text.ends_with("can I can you make tea?"));
        assert!(!q.text.ends_with("??"));
    }

    #[test]
    fn reason_and_question_cues() {
        let r = assemble_reason_prompt("some transcript").unwrap();
        assert_eq!(r.text, "some transcript\nThis code is uncertain because");
        assert_eq!(r.text.matches(REASON_CUE).count(), 1);
        assert_eq!(assemble_reason_prompt(""), Err(PromptError::EmptyTranscript));

        let q = assemble_question_prompt("t").unwrap();
        assert!(q.text.ends_with("What can I ask the user? Please "));
        assert_eq!(q, assemble_question_prompt("t").unwrap());
        assert_eq!(assemble_question_prompt("  "), Err(PromptError::EmptyTranscript));
    }

    #[test]
    fn scene_validation() {
        let mut s = scene();
        assert!(s.validate().is_ok());
        s.objects.push(Entity::named("a"));
        assert!(s.validate().is_err());
        let mut s = scene();
        s.action_set.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn entities_accept_bare_names() {
        let s: SceneDescription = serde_json::from_str(
            r#"{"robot_type":"cook","objects":["cup",{"name":"mug","attributes":{"color":"red"}}],"action_set":["robot.x(<a>)"]}"#,
        )
        .unwrap();
        assert_eq!(s.objects[0], Entity::named("cup"));
        assert_eq!(s.render(), "objects: cup, mug (color: red); people: none");
    }
}
