//! Task templates, success predicates and the scripted user.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::world::{color_of, normalize_name, Base, Corner, TabletopState};
use super::SimError;

pub const UNINFORMATIVE_ANSWER: &str = "I'm not sure what you mean";

const DRINK_WORDS: [&str; 8] = ["coke", "water", "juice", "milk", "tea", "coffee", "soda", "lemonade"];

pub fn is_drink(item: &str) -> bool {
    item.split_whitespace().any(|w| DRINK_WORDS.contains(&w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCategory {
    Clear,
    Ambiguous,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Block,
    Bowl,
    Corner,
    Item,
    Person,
}

impl Slot {
    pub fn key(self) -> &'static str {
        match self {
            Slot::Block => "block",
            Slot::Bowl => "bowl",
            Slot::Corner => "corner",
            Slot::Item => "item",
            Slot::Person => "person",
        }
    }

    /// Question phrases that ask for this slot.
    fn cues(self) -> &'static [&'static str] {
        match self {
            Slot::Block => &[
                "which block",
                "what block",
                "which color block",
                "what color block",
                "which of the blocks",
                "which one",
            ],
            Slot::Bowl => &["which bowl", "what bowl", "which color bowl", "what color bowl", "where"],
            Slot::Corner => &["which corner", "what corner", "where"],
            Slot::Item => &[
                "which drink",
                "what drink",
                "what would you like",
                "what do you want",
                "which item",
                "what item",
                "which object",
                "what should i give",
                "what to give",
                "what kind",
            ],
            Slot::Person => &["who", "whom", "which person"],
        }
    }

    fn reveal(self, value: &str) -> String {
        match self {
            Slot::Person => value.to_string(),
            _ => format!("the {value}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    PickPlace,
    AllOnCorner,
    AllInBowl,
    DifferentCorners,
    MatchingColor,
    MismatchingColor,
    StackOnCorner,
    PickUserBlock,
    PickToUserBowl,
    PickBlockBowl,
    StackAll,
    GiveTo,
    GiveToSomeone,
    GiveDrinkTo,
    GiveDrinkSomeone,
    WipeDesk,
    Smash,
    PutOnGround,
}

impl TemplateId {
    pub const ALL: [TemplateId; 18] = [
        TemplateId::PickPlace,
        TemplateId::AllOnCorner,
        TemplateId::AllInBowl,
        TemplateId::DifferentCorners,
        TemplateId::MatchingColor,
        TemplateId::MismatchingColor,
        TemplateId::StackOnCorner,
        TemplateId::PickUserBlock,
        TemplateId::PickToUserBowl,
        TemplateId::PickBlockBowl,
        TemplateId::StackAll,
        TemplateId::GiveTo,
        TemplateId::GiveToSomeone,
        TemplateId::GiveDrinkTo,
        TemplateId::GiveDrinkSomeone,
        TemplateId::WipeDesk,
        TemplateId::Smash,
        TemplateId::PutOnGround,
    ];

    /// Slots the goal text names, then slots left for the user to resolve.
    pub fn slots(self) -> (&'static [Slot], &'static [Slot]) {
        use Slot::*;
        use TemplateId::*;
        match self {
            PickPlace => (&[Block, Bowl], &[]),
            AllOnCorner | StackOnCorner => (&[Corner], &[]),
            AllInBowl => (&[Bowl], &[]),
            DifferentCorners | MatchingColor | MismatchingColor | WipeDesk => (&[], &[]),
            PickUserBlock => (&[Bowl], &[Block]),
            PickToUserBowl => (&[Block], &[Bowl]),
            PickBlockBowl => (&[], &[Block, Bowl]),
            StackAll => (&[], &[Corner]),
            GiveTo => (&[Item, Person], &[]),
            GiveToSomeone => (&[Item], &[Person]),
            GiveDrinkTo => (&[Person], &[Item]),
            GiveDrinkSomeone => (&[], &[Item, Person]),
            Smash | PutOnGround => (&[Item], &[]),
        }
    }

    pub fn category(self) -> TaskCategory {
        use TemplateId::*;
        match self {
            WipeDesk | Smash | PutOnGround => TaskCategory::Infeasible,
            _ if !self.slots().1.is_empty() => TaskCategory::Ambiguous,
            _ => TaskCategory::Clear,
        }
    }

    /// Handover templates run in a scene with items and people.
    pub fn is_handover(self) -> bool {
        use TemplateId::*;
        matches!(
            self,
            GiveTo | GiveToSomeone | GiveDrinkTo | GiveDrinkSomeone | WipeDesk | Smash | PutOnGround
        )
    }

    fn pattern(self) -> &'static str {
        use TemplateId::*;
        match self {
            PickPlace => "pick the {block} and put on the {bowl}",
            AllOnCorner => "place all blocks on the {corner}",
            AllInBowl => "place all blocks on the {bowl}",
            DifferentCorners => "put all blocks on different corners",
            MatchingColor => "place blocks on matching color",
            MismatchingColor => "place blocks on mismatching color",
            StackOnCorner => "stack all blocks on the {corner}",
            PickUserBlock => "pick the block that the user wants and place on the {bowl}",
            PickToUserBowl => "pick the {block} and put on the bowl that the user wants",
            PickBlockBowl => "pick the block and put in the bowl",
            StackAll => "stack all blocks",
            GiveTo => "give the {item} to {person}",
            GiveToSomeone => "give the {item} to someone",
            GiveDrinkTo => "give something to drink to {person}",
            GiveDrinkSomeone => "give something to drink to someone",
            WipeDesk => "wipe the desk",
            Smash => "smash the {item}",
            PutOnGround => "put the {item} on the ground",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub template_id: TemplateId,
    /// Values for the slots the goal names, keyed by slot name.
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
    /// Values for the slots the goal leaves open; present iff ambiguous.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_intent: Option<BTreeMap<String, String>>,
}

fn keys(slots: &[Slot]) -> BTreeSet<&'static str> {
    slots.iter().map(|s| s.key()).collect()
}

impl TaskSpec {
    pub fn new(template_id: TemplateId) -> Self {
        Self {
            template_id,
            bindings: BTreeMap::new(),
            hidden_intent: None,
        }
    }

    pub fn bind(mut self, slot: Slot, value: impl AsRef<str>) -> Self {
        self.bindings.insert(slot.key().into(), normalize_name(value.as_ref()));
        self
    }

    pub fn intend(mut self, slot: Slot, value: impl AsRef<str>) -> Self {
        self.hidden_intent
            .get_or_insert_with(BTreeMap::new)
            .insert(slot.key().into(), normalize_name(value.as_ref()));
        self
    }

    pub fn is_ambiguous(&self) -> bool {
        self.template_id.category() == TaskCategory::Ambiguous
    }

    /// Slot names must match the template exactly.
    pub fn validate(&self) -> Result<(), SimError> {
        let (bound, open) = self.template_id.slots();
        let given: BTreeSet<&str> = self.bindings.keys().map(String::as_str).collect();
        if given != keys(bound) {
            return Err(SimError::Task(format!(
                "{:?} binds {:?}, got {:?}",
                self.template_id,
                keys(bound),
                given
            )));
        }
        match (&self.hidden_intent, open.is_empty()) {
            (None, true) => Ok(()),
            (Some(_), true) => Err(SimError::Task("hidden_intent given for a fully specified task".into())),
            (None, false) => Err(SimError::Unresolved),
            (Some(h), false) => {
                let hidden: BTreeSet<&str> = h.keys().map(String::as_str).collect();
                if hidden == keys(open) {
                    Ok(())
                } else {
                    Err(SimError::Task(format!("hidden_intent must name {:?}, got {hidden:?}", keys(open))))
                }
            }
        }
    }

    /// Check every referenced entity exists and the task is satisfiable.
    pub fn validate_against(&self, state: &TabletopState) -> Result<(), SimError> {
        self.validate()?;
        if self.template_id.is_handover() != state.is_handover() {
            return Err(SimError::Task(format!("{:?} does not fit a {} scene", self.template_id, state.robot_type())));
        }
        let drink_slot = matches!(self.template_id, TemplateId::GiveDrinkTo | TemplateId::GiveDrinkSomeone);
        for (key, value) in self.resolved()? {
            let known = match key.as_str() {
                "block" => state.blocks.contains(&value),
                "bowl" => state.bowls.contains(&value),
                "corner" => Corner::parse(&value).is_some(),
                "item" => state.items.contains(&value) && (!drink_slot || is_drink(&value)),
                "person" => state.people.contains(&value),
                _ => false,
            };
            if !known {
                return Err(SimError::Task(format!("{key} {value:?} is not in the scene")));
            }
        }
        let colors = |v: &[String]| v.iter().filter_map(|e| color_of(e)).map(str::to_string).collect::<BTreeSet<_>>();
        let bowl_colors = colors(&state.bowls);
        let satisfiable = match self.template_id {
            TemplateId::DifferentCorners => state.blocks.len() <= Corner::ALL.len(),
            TemplateId::MatchingColor => colors(&state.blocks).is_subset(&bowl_colors),
            TemplateId::MismatchingColor => state
                .blocks
                .iter()
                .all(|b| bowl_colors.iter().any(|c| Some(c.as_str()) != color_of(b))),
            _ => true,
        };
        if !satisfiable {
            return Err(SimError::Task(format!("{:?} cannot be satisfied in this scene", self.template_id)));
        }
        Ok(())
    }

    /// Bindings merged with the hidden intent.
    pub fn resolved(&self) -> Result<BTreeMap<String, String>, SimError> {
        self.validate()?;
        let mut all = self.bindings.clone();
        if let Some(h) = &self.hidden_intent {
            all.extend(h.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Ok(all)
    }

    /// The command as the user would say it: bound slots filled, open slots
    /// left vague.
    pub fn goal_text(&self) -> String {
        let mut text = self.template_id.pattern().to_string();
        for (key, value) in &self.bindings {
            text = text.replace(&format!("{{{key}}}"), value);
        }
        text
    }
}

/// Whether the resolved task holds in `state`. Infeasible templates have no
/// success predicate.
pub fn check_success(task: &TaskSpec, state: &TabletopState) -> Result<bool, SimError> {
    use TemplateId::*;
    let slots = task.resolved()?;
    let slot = |k: &str| slots.get(k).map(String::as_str).ok_or(SimError::Unresolved);
    let at = |entity: &str| state.base_of(entity);
    let all_at = |base: Base| state.blocks.iter().all(|b| at(b) == Some(&base));
    let corner = || Corner::parse(slot("corner")?).ok_or_else(|| SimError::Task("unknown corner".into()));
    let ok = match task.template_id {
        PickPlace | PickUserBlock | PickToUserBowl | PickBlockBowl => at(slot("block")?) == Some(&Base::Bowl(slot("bowl")?.into())),
        AllOnCorner | StackOnCorner | StackAll => all_at(Base::Corner(corner()?)),
        AllInBowl => all_at(Base::Bowl(slot("bowl")?.into())),
        DifferentCorners => {
            let corners: Vec<Option<Corner>> = state
                .blocks
                .iter()
                .map(|b| match at(b) {
                    Some(Base::Corner(c)) => Some(*c),
                    _ => None,
                })
                .collect();
            corners.iter().all(Option::is_some) && corners.iter().collect::<BTreeSet<_>>().len() == corners.len()
        }
        MatchingColor | MismatchingColor => {
            let want_same = task.template_id == MatchingColor;
            state.blocks.iter().all(|b| match at(b) {
                Some(Base::Bowl(bowl)) => (color_of(bowl) == color_of(b)) == want_same,
                _ => false,
            })
        }
        GiveTo | GiveToSomeone | GiveDrinkTo | GiveDrinkSomeone => at(slot("item")?) == Some(&Base::Person(slot("person")?.into())),
        WipeDesk | Smash | PutOnGround => return Err(SimError::NoPredicate(task.template_id)),
    };
    Ok(ok)
}

fn mentions(question: &str, phrase: &str) -> bool {
    let cleaned: String = question
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    let padded = format!(" {} ", cleaned.split_whitespace().collect::<Vec<_>>().join(" "));
    padded.contains(&format!(" {phrase} "))
}

/// Scripted user: reveals each open slot the question asks about, or gives
/// an uninformative reply.
pub fn oracle_answer(question: &str, task: &TaskSpec) -> Result<String, SimError> {
    if !task.is_ambiguous() {
        return Err(SimError::Task("the oracle only answers for ambiguous tasks".into()));
    }
    task.validate()?;
    let hidden = task.hidden_intent.as_ref().ok_or(SimError::Unresolved)?;
    let revealed: Vec<String> = task
        .template_id
        .slots()
        .1
        .iter()
        .filter(|slot| slot.cues().iter().any(|cue| mentions(question, cue)))
        .map(|slot| slot.reveal(&hidden[slot.key()]))
        .collect();
    if revealed.is_empty() {
        Ok(UNINFORMATIVE_ANSWER.to_string())
    } else {
        Ok(revealed.join(" and "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::Action;

    fn pick(src: &str, dst: &str) -> Action {
        Action::PickPlace {
            src: src.into(),
            dst: dst.into(),
        }
    }

    fn scene() -> TabletopState {
        TabletopState::from_colors(&["red", "green", "yellow"], &["red", "blue", "green"]).unwrap()
    }

    #[test]
    fn categories_follow_open_slots() {
        for t in TemplateId::ALL {
            let (_, open) = t.slots();
            match t.category() {
                TaskCategory::Ambiguous => assert!(!open.is_empty(), "{t:?}"),
                _ => assert!(open.is_empty(), "{t:?}"),
            }
        }
    }

    #[test]
    fn goal_rendering() {
        let t = TaskSpec::new(TemplateId::PickPlace).bind(Slot::Block, "red block").bind(Slot::Bowl, "Blue bowl");
        assert_eq!(t.goal_text(), "pick the red block and put on the blue bowl");
        assert_eq!(TaskSpec::new(TemplateId::StackAll).goal_text(), "stack all blocks");
    }

    #[test]
    fn validation() {
        assert!(matches!(TaskSpec::new(TemplateId::StackAll).validate(), Err(SimError::Unresolved)));
        assert!(TaskSpec::new(TemplateId::StackAll).intend(Slot::Corner, "top left corner").validate().is_ok());
        assert!(TaskSpec::new(TemplateId::PickPlace).bind(Slot::Block, "red block").validate().is_err());
        assert!(TaskSpec::new(TemplateId::DifferentCorners).intend(Slot::Block, "x").validate().is_err());
        let t = TaskSpec::new(TemplateId::PickPlace).bind(Slot::Block, "purple block").bind(Slot::Bowl, "red bowl");
        assert!(t.validate_against(&scene()).is_err());
        let matching = TaskSpec::new(TemplateId::MatchingColor);
        assert!(matching.validate_against(&scene()).is_err());
        let s = TabletopState::from_colors(&["red", "green"], &["red", "blue", "green"]).unwrap();
        assert!(matching.validate_against(&s).is_ok());
    }

    #[test]
    fn pick_place_success() {
        let t = TaskSpec::new(TemplateId::PickPlace).bind(Slot::Block, "red block").bind(Slot::Bowl, "blue bowl");
        let s = scene();
        assert!(!check_success(&t, &s).unwrap());
        let s = s.apply_action(&pick("red block", "blue bowl")).unwrap();
        assert!(check_success(&t, &s).unwrap());
    }

    #[test]
    fn different_corners_rejects_shared_corner() {
        let t = TaskSpec::new(TemplateId::DifferentCorners);
        let s = TabletopState::from_colors(&["red", "green"], &["blue"]).unwrap();
        let shared = s
            .apply_action(&pick("red block", "top left corner"))
            .unwrap()
            .apply_action(&pick("green block", "top left corner"))
            .unwrap();
        assert!(!check_success(&t, &shared).unwrap());
        let apart = s
            .apply_action(&pick("red block", "top left corner"))
            .unwrap()
            .apply_action(&pick("green block", "bottom left corner"))
            .unwrap();
        assert!(check_success(&t, &apart).unwrap());
    }

    #[test]
    fn infeasible_has_no_predicate() {
        let t = TaskSpec::new(TemplateId::WipeDesk);
        let s = TabletopState::handover(&["coke"], &["alice"]).unwrap();
        assert!(matches!(check_success(&t, &s), Err(SimError::NoPredicate(_))));
    }

    #[test]
    fn unresolved_task_is_an_error() {
        let t = TaskSpec::new(TemplateId::PickBlockBowl);
        assert!(matches!(check_success(&t, &scene()), Err(SimError::Unresolved)));
    }

    #[test]
    fn oracle_reveals_asked_slots() {
        let t = TaskSpec::new(TemplateId::PickToUserBowl)
            .bind(Slot::Block, "red block")
            .intend(Slot::Bowl, "green bowl");
        assert_eq!(oracle_answer("Which bowl should I use?", &t).unwrap(), "the green bowl");
        assert_eq!(oracle_answer("where should it go", &t).unwrap(), "the green bowl");
        assert_eq!(oracle_answer("Do you like cats?", &t).unwrap(), UNINFORMATIVE_ANSWER);
        let both = TaskSpec::new(TemplateId::PickBlockBowl)
            .intend(Slot::Block, "red block")
            .intend(Slot::Bowl, "blue bowl");
        assert_eq!(
            oracle_answer("tell me which block and which bowl.", &both).unwrap(),
            "the red block and the blue bowl"
        );
        let clear = TaskSpec::new(TemplateId::DifferentCorners);
        assert!(oracle_answer("which corner?", &clear).is_err());
    }

    #[test]
    fn oracle_word_boundaries() {
        let t = TaskSpec::new(TemplateId::GiveToSomeone)
            .bind(Slot::Item, "coke")
            .intend(Slot::Person, "bob");
        assert_eq!(oracle_answer("Who should get it?", &t).unwrap(), "bob");
        assert_eq!(oracle_answer("Should I keep the whole thing?", &t).unwrap(), UNINFORMATIVE_ANSWER);
        let d = TaskSpec::new(TemplateId::GiveDrinkTo)
            .bind(Slot::Person, "alice")
            .intend(Slot::Item, "water bottle");
        assert_eq!(oracle_answer("which drink would alice like?", &d).unwrap(), "the water bottle");
    }

    #[test]
    fn drinks() {
        assert!(is_drink("water bottle"));
        assert!(is_drink("coke"));
        assert!(!is_drink("sponge"));
    }
}
