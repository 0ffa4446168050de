//! Symbolic tabletop: blocks and items stacked on bases (table slots, corners,
//! bowls, people's hands).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::prompt::{Entity, SceneDescription};
use crate::skill::SkillCall;

pub const PALETTE: [&str; 6] = ["red", "blue", "green", "yellow", "purple", "orange"];

pub const PICK_AND_PLACE: &str = "robot.pick_and_place(<pick>, <place>)";
pub const GIVE: &str = "robot.give(<object>, <person>)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight];

    pub fn name(self) -> &'static str {
        match self {
            Corner::TopLeft => "top left corner",
            Corner::TopRight => "top right corner",
            Corner::BottomLeft => "bottom left corner",
            Corner::BottomRight => "bottom right corner",
        }
    }

    /// Accepts "top left corner" and "top left".
    pub fn parse(name: &str) -> Option<Corner> {
        let n = normalize_name(name);
        let n = n.strip_suffix(" corner").unwrap_or(&n);
        Corner::ALL.into_iter().find(|c| c.name().strip_suffix(" corner") == Some(n))
    }
}

/// Where a stack of movable objects rests.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "snake_case")]
pub enum Base {
    /// A free spot on the table, numbered in scene order.
    Slot(usize),
    Corner(Corner),
    Bowl(String),
    Person(String),
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Base::Slot(i) => write!(f, "table slot {i}"),
            Base::Corner(c) => f.write_str(c.name()),
            Base::Bowl(b) | Base::Person(b) => f.write_str(b),
        }
    }
}

/// Lowercase, trim, collapse whitespace, turn hyphens into spaces and drop a
/// leading article.
pub fn normalize_name(name: &str) -> String {
    let lowered = name.to_lowercase().replace('-', " ");
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let words = match words.first() {
        Some(&"the") | Some(&"a") => &words[1..],
        _ => &words[..],
    };
    words.join(" ")
}

pub fn color_of(entity: &str) -> Option<&str> {
    entity.split_whitespace().next().filter(|c| PALETTE.contains(c))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "primitive", rename_all = "snake_case")]
pub enum Action {
    PickPlace { src: String, dst: String },
    Give { item: String, person: String },
}

impl Action {
    pub fn from_call(call: &SkillCall) -> Result<Action, SimError> {
        let arity = |n: usize| {
            if call.args.len() == n {
                Ok(())
            } else {
                Err(SimError::BadSkill(format!("{} takes {n} arguments", call.name)))
            }
        };
        match call.name.as_str() {
            "robot.pick_and_place" => {
                arity(2)?;
                Ok(Action::PickPlace {
                    src: call.args[0].clone(),
                    dst: call.args[1].clone(),
                })
            }
            "robot.give" => {
                arity(2)?;
                Ok(Action::Give {
                    item: call.args[0].clone(),
                    person: call.args[1].clone(),
                })
            }
            other => Err(SimError::BadSkill(format!("no primitive named {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabletopState {
    pub blocks: Vec<String>,
    pub bowls: Vec<String>,
    pub items: Vec<String>,
    pub people: Vec<String>,
    /// Stacks bottom to top. Every block and item appears in exactly one.
    stacks: BTreeMap<Base, Vec<String>>,
}

impl TabletopState {
    /// Random scene: colors drawn from the palette without replacement across
    /// all blocks and bowls, each block on its own table slot.
    pub fn init_scene(seed: u64, n_blocks: usize, n_bowls: usize) -> Result<Self, SimError> {
        if n_blocks == 0 || n_bowls == 0 {
            return Err(SimError::Scene("need at least one block and one bowl".into()));
        }
        if n_blocks + n_bowls > PALETTE.len() {
            return Err(SimError::PaletteExhausted {
                requested: n_blocks + n_bowls,
                available: PALETTE.len(),
            });
        }
        let mut colors = PALETTE.to_vec();
        colors.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::from_colors(&colors[..n_blocks], &colors[n_blocks..n_blocks + n_bowls])
    }

    /// Scene with the given block and bowl colors. A block may share its
    /// color with a bowl; blocks (and bowls) must be distinct among themselves.
    pub fn from_colors(block_colors: &[impl AsRef<str>], bowl_colors: &[impl AsRef<str>]) -> Result<Self, SimError> {
        let check = |colors: &[String], what: &str| -> Result<(), SimError> {
            let mut seen = BTreeSet::new();
            for c in colors {
                if !PALETTE.contains(&c.as_str()) {
                    return Err(SimError::Scene(format!("{c:?} is not a palette color")));
                }
                if !seen.insert(c) {
                    return Err(SimError::Scene(format!("two {what} share the color {c}")));
                }
            }
            Ok(())
        };
        let blocks: Vec<String> = block_colors.iter().map(|c| c.as_ref().to_lowercase()).collect();
        let bowls: Vec<String> = bowl_colors.iter().map(|c| c.as_ref().to_lowercase()).collect();
        check(&blocks, "blocks")?;
        check(&bowls, "bowls")?;
        let blocks: Vec<String> = blocks.iter().map(|c| format!("{c} block")).collect();
        let stacks = blocks.iter().enumerate().map(|(i, b)| (Base::Slot(i), vec![b.clone()])).collect();
        Ok(Self {
            blocks,
            bowls: bowls.iter().map(|c| format!("{c} bowl")).collect(),
            items: Vec::new(),
            people: Vec::new(),
            stacks,
        })
    }

    /// Handover scene: items on the table, people to hand them to.
    pub fn handover(items: &[impl AsRef<str>], people: &[impl AsRef<str>]) -> Result<Self, SimError> {
        let items: Vec<String> = items.iter().map(|i| normalize_name(i.as_ref())).collect();
        let people: Vec<String> = people.iter().map(|p| normalize_name(p.as_ref())).collect();
        if items.is_empty() || people.is_empty() {
            return Err(SimError::Scene("handover scene needs items and people".into()));
        }
        let unique = |v: &[String]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !unique(&items) || !unique(&people) {
            return Err(SimError::Scene("duplicate item or person name".into()));
        }
        let stacks = items.iter().enumerate().map(|(i, b)| (Base::Slot(i), vec![b.clone()])).collect();
        Ok(Self {
            blocks: Vec::new(),
            bowls: Vec::new(),
            items,
            people,
            stacks,
        })
    }

    pub fn is_handover(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn movable_count(&self) -> usize {
        self.stacks.values().map(Vec::len).sum()
    }

    pub fn base_of(&self, entity: &str) -> Option<&Base> {
        self.stacks.iter().find(|(_, s)| s.iter().any(|e| e == entity)).map(|(b, _)| b)
    }

    pub fn stack_at(&self, base: &Base) -> &[String] {
        self.stacks.get(base).map_or(&[], Vec::as_slice)
    }

    /// Non-empty stacks in base order.
    pub fn stacks(&self) -> impl Iterator<Item = (&Base, &Vec<String>)> {
        self.stacks.iter().filter(|(_, s)| !s.is_empty())
    }

    fn resolve_movable(&self, name: &str) -> Result<String, SimError> {
        let n = normalize_name(name);
        self.blocks
            .iter()
            .chain(&self.items)
            .find(|e| **e == n)
            .cloned()
            .ok_or_else(|| SimError::UnknownEntity(name.to_string()))
    }

    fn resolve_target(&self, name: &str) -> Result<Base, SimError> {
        let n = normalize_name(name);
        if let Some(c) = Corner::parse(&n) {
            return Ok(Base::Corner(c));
        }
        if let Some(b) = self.bowls.iter().find(|b| **b == n) {
            return Ok(Base::Bowl(b.clone()));
        }
        if self.blocks.contains(&n) || self.items.contains(&n) {
            return Ok(self.base_of(&n).expect("every movable entity is placed").clone());
        }
        Err(SimError::UnknownEntity(name.to_string()))
    }

    fn resolve_person(&self, name: &str) -> Result<String, SimError> {
        let n = normalize_name(name);
        self.people
            .iter()
            .find(|p| **p == n)
            .cloned()
            .ok_or_else(|| SimError::UnknownEntity(name.to_string()))
    }

    fn take_top(&mut self, entity: &str) -> Result<(), SimError> {
        let base = self.base_of(entity).expect("every movable entity is placed").clone();
        let stack = self.stacks.get_mut(&base).expect("base exists");
        if stack.last().map(String::as_str) != Some(entity) {
            return Err(SimError::Buried(entity.to_string()));
        }
        stack.pop();
        if stack.is_empty() {
            self.stacks.remove(&base);
        }
        Ok(())
    }

    /// Apply one primitive, returning the new state.
    pub fn apply_action(&self, action: &Action) -> Result<TabletopState, SimError> {
        let mut next = self.clone();
        match action {
            Action::PickPlace { src, dst } => {
                let src = self.resolve_movable(src)?;
                if normalize_name(dst) == src {
                    return Err(SimError::BadSkill(format!("cannot place {src} on itself")));
                }
                let dst = self.resolve_target(dst)?;
                next.take_top(&src)?;
                next.stacks.entry(dst).or_default().push(src);
            }
            Action::Give { item, person } => {
                let item = self.resolve_movable(item)?;
                let person = self.resolve_person(person)?;
                next.take_top(&item)?;
                next.stacks.entry(Base::Person(person)).or_default().push(item);
            }
        }
        Ok(next)
    }

    pub fn action_set(&self) -> Vec<String> {
        if self.is_handover() {
            vec![GIVE.to_string()]
        } else {
            vec![PICK_AND_PLACE.to_string()]
        }
    }

    pub fn robot_type(&self) -> &'static str {
        if self.is_handover() {
            "handover"
        } else {
            "tabletop"
        }
    }

    /// Scene description for prompting.
    pub fn describe(&self) -> SceneDescription {
        let objects = self.blocks.iter().chain(&self.bowls).chain(&self.items).map(Entity::named).collect();
        SceneDescription {
            robot_type: self.robot_type().to_string(),
            objects,
            people: self.people.iter().map(Entity::named).collect(),
            action_set: self.action_set(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pick(src: &str, dst: &str) -> Action {
        Action::PickPlace {
            src: src.into(),
            dst: dst.into(),
        }
    }

    #[test]
    fn init_scene_is_deterministic() {
        let a = TabletopState::init_scene(7, 3, 2).unwrap();
        assert_eq!(a, TabletopState::init_scene(7, 3, 2).unwrap());
        assert_eq!(a.blocks.len(), 3);
        let colors: BTreeSet<_> = a.blocks.iter().chain(&a.bowls).map(|e| color_of(e).unwrap()).collect();
        assert_eq!(colors.len(), 5);
        assert_eq!(a.stacks().count(), 3);
    }

    #[test]
    fn palette_exhaustion() {
        assert!(matches!(
            TabletopState::init_scene(0, 4, 3),
            Err(SimError::PaletteExhausted { requested: 7, available: 6 })
        ));
        assert!(TabletopState::init_scene(0, 0, 3).is_err());
    }

    #[test]
    fn move_onto_bowl() {
        let s = TabletopState::from_colors(&["red", "green"], &["blue"]).unwrap();
        let t = s.apply_action(&pick("red block", "the blue bowl")).unwrap();
        assert_eq!(t.base_of("red block"), Some(&Base::Bowl("blue bowl".into())));
        assert_eq!(t.base_of("green block"), s.base_of("green block"));
        assert_eq!(t.movable_count(), 2);
    }

    #[test]
    fn buried_block_cannot_move() {
        let s = TabletopState::from_colors(&["red", "green"], &["blue"]).unwrap();
        let t = s.apply_action(&pick("green block", "red block")).unwrap();
        assert_eq!(t.stack_at(&Base::Slot(0)), ["red block", "green block"]);
        assert!(matches!(t.apply_action(&pick("red block", "blue bowl")), Err(SimError::Buried(_))));
        assert!(t.apply_action(&pick("green block", "top-left corner")).is_ok());
    }

    #[test]
    fn unknown_entities() {
        let s = TabletopState::from_colors(&["red"], &["blue"]).unwrap();
        assert!(matches!(s.apply_action(&pick("pink block", "blue bowl")), Err(SimError::UnknownEntity(_))));
        assert!(matches!(s.apply_action(&pick("red block", "floor")), Err(SimError::UnknownEntity(_))));
        assert!(s.apply_action(&pick("red block", "red block")).is_err());
    }

    #[test]
    fn disjoint_moves_commute() {
        let s = TabletopState::from_colors(&["red", "green", "yellow"], &["blue", "purple"]).unwrap();
        let a = pick("red block", "blue bowl");
        let b = pick("green block", "purple bowl");
        let ab = s.apply_action(&a).unwrap().apply_action(&b).unwrap();
        let ba = s.apply_action(&b).unwrap().apply_action(&a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn handover_give() {
        let s = TabletopState::handover(&["coke", "sponge"], &["alice", "bob"]).unwrap();
        let t = s
            .apply_action(&Action::Give {
                item: "the coke".into(),
                person: "Bob".into(),
            })
            .unwrap();
        assert_eq!(t.base_of("coke"), Some(&Base::Person("bob".into())));
        assert_eq!(s.describe().action_set, [GIVE]);
    }

    #[test]
    fn actions_from_calls() {
        let call = SkillCall::parse("robot.pick_and_place(red block, blue bowl)").unwrap();
        assert_eq!(Action::from_call(&call).unwrap(), pick("red block", "blue bowl"));
        assert!(Action::from_call(&SkillCall::parse("robot.wipe(desk)").unwrap()).is_err());
    }

    #[test]
    fn corner_names() {
        assert_eq!(Corner::parse("the Top-Left corner"), Some(Corner::TopLeft));
        assert_eq!(Corner::parse("bottom right"), Some(Corner::BottomRight));
        assert_eq!(Corner::parse("middle"), None);
    }
}
