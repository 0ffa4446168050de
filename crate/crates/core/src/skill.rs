//! Low-level skill calls of the form `robot.pick_and_place(red block, blue bowl)`.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkillCall {
    pub name: String,
    pub args: Vec<String>,
}

impl SkillCall {
    pub fn new(name: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    /// Parse a single call. Surrounding whitespace and a trailing `;` are ignored.
    pub fn parse(line: &str) -> Option<Self> {
        let line = line.trim().trim_end_matches(';').trim();
        let open = line.find('(')?;
        if !line.ends_with(')') {
            return None;
        }
        let name = line[..open].trim();
        let valid_name = !name.is_empty()
            && name
                .split('.')
                .all(|part| !part.is_empty() && part.chars().all(|c| c.is_alphanumeric() || c == '_'));
        if !valid_name {
            return None;
        }
        let inner = &line[open + 1..line.len() - 1];
        if inner.contains('(') || inner.contains(')') {
            return None;
        }
        let args = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(|a| a.trim().to_string()).collect()
        };
        Some(Self {
            name: name.to_string(),
            args,
        })
    }

    /// Lowercased, whitespace-collapsed form used to compare generations.
    pub fn canonical(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| a.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
            .collect();
        format!("{}({})", self.name.to_lowercase(), args.join(", "))
    }
}

impl fmt::Display for SkillCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

/// An ordered sequence of calls parsed from one generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPlan {
    pub text: String,
    pub calls: Vec<SkillCall>,
}

impl SkillPlan {
    /// Parse every non-empty line of `text` as a call. Fails if any line is
    /// not a call or if there are none.
    pub fn parse(text: &str) -> Option<Self> {
        let calls: Option<Vec<SkillCall>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(SkillCall::parse)
            .collect();
        let calls = calls?;
        if calls.is_empty() {
            return None;
        }
        Some(Self {
            text: text.trim().to_string(),
            calls,
        })
    }

    pub fn canonical(&self) -> String {
        self.calls.iter().map(SkillCall::canonical).collect::<Vec<_>>().join("\n")
    }
}

/// A skill signature such as `robot.pick_and_place(<pick>, <place>)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillTemplate {
    pub name: String,
    pub slots: Vec<String>,
}

impl SkillTemplate {
    pub fn parse(signature: &str) -> Option<Self> {
        let call = SkillCall::parse(signature)?;
        Some(Self {
            name: call.name,
            slots: call.args,
        })
    }

    pub fn matches(&self, call: &SkillCall) -> bool {
        call.name.eq_ignore_ascii_case(&self.name)
    }
}

/// `<...>` placeholders are template slots, not content.
pub fn is_placeholder(arg: &str) -> bool {
    let a = arg.trim();
    a.starts_with('<') && a.ends_with('>')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_call() {
        let c = SkillCall::parse("robot.pick_and_place(red block, blue bowl)").unwrap();
        assert_eq!(c.name, "robot.pick_and_place");
        assert_eq!(c.args, ["red block", "blue bowl"]);
        assert_eq!(c.to_string(), "robot.pick_and_place(red block, blue bowl)");
    }

    #[test]
    fn rejects_free_text() {
        assert!(SkillCall::parse("I will grab the apple").is_none());
        assert!(SkillCall::parse("robot pick(a)").is_none());
        assert!(SkillCall::parse("f(a(b))").is_none());
    }

    #[test]
    fn empty_args() {
        assert_eq!(SkillCall::parse("robot.wait()").unwrap().args, Vec::<String>::new());
        assert_eq!(SkillCall::parse("robot.pick_and_place(, )").unwrap().args, ["", ""]);
    }

    #[test]
    fn canonical_ignores_case_and_spacing() {
        let a = SkillCall::parse("Robot.Pick(Red  Block, bowl)").unwrap();
        let b = SkillCall::parse("robot.pick(red block,bowl)").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn plan_needs_every_line_to_parse() {
        let plan = SkillPlan::parse("robot.a(x)\n\nrobot.b(y)\n").unwrap();
        assert_eq!(plan.calls.len(), 2);
        assert!(SkillPlan::parse("robot.a(x)\nthen stop").is_none());
        assert!(SkillPlan::parse("  ").is_none());
    }

    #[test]
    fn template_slots() {
        let t = SkillTemplate::parse("robot.pick_and_place(<pick>, <place>)").unwrap();
        assert_eq!(t.slots, ["<pick>", "<place>"]);
        assert!(t.slots.iter().all(|s| is_placeholder(s)));
    }
}
