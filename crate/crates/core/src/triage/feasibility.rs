//! Keyword parser for zero-shot feasibility answers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityKeywords {
    pub negation: Vec<String>,
    pub affirmation: Vec<String>,
}

impl Default for FeasibilityKeywords {
    fn default() -> Self {
        let owned = |words: &[&str]| words.iter().map(|w| w.to_string()).collect();
        Self {
            negation: owned(&[
                "no",
                "not",
                "cannot",
                "can't",
                "unable",
                "not able",
                "impossible",
                "infeasible",
                "outside",
                "beyond",
            ]),
            affirmation: owned(&["yes", "i can", "sure", "certainly"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub raw_answer: String,
    pub matched_keyword: String,
}

/// Word characters for boundary checks. Apostrophes count so that "i can"
/// does not match inside "i can't".
fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Byte offset of the first whole-phrase occurrence of `needle` in `hay`.
fn find_phrase(hay: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let mut from = 0;
    while let Some(rel) = hay[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let before_ok = hay[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = hay[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return Some(start);
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Earliest keyword hit; at equal offsets the longer keyword wins.
fn earliest<'a>(text: &str, keywords: &'a [String]) -> Option<(usize, &'a str)> {
    keywords
        .iter()
        .filter_map(|k| find_phrase(text, &k.to_lowercase()).map(|pos| (pos, k.as_str())))
        .min_by(|a, b| a.0.cmp(&b.0).then(b.1.len().cmp(&a.1.len())))
}

/// Infeasible iff a negation keyword occurs in the first sentence before any
/// affirmation keyword. An empty answer is treated as infeasible.
pub fn parse_feasibility_answer(answer: &str, keywords: &FeasibilityKeywords) -> FeasibilityVerdict {
    let verdict = |feasible: bool, keyword: &str| FeasibilityVerdict {
        feasible,
        raw_answer: answer.to_string(),
        matched_keyword: keyword.to_string(),
    };
    let normalized = answer.trim().to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    if normalized.is_empty() {
        return verdict(false, "default-empty");
    }
    let first_sentence = normalized.split(['.', '!', '?', '\n']).find(|s| !s.trim().is_empty()).unwrap_or("");
    let negation = earliest(first_sentence, &keywords.negation);
    let affirmation = earliest(first_sentence, &keywords.affirmation);
    match (negation, affirmation) {
        (Some((n, kw)), Some((a, _))) if n < a => verdict(false, kw),
        (Some((_, kw)), None) => verdict(false, kw),
        (_, Some((_, kw))) => verdict(true, kw),
        (None, None) => verdict(true, "default"),
    }
}
