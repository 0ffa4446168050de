//! Keyword embedding space.
//!
//! A generation is reduced to the content words that fill its skill-call
//! slots, each word is looked up in a word2vec-style table, and the
//! generation's embedding is the unweighted mean of those vectors.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::fnv1a;
use crate::skill::{is_placeholder, SkillCall, SkillTemplate};

const STOPWORDS_DATA: &str = include_str!("../data/stopwords.txt");
const HASH_BUCKETS: u64 = 1024;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line 1: malformed header {0:?} (expected \"vocab_size dimension\")")]
    MalformedHeader(String),
    #[error("header declares {declared} words but the file has {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("line {line}: expected {expected} values, found {found}")]
    Arity { line: usize, expected: usize, found: usize },
    #[error("line {line}: {value:?} is not a finite number")]
    BadNumber { line: usize, value: String },
    #[error("no keywords left after removing the skill template")]
    NoKeywords,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Out-of-vocabulary words contribute a zero vector.
    #[default]
    Zero,
    /// Out-of-vocabulary words map to a deterministic pseudo-random vector
    /// chosen by hashing the word into one of a fixed number of buckets.
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(dimension: usize) -> Self {
        Vector(vec![0.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64, EmbedError> {
        check_dims(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }
}

fn check_dims(a: &Vector, b: &Vector) -> Result<(), EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    Ok(())
}

/// Euclidean distance.
pub fn distance(a: &Vector, b: &Vector) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64, EmbedError> {
    let dot = a.dot(b)?;
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vector>,
    oov_policy: OovPolicy,
    duplicates: Vec<String>,
    max_norm: f64,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, entries: HashMap<String, Vector>) -> Result<Self, EmbedError> {
        if dimension == 0 {
            return Err(EmbedError::MalformedHeader("dimension must be at least 1".into()));
        }
        for v in entries.values() {
            if v.dimension() != dimension {
                return Err(EmbedError::DimensionMismatch(v.dimension(), dimension));
            }
        }
        let max_norm = entries.values().map(Vector::norm).fold(0.0, f64::max);
        Ok(Self {
            dimension,
            entries,
            oov_policy: OovPolicy::Zero,
            duplicates: Vec::new(),
            max_norm,
        })
    }

    pub fn with_oov_policy(mut self, policy: OovPolicy) -> Self {
        self.oov_policy = policy;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn get(&self, word: &str) -> Option<&Vector> {
        self.entries.get(word)
    }

    /// Words that appeared more than once in the loaded file (last row won).
    pub fn duplicates(&self) -> &[String] {
        &self.duplicates
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    /// Distance assigned to any pair involving a generation with no keywords.
    pub fn sentinel_distance(&self) -> f64 {
        2.0 * self.max_norm
    }

    fn lookup(&self, word: &str) -> Option<Vector> {
        if let Some(v) = self.entries.get(word) {
            return Some(v.clone());
        }
        match self.oov_policy {
            OovPolicy::Zero => None,
            OovPolicy::Hash => {
                let bucket = fnv1a(word.as_bytes()) % HASH_BUCKETS;
                let mut rng = ChaCha8Rng::seed_from_u64(bucket);
                let scale = 1.0 / (self.dimension as f64).sqrt();
                Some(Vector((0..self.dimension).map(|_| rng.random_range(-1.0..1.0) * scale).collect()))
            }
        }
    }

    /// Write in the textual format read by [`load_table`], words sorted.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.entries.len(), self.dimension)?;
        let mut words: Vec<&String> = self.entries.keys().collect();
        words.sort();
        for w in words {
            write!(out, "{w}")?;
            for x in &self.entries[w].0 {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn load_table(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbedError> {
    parse_table(std::fs::File::open(path)?)
}

/// Parse `vocab_size dimension` followed by one `word v1 ... vd` row per word.
pub fn parse_table(reader: impl Read) -> Result<EmbeddingTable, EmbedError> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let parts: Vec<&str> = header.split_whitespace().collect();
    let (declared, dimension) = match parts.as_slice() {
        [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
            (Ok(n), Ok(d)) if d > 0 => (n, d),
            _ => return Err(EmbedError::MalformedHeader(header)),
        },
        _ => return Err(EmbedError::MalformedHeader(header)),
    };

    let mut entries = HashMap::with_capacity(declared);
    let mut duplicates = Vec::new();
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap_or_default().to_string();
        let values: Vec<&str> = fields.collect();
        if values.len() != dimension {
            return Err(EmbedError::Arity {
                line: line_no,
                expected: dimension,
                found: values.len(),
            });
        }
        let vector = values
            .iter()
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(EmbedError::BadNumber {
                    line: line_no,
                    value: v.to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows += 1;
        if entries.insert(word.clone(), Vector(vector)).is_some() {
            tracing::warn!(word = %word, line = line_no, "duplicate embedding row; keeping the last one");
            duplicates.push(word);
        }
    }
    if rows != declared {
        return Err(EmbedError::CountMismatch { declared, found: rows });
    }
    let mut table = EmbeddingTable::new(dimension, entries)?;
    table.duplicates = duplicates;
    Ok(table)
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_DATA.lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub words: Vec<String>,
}

impl KeywordSet {
    pub fn as_set(&self) -> HashSet<&str> {
        self.words.iter().map(String::as_str).collect()
    }
}

fn content_words(text: &str) -> Vec<String> {
    let stop = stopwords();
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !stop.contains(w.as_str()))
        .collect()
}

fn first_line(text: &str) -> &str {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().unwrap_or("");
    if lines.next().is_some() {
        tracing::debug!("generation has several lines; keywords come from the first only");
    }
    first
}

fn finish(words: Vec<String>) -> Result<KeywordSet, EmbedError> {
    if words.is_empty() {
        Err(EmbedError::NoKeywords)
    } else {
        Ok(KeywordSet { words })
    }
}

fn slot_words(call: &SkillCall) -> Vec<String> {
    call.args
        .iter()
        .filter(|a| !is_placeholder(a))
        .flat_map(|a| content_words(a))
        .collect()
}

/// Content words of the slot fillers, or of the whole first line when the
/// generation is not a call to `template`.
pub fn extract_keywords(generation: &str, template: &SkillTemplate) -> Result<KeywordSet, EmbedError> {
    extract_keywords_any(generation, std::slice::from_ref(template))
}

/// Like [`extract_keywords`], trying each template in turn.
pub fn extract_keywords_any(generation: &str, templates: &[SkillTemplate]) -> Result<KeywordSet, EmbedError> {
    let line = first_line(generation);
    match SkillCall::parse(line) {
        Some(call) if templates.iter().any(|t| t.matches(&call)) => finish(slot_words(&call)),
        _ => finish(content_words(line)),
    }
}

/// Template-free extraction: slot fillers of any call, else content words.
pub fn extract_keywords_generic(generation: &str) -> Result<KeywordSet, EmbedError> {
    let line = first_line(generation);
    match SkillCall::parse(line) {
        Some(call) => finish(slot_words(&call)),
        None => finish(content_words(line)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vector,
    pub oov_words: usize,
    /// Every keyword was out of vocabulary under the zero policy.
    pub all_oov: bool,
}

/// Mean of the keyword vectors.
pub fn embed(keywords: &KeywordSet, table: &EmbeddingTable) -> Embedding {
    let mut sum = vec![0.0; table.dimension()];
    let mut oov = 0;
    for w in &keywords.words {
        match table.lookup(w) {
            Some(v) => sum.iter_mut().zip(&v.0).for_each(|(s, x)| *s += x),
            None => oov += 1,
        }
    }
    let n = keywords.words.len().max(1) as f64;
    let all_oov = !keywords.words.is_empty() && oov == keywords.words.len();
    if all_oov {
        tracing::warn!(words = ?keywords.words, "all keywords out of vocabulary");
    }
    Embedding {
        vector: Vector(sum.into_iter().map(|s| s / n).collect()),
        oov_words: oov,
        all_oov,
    }
}
