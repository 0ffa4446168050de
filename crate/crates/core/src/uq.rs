//! Uncertainty estimators.
//!
//! All scores share one orientation: larger means more uncertain.
//! Entropy-based scores are in nats; the context-sampling score is in
//! embedding-space distance units.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_similarity, distance, extract_keywords_generic, Vector};
use crate::gateway::{GenerationSample, TokenPosition};

#[derive(Debug, Error, PartialEq)]
pub enum UqError {
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("{samples} samples but {embeddings} embeddings")]
    LengthMismatch { samples: usize, embeddings: usize },
    #[error("sample has no token probabilities")]
    MissingTokenProbs,
    #[error("sample has no tokens")]
    EmptySequence,
    #[error("no equivalence classes")]
    NoClasses,
    #[error("class probabilities are invalid: {0}")]
    InvalidClassProbs(String),
    #[error("embedding dimensions differ")]
    DimensionMismatch,
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    ContextSampling,
    PredictiveEntropy,
    NormalizedEntropy,
    SemanticEntropy,
    LexicalSimilarity,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::ContextSampling,
        EstimatorKind::PredictiveEntropy,
        EstimatorKind::NormalizedEntropy,
        EstimatorKind::SemanticEntropy,
        EstimatorKind::LexicalSimilarity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::ContextSampling => "context_sampling",
            EstimatorKind::PredictiveEntropy => "predictive_entropy",
            EstimatorKind::NormalizedEntropy => "normalized_entropy",
            EstimatorKind::SemanticEntropy => "semantic_entropy",
            EstimatorKind::LexicalSimilarity => "lexical_similarity",
        }
    }

    pub fn needs_token_probs(self) -> bool {
        matches!(
            self,
            EstimatorKind::PredictiveEntropy | EstimatorKind::NormalizedEntropy | EstimatorKind::SemanticEntropy
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UqError::UnknownEstimator(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub value: f64,
    pub estimator: EstimatorKind,
    pub h: usize,
}

/// H generations with their embeddings. `None` marks a generation whose
/// keywords could not be extracted; any pair involving it is scored at
/// `sentinel_distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<GenerationSample>,
    embeddings: Vec<Option<Vector>>,
    sentinel_distance: f64,
}

impl SampleSet {
    pub fn new(
        samples: Vec<GenerationSample>,
        embeddings: Vec<Option<Vector>>,
        sentinel_distance: f64,
    ) -> Result<Self, UqError> {
        if samples.len() != embeddings.len() {
            return Err(UqError::LengthMismatch {
                samples: samples.len(),
                embeddings: embeddings.len(),
            });
        }
        if samples.len() < 2 {
            return Err(UqError::TooFewSamples(samples.len()));
        }
        let mut dims = embeddings.iter().flatten().map(Vector::dimension);
        if let Some(first) = dims.next() {
            if dims.any(|d| d != first) {
                return Err(UqError::DimensionMismatch);
            }
        }
        Ok(Self {
            samples,
            embeddings,
            sentinel_distance,
        })
    }

    /// A set built from bare vectors, with placeholder samples.
    pub fn from_vectors(vectors: Vec<Vector>) -> Result<Self, UqError> {
        let samples = vectors.iter().map(|_| GenerationSample::from_text("")).collect();
        Self::new(samples, vectors.into_iter().map(Some).collect(), 0.0)
    }

    pub fn h(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[GenerationSample] {
        &self.samples
    }

    pub fn embeddings(&self) -> &[Option<Vector>] {
        &self.embeddings
    }

    pub fn degenerate_count(&self) -> usize {
        self.embeddings.iter().filter(|e| e.is_none()).count()
    }

    fn pair_distance(&self, i: usize, j: usize) -> f64 {
        match (&self.embeddings[i], &self.embeddings[j]) {
            (Some(a), Some(b)) => distance(a, b).unwrap_or(self.sentinel_distance),
            _ => self.sentinel_distance,
        }
    }
}

/// Mean of `f` over unordered distinct pairs.
fn pair_mean(h: usize, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    for i in 0..h {
        for j in i + 1..h {
            total += f(i, j);
        }
    }
    total * 2.0 / (h * (h - 1)) as f64
}

/// Mean pairwise Euclidean distance between the sample embeddings.
pub fn context_sampling_uncertainty(set: &SampleSet) -> UncertaintyScore {
    UncertaintyScore {
        value: pair_mean(set.h(), |i, j| set.pair_distance(i, j)),
        estimator: EstimatorKind::ContextSampling,
        h: set.h(),
    }
}

fn position_entropy(pos: &TokenPosition) -> f64 {
    let fallback = [pos.prob];
    let probs: Vec<f64> = if pos.top.is_empty() {
        fallback.to_vec()
    } else {
        pos.top.iter().map(|a| a.prob).collect()
    };
    let total: f64 = probs.iter().sum();
    probs
        .iter()
        .map(|p| p / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

fn token_probs(sample: &GenerationSample) -> Result<&[TokenPosition], UqError> {
    let probs = sample.token_probs.as_deref().ok_or(UqError::MissingTokenProbs)?;
    if probs.is_empty() {
        return Err(UqError::EmptySequence);
    }
    Ok(probs)
}

fn sequence_entropy(sample: &GenerationSample) -> Result<(f64, usize), UqError> {
    let probs = token_probs(sample)?;
    Ok((probs.iter().map(position_entropy).sum(), probs.len()))
}

/// Sum over positions of the entropy of the top-K distribution, renormalized
/// to one at each position.
pub fn predictive_entropy(sample: &GenerationSample) -> Result<UncertaintyScore, UqError> {
    let (value, _) = sequence_entropy(sample)?;
    Ok(UncertaintyScore {
        value,
        estimator: EstimatorKind::PredictiveEntropy,
        h: 1,
    })
}

pub fn normalized_entropy(sample: &GenerationSample) -> Result<UncertaintyScore, UqError> {
    let (value, len) = sequence_entropy(sample)?;
    Ok(UncertaintyScore {
        value: value / len as f64,
        estimator: EstimatorKind::NormalizedEntropy,
        h: 1,
    })
}

/// `-(1/|L|) * sum_i ln p(L_i)` over the class probabilities.
pub fn semantic_entropy_from_class_probs(class_probs: &[f64]) -> Result<f64, UqError> {
    if class_probs.is_empty() {
        return Err(UqError::NoClasses);
    }
    if class_probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0 + 1e-6)) {
        return Err(UqError::InvalidClassProbs(format!("{class_probs:?}")));
    }
    let sum: f64 = class_probs.iter().sum();
    if sum > 1.0 + 1e-6 {
        return Err(UqError::InvalidClassProbs(format!("sum {sum} exceeds 1")));
    }
    let mean_log = class_probs.iter().map(|p| p.ln()).sum::<f64>() / class_probs.len() as f64;
    Ok((-mean_log).max(0.0))
}

/// Group sample indices into classes under `equivalence`. Each sample joins
/// the first class whose representative it is equivalent to.
pub fn equivalence_classes(
    samples: &[GenerationSample],
    equivalence: impl Fn(&GenerationSample, &GenerationSample) -> bool,
) -> Vec<Vec<usize>> {
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match classes.iter_mut().find(|c| equivalence(&samples[c[0]], s)) {
            Some(class) => class.push(i),
            None => classes.push(vec![i]),
        }
    }
    classes
}

/// Sample probabilities `exp(sum ln p(token))`, normalized over the set.
pub fn normalized_sequence_probs(samples: &[GenerationSample]) -> Result<Vec<f64>, UqError> {
    let logs = samples
        .iter()
        .map(|s| Ok(token_probs(s)?.iter().map(|p| p.prob.ln()).sum::<f64>()))
        .collect::<Result<Vec<f64>, UqError>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

pub fn semantic_entropy(
    set: &SampleSet,
    equivalence: impl Fn(&GenerationSample, &GenerationSample) -> bool,
) -> Result<UncertaintyScore, UqError> {
    let probs = normalized_sequence_probs(set.samples())?;
    let class_probs: Vec<f64> = equivalence_classes(set.samples(), equivalence)
        .iter()
        .map(|c| c.iter().map(|&i| probs[i]).sum::<f64>().min(1.0))
        .collect();
    Ok(UncertaintyScore {
        value: semantic_entropy_from_class_probs(&class_probs)?,
        estimator: EstimatorKind::SemanticEntropy,
        h: set.h(),
    })
}

/// One minus the mean pairwise cosine similarity of the sample embeddings.
/// Pairs involving a degenerate generation count as dissimilar.
pub fn lexical_similarity(set: &SampleSet) -> UncertaintyScore {
    let mean_sim = pair_mean(set.h(), |i, j| match (&set.embeddings[i], &set.embeddings[j]) {
        (Some(a), Some(b)) => cosine_similarity(a, b).unwrap_or(0.0),
        _ => 0.0,
    });
    UncertaintyScore {
        value: 1.0 - mean_sim,
        estimator: EstimatorKind::LexicalSimilarity,
        h: set.h(),
    }
}

/// Two generations are equivalent when their keyword sets are equal.
pub fn default_equivalence(a: &GenerationSample, b: &GenerationSample) -> bool {
    let ka = extract_keywords_generic(&a.text).map(|k| k.words).unwrap_or_default();
    let kb = extract_keywords_generic(&b.text).map(|k| k.words).unwrap_or_default();
    let sa: std::collections::BTreeSet<String> = ka.into_iter().collect();
    let sb: std::collections::BTreeSet<String> = kb.into_iter().collect();
    sa == sb
}

fn mean_over_samples(
    set: &SampleSet,
    kind: EstimatorKind,
    f: fn(&GenerationSample) -> Result<UncertaintyScore, UqError>,
) -> Result<UncertaintyScore, UqError> {
    let total = set
        .samples()
        .iter()
        .map(|s| f(s).map(|u| u.value))
        .sum::<Result<f64, UqError>>()?;
    Ok(UncertaintyScore {
        value: total / set.h() as f64,
        estimator: kind,
        h: set.h(),
    })
}

/// Score a sample set with `kind`. Per-sample entropies are averaged over the set.
pub fn score(kind: EstimatorKind, set: &SampleSet) -> Result<UncertaintyScore, UqError> {
    match kind {
        EstimatorKind::ContextSampling => Ok(context_sampling_uncertainty(set)),
        EstimatorKind::PredictiveEntropy => mean_over_samples(set, kind, predictive_entropy),
        EstimatorKind::NormalizedEntropy => mean_over_samples(set, kind, normalized_entropy),
        EstimatorKind::SemanticEntropy => semantic_entropy(set, default_equivalence),
        EstimatorKind::LexicalSimilarity => Ok(lexical_similarity(set)),
    }
}
