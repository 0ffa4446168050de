//! Choosing the uncertainty threshold from labelled validation data.

use serde::{Deserialize, Serialize};

use super::{TriageConfig, TriageError, TriagePipeline};
use crate::prompt::{GoalCommand, SceneDescription};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub epsilon: f64,
    /// Youden's J = TPR + TNR - 1 at this threshold, with "uncertain" as
    /// the positive class.
    pub j: f64,
}

/// Threshold maximizing Youden's J when "uncertain" means score > epsilon.
///
/// Candidates are the distinct observed scores (plus one below the minimum,
/// so that "everything uncertain" is reachable). Ties go to the smallest
/// candidate. Returns `None` unless both classes are present.
pub fn youden_threshold(scores: &[f64], is_uncertain: &[bool]) -> Option<ThresholdChoice> {
    assert_eq!(scores.len(), is_uncertain.len(), "scores and labels differ in length");
    let positives = is_uncertain.iter().filter(|&&u| u).count();
    let negatives = is_uncertain.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let below = candidates[0] - 1.0;
    candidates.insert(0, below);

    let mut best: Option<ThresholdChoice> = None;
    for &epsilon in &candidates {
        let mut tp = 0usize;
        let mut tn = 0usize;
        for (&s, &u) in scores.iter().zip(is_uncertain) {
            match (s > epsilon, u) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                _ => {}
            }
        }
        let j = tp as f64 / positives as f64 + tn as f64 / negatives as f64 - 1.0;
        if best.is_none_or(|b| j > b.j) {
            best = Some(ThresholdChoice { epsilon, j });
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct ValidationRow {
    pub goal: GoalCommand,
    pub scene: SceneDescription,
    pub uncertain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub choice: ThresholdChoice,
    pub scores: Vec<f64>,
}

impl TriagePipeline {
    /// Score every validation row and pick the Youden-optimal threshold.
    /// The config's own epsilon is ignored.
    pub fn calibrate_epsilon(&self, rows: &[ValidationRow], config: &TriageConfig) -> Result<Calibration, TriageError> {
        let scores = rows
            .iter()
            .map(|r| {
                self.forked()
                    .estimate_sigma(&r.goal, &r.scene, config)
                    .map(|e| e.score.value)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<bool> = rows.iter().map(|r| r.uncertain).collect();
        let choice = youden_threshold(&scores, &labels).ok_or(TriageError::DegenerateValidation)?;
        Ok(Calibration { choice, scores })
    }
}
