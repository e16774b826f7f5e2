//! Evaluation quantities over judged runs.
//!
//! PSR is the fraction of final scores that are perfect (exactly 5), UR the
//! fraction that are usable (4 or better). Accuracy₅ measures how often the
//! automated judge's perfect scores agree with human raters:
//! pred5_pos / (pred5_pos + pred5_neg). Distribution distance is the
//! per-dimension L1 gap between two categorical distributions, used to check
//! produced output against the plan or profile it targeted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty score list")]
    Empty,
}

/// Perfect Score Rate: fraction of scores equal to 5.
pub fn psr(final_scores: &[u8]) -> Result<f64, MetricsError> {
    if final_scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let perfect = final_scores.iter().filter(|s| **s == 5).count();
    Ok(perfect as f64 / final_scores.len() as f64)
}

/// Usability Rate: fraction of scores of at least 4.
pub fn ur(final_scores: &[u8]) -> Result<f64, MetricsError> {
    if final_scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let usable = final_scores.iter().filter(|s| **s >= 4).count();
    Ok(usable as f64 / final_scores.len() as f64)
}

/// Agreement counts between system scores and human ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JudgeAgreementCounts {
    /// System said 5 and the human agreed.
    pub pred5_pos: u64,
    /// System said 5 but the human did not.
    pub pred5_neg: u64,
    /// Humans said 5, regardless of the system.
    pub human5_total: u64,
    /// Both said 5 (equals `pred5_pos`).
    pub recalled5: u64,
}

impl JudgeAgreementCounts {
    pub fn from_pairs(pairs: &[(u8, u8)]) -> Self {
        let mut counts = JudgeAgreementCounts::default();
        for &(system, human) in pairs {
            if system == 5 && human == 5 {
                counts.pred5_pos += 1;
                counts.recalled5 += 1;
            } else if system == 5 {
                counts.pred5_neg += 1;
            }
            if human == 5 {
                counts.human5_total += 1;
            }
        }
        counts
    }
}

/// Accuracy₅ report; fields are `None` when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy5Report {
    pub counts: JudgeAgreementCounts,
    /// pred5_pos / (pred5_pos + pred5_neg).
    pub accuracy5: Option<f64>,
    /// Among system-5s the human rejected, the fraction still usable (≥4).
    pub usable_among_misses: Option<f64>,
    /// pred5_pos / human5_total: how many human 5s the system recalls.
    pub recall5: Option<f64>,
}

/// Computes Accuracy₅ over (system score, human score) pairs.
pub fn accuracy5(pairs: &[(u8, u8)]) -> Accuracy5Report {
    let counts = JudgeAgreementCounts::from_pairs(pairs);
    let predicted5 = counts.pred5_pos + counts.pred5_neg;
    let accuracy5 = (predicted5 > 0).then(|| counts.pred5_pos as f64 / predicted5 as f64);
    let usable_misses = pairs
        .iter()
        .filter(|(s, h)| *s == 5 && *h != 5 && *h >= 4)
        .count() as u64;
    let usable_among_misses =
        (counts.pred5_neg > 0).then(|| usable_misses as f64 / counts.pred5_neg as f64);
    let recall5 =
        (counts.human5_total > 0).then(|| counts.pred5_pos as f64 / counts.human5_total as f64);
    Accuracy5Report {
        counts,
        accuracy5,
        usable_among_misses,
        recall5,
    }
}

fn normalize(dist: &BTreeMap<String, f64>) -> BTreeMap<&str, f64> {
    let total: f64 = dist.values().filter(|v| **v > 0.0).sum();
    if total <= 0.0 {
        return BTreeMap::new();
    }
    dist.iter()
        .filter(|(_, v)| **v > 0.0)
        .map(|(k, v)| (k.as_str(), v / total))
        .collect()
}

/// L1 distance Σ|p−q| between two categorical distributions after
/// normalization. Symmetric, and bounded by [0, 2].
pub fn l1_distance(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let p = normalize(p);
    let q = normalize(q);
    let keys: std::collections::BTreeSet<&str> = p.keys().chain(q.keys()).copied().collect();
    keys.into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum()
}

/// Per-dimension L1 distance between two keyed distribution families.
/// Only dimensions present on both sides are compared.
pub fn distribution_distance(
    expected: &BTreeMap<String, BTreeMap<String, f64>>,
    produced: &BTreeMap<String, BTreeMap<String, f64>>,
) -> BTreeMap<String, f64> {
    expected
        .iter()
        .filter_map(|(dim, p)| produced.get(dim).map(|q| (dim.clone(), l1_distance(p, q))))
        .collect()
}

/// Full metrics report emitted by the report stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scorecard_count: u64,
    pub dataset_size: u64,
    pub psr: Option<f64>,
    pub ur: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy5: Option<Accuracy5Report>,
    pub per_dimension_l1: BTreeMap<String, f64>,
}

impl MetricsReport {
    /// Plain-text table rendering for terminals.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{:.4}", v),
            None => "n/a".to_string(),
        };
        let mut out = String::new();
        out.push_str(&format!("{:<28} {:>10}\n", "metric", "value"));
        out.push_str(&format!("{:-<39}\n", ""));
        out.push_str(&format!(
            "{:<28} {:>10}\n",
            "scorecards", self.scorecard_count
        ));
        out.push_str(&format!(
            "{:<28} {:>10}\n",
            "dataset size", self.dataset_size
        ));
        out.push_str(&format!("{:<28} {:>10}\n", "psr", fmt(self.psr)));
        out.push_str(&format!("{:<28} {:>10}\n", "ur", fmt(self.ur)));
        if let Some(acc) = &self.accuracy5 {
            out.push_str(&format!("{:<28} {:>10}\n", "accuracy5", fmt(acc.accuracy5)));
            out.push_str(&format!(
                "{:<28} {:>10}\n",
                "recall of human 5s",
                fmt(acc.recall5)
            ));
            out.push_str(&format!(
                "{:<28} {:>10}\n",
                "usable among misses",
                fmt(acc.usable_among_misses)
            ));
        }
        for (dim, distance) in &self.per_dimension_l1 {
            out.push_str(&format!("{:<28} {:>10.4}\n", format!("L1 {dim}"), distance));
        }
        out
    }
}

/// The manual penalty-point rubric handed to human raters. Documentation
/// only: the automated path runs the deduction rule table, never this.
pub const HUMAN_RATER_RUBRIC: &str = r#"{
  "max_score": 5,
  "categories": [
    {
      "category": "content_errors",
      "common_scene": [
        "code errors",
        "description error",
        "response repetition",
        "programming language errors",
        "response truncation",
        "not meeting user requirements"
      ],
      "special_scene": {
        "code_explanation": ["nonsense content", "missing critical content"],
        "comment_generation": [
          "nonsense content",
          "missing function header comments",
          "function header comments out of specification",
          "comment locale error"
        ],
        "code_repair": ["missing or redundant code repair"],
        "code_editing": ["missing or redundant code editing"]
      }
    },
    {
      "category": "format_issues",
      "common_scene": ["locale error", "markdown error", "response formatting issues"],
      "special_scene": {
        "code_repair": ["lack of complete fix code", "lack of basic text description"],
        "inline_chat": ["text description before the code"],
        "chat_view": ["lack of basic text description"]
      }
    }
  ]
}"#;
