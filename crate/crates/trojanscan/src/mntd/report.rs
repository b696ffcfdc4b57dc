//! Per-model detection scores rolled up into a report.

use super::auc::compute_auc;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReportRow {
    /// Model path or name.
    pub name: String,
    /// Ground truth when known: `true` = Trojaned.
    pub label: Option<bool>,
    pub score: f64,
}

/// Scores for a labeled batch of targets, with the AUC and a working
/// threshold ("score >= threshold" flags a model as Trojaned).
#[derive(Debug, Clone)]
pub struct DetectionReport {
    pub rows: Vec<ReportRow>,
    pub auc: f64,
    pub threshold: f64,
}

impl DetectionReport {
    /// Build from labeled rows; both labels must be present.
    pub fn from_rows(rows: Vec<ReportRow>) -> Result<Self> {
        let pos = collect_scores(&rows, true);
        let neg = collect_scores(&rows, false);
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::invalid(
                "a detection report needs both Trojaned and benign rows",
            ));
        }
        let auc = compute_auc(&pos, &neg)?;
        let threshold = choose_threshold(&pos, &neg);
        Ok(DetectionReport {
            rows,
            auc,
            threshold,
        })
    }

    pub fn scores_trojan(&self) -> Vec<f64> {
        collect_scores(&self.rows, true)
    }

    pub fn scores_benign(&self) -> Vec<f64> {
        collect_scores(&self.rows, false)
    }
}

fn collect_scores(rows: &[ReportRow], label: bool) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.label == Some(label))
        .map(|r| r.score)
        .collect()
}

/// The candidate threshold maximizing TPR - FPR; the smallest one wins ties.
fn choose_threshold(pos: &[f64], neg: &[f64]) -> f64 {
    let mut candidates: Vec<f64> = pos.iter().chain(neg).cloned().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    candidates.dedup();
    let mut best = candidates[0];
    let mut best_j = f64::NEG_INFINITY;
    for &t in &candidates {
        let tpr = pos.iter().filter(|&&s| s >= t).count() as f64 / pos.len() as f64;
        let fpr = neg.iter().filter(|&&s| s >= t).count() as f64 / neg.len() as f64;
        let j = tpr - fpr;
        if j > best_j {
            best_j = j;
            best = t;
        }
    }
    best
}
