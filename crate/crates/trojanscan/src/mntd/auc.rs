//! Area under the ROC curve via the rank-sum (Mann-Whitney) identity.

use crate::error::{Error, Result};

/// Probability that a random positive outranks a random negative, with ties
/// counted half. Computed from average ranks, which is exact: every rank is
/// a multiple of one half, so no floating-point rounding occurs on the way
/// to the final division.
pub fn compute_auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::invalid("both score arrays must be nonempty"));
    }
    if scores_pos.iter().chain(scores_neg).any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let np = scores_pos.len();
    let nn = scores_neg.len();
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores_neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores compare"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the average rank.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = all[i..j].iter().filter(|(_, p)| *p).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum_pos - (np * (np + 1)) as f64 / 2.0;
    Ok(u / (np as f64 * nn as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_is_one() {
        assert_eq!(compute_auc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn identical_multisets_are_half() {
        let s = [0.1, 0.5, 0.5, 2.0];
        assert_eq!(compute_auc(&s, &s).unwrap(), 0.5);
    }

    #[test]
    fn tie_rule_matches_pair_counting() {
        // Pairs: (1 vs 1) = 1/2, (1 vs 3) = 0, (2 vs 1) = 1, (2 vs 3) = 0.
        assert_eq!(compute_auc(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.375);
    }

    #[test]
    fn complement_identity() {
        let pos = [0.3, 0.9, 0.4, 0.4];
        let neg = [0.1, 0.4, 0.8];
        let a = compute_auc(&pos, &neg).unwrap();
        let b = compute_auc(&neg, &pos).unwrap();
        assert_eq!(a + b, 1.0);
    }

    #[test]
    fn empty_side_is_an_error() {
        assert!(compute_auc(&[], &[1.0]).is_err());
        assert!(compute_auc(&[1.0], &[]).is_err());
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        assert!(compute_auc(&[f64::NAN], &[1.0]).is_err());
        assert!(compute_auc(&[1.0], &[f64::INFINITY]).is_err());
    }
}
