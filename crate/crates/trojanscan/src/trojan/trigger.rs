//! The trigger function and attack-success measurement.

use super::{AttackGoal, TrojanSetting};
use crate::data::Dataset;
use crate::diffnet::{argmax, Network};
use crate::error::{Error, Result};

/// Apply the trigger to one input: masked coordinates become a blend of
/// pattern and input, `x'_j = (1-m_j) x_j + m_j ((1-alpha) t_j + alpha x_j)`,
/// and the label is rewritten by the setting's goal.
///
/// The mask popcount is deliberately not re-checked here so identity cases
/// (all-zero mask) can be exercised directly.
pub fn apply_trigger(
    x: &[f64],
    y: usize,
    setting: &TrojanSetting,
    c: usize,
) -> Result<(Vec<f64>, usize)> {
    if setting.mask.len() != x.len() || setting.pattern.len() != x.len() {
        return Err(Error::shape(format!(
            "trigger length {} does not match input length {}",
            setting.mask.len(),
            x.len()
        )));
    }
    let a = setting.alpha;
    let out = x
        .iter()
        .zip(&setting.mask)
        .zip(&setting.pattern)
        .map(|((&xv, &m), &t)| {
            if m == 1 {
                // The blend of unit-interval values is back in [0,1] up to
                // a final rounding; clamp so the range holds unconditionally.
                ((1.0 - a) * t + a * xv).clamp(0.0, 1.0)
            } else {
                xv
            }
        })
        .collect();
    Ok((out, setting.malicious_label(y, c)))
}

/// Fraction of triggered test inputs classified as the malicious label.
///
/// For single-target settings, instances whose true label already equals the
/// target are excluded from the denominator; all-to-all counts every
/// instance.
pub fn attack_success_rate(
    model: &Network,
    clean_test: &Dataset,
    setting: &TrojanSetting,
) -> Result<f64> {
    setting.validate(clean_test.d_x(), clean_test.c())?;
    let c = clean_test.c();
    let mut triggered = Vec::new();
    let mut wanted = Vec::new();
    for i in 0..clean_test.n() {
        let y = clean_test.label(i);
        if setting.goal == AttackGoal::SingleTarget && y == setting.target_label {
            continue;
        }
        let (x, y_mal) = apply_trigger(clean_test.input(i), y, setting, c)?;
        triggered.extend_from_slice(&x);
        wanted.push(y_mal);
    }
    if wanted.is_empty() {
        return Err(Error::invalid(
            "no eligible test instances for attack success rate",
        ));
    }
    let batch = crate::diffnet::Tensor::from_vec(&[wanted.len(), clean_test.d_x()], triggered)?;
    let logits = model.logits(&batch)?;
    let hits = wanted
        .iter()
        .enumerate()
        .filter(|&(r, &w)| argmax(logits.row(r)) == w)
        .count();
    Ok(hits as f64 / wanted.len() as f64)
}
