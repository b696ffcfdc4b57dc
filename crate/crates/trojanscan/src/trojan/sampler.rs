//! Attack-setting distributions for jumbo sampling.
//!
//! The attacker draws from per-kind distributions (square modification
//! triggers, full-input blends, or all-to-all variants of the square
//! triggers). The defender draws from a single mixed distribution that is
//! wider than any attacker kind: sometimes a full-input blend, otherwise a
//! square trigger whose transparency may be zero or moderate.

use rand::Rng;

use super::{AttackGoal, TrojanSetting};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Smallest and largest square trigger side.
const SQUARE_SIDES: std::ops::RangeInclusive<usize> = 2..=5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    /// Square trigger, zero transparency (pixels replaced outright).
    Modification,
    /// Full-input trigger blended with high transparency.
    Blending,
    /// Square trigger as in modification, with the all-to-all label rule.
    AllToAll,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Modification => "modification",
            AttackKind::Blending => "blending",
            AttackKind::AllToAll => "all_to_all",
        }
    }
}

fn grid_side(d_x: usize) -> Result<usize> {
    let g = (d_x as f64).sqrt().round() as usize;
    if g * g != d_x {
        return Err(Error::invalid(format!("d_x={d_x} is not a perfect square")));
    }
    if g < *SQUARE_SIDES.end() {
        return Err(Error::invalid(format!(
            "grid side {g} smaller than the largest square trigger side {}",
            SQUARE_SIDES.end()
        )));
    }
    Ok(g)
}

fn square_mask(rng: &mut Stream, g: usize) -> Vec<u8> {
    let side = rng.gen_range(SQUARE_SIDES);
    let row0 = rng.gen_range(0..=g - side);
    let col0 = rng.gen_range(0..=g - side);
    let mut mask = vec![0u8; g * g];
    for r in row0..row0 + side {
        for c in col0..col0 + side {
            mask[r * g + c] = 1;
        }
    }
    mask
}

fn common_tail(rng: &mut Stream, d_x: usize, c: usize) -> (Vec<f64>, usize, f64) {
    let pattern = (0..d_x).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let target_label = rng.gen_range(0..c);
    let poison_ratio = rng.gen_range(0.05..=0.5);
    (pattern, target_label, poison_ratio)
}

/// Draw a setting from the attacker's distribution for the given kind.
pub fn sample_attacker_setting(
    rng: &mut Stream,
    kind: AttackKind,
    d_x: usize,
    c: usize,
) -> Result<TrojanSetting> {
    let g = grid_side(d_x)?;
    let (mask, alpha, goal) = match kind {
        AttackKind::Modification => (square_mask(rng, g), 0.0, AttackGoal::SingleTarget),
        AttackKind::Blending => (
            vec![1u8; d_x],
            rng.gen_range(0.8..=0.95),
            AttackGoal::SingleTarget,
        ),
        AttackKind::AllToAll => (square_mask(rng, g), 0.0, AttackGoal::AllToAll),
    };
    let (pattern, target_label, poison_ratio) = common_tail(rng, d_x, c);
    let setting = TrojanSetting {
        mask,
        pattern,
        alpha,
        target_label,
        poison_ratio,
        goal,
    };
    setting.validate(d_x, c)?;
    Ok(setting)
}

/// Draw a setting from the defender's jumbo distribution: with probability
/// 0.2 a full-input blend (alpha in `[0.8, 0.95]`); otherwise a square
/// trigger whose alpha is 0 with probability 0.25 and uniform in
/// `[0.5, 0.8]` otherwise.
pub fn sample_defender_setting(rng: &mut Stream, d_x: usize, c: usize) -> Result<TrojanSetting> {
    let g = grid_side(d_x)?;
    let full_mask = rng.gen_range(0.0..1.0) < 0.2;
    let (mask, alpha) = if full_mask {
        (vec![1u8; d_x], rng.gen_range(0.8..=0.95))
    } else {
        let mask = square_mask(rng, g);
        let alpha = if rng.gen_range(0.0..1.0) < 0.25 {
            0.0
        } else {
            rng.gen_range(0.5..=0.8)
        };
        (mask, alpha)
    };
    let (pattern, target_label, poison_ratio) = common_tail(rng, d_x, c);
    let setting = TrojanSetting {
        mask,
        pattern,
        alpha,
        target_label,
        poison_ratio,
        goal: AttackGoal::SingleTarget,
    };
    setting.validate(d_x, c)?;
    Ok(setting)
}
