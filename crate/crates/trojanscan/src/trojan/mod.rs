//! Trigger injection and shadow-model zoo generation.
//!
//! A Trojan setting is a masked blend applied to clean inputs together with
//! a label rewrite. Settings are sampled from two distributions: the
//! attacker's (what target models are built from) and the defender's (the
//! broader distribution shadow models are drawn from, so the meta-classifier
//! never depends on knowing the attacker's exact choices).

mod sampler;
mod task;
mod trigger;
mod zoo;

pub use sampler::{sample_attacker_setting, sample_defender_setting, AttackKind};
pub use task::{synth_dataset, Task};
pub use trigger::{apply_trigger, attack_success_rate};
pub use zoo::{
    dataset_accuracy, generate_zoo, poison_dataset, ZooRole, EVAL_SLICE_SIZE, TASK_HIDDEN,
};

use crate::diffnet::Network;
use crate::error::{Error, Result};

/// What triggered inputs are relabeled to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackGoal {
    /// Every triggered input gets one attacker-chosen label.
    SingleTarget,
    /// Triggered inputs of class `i` get label `(i+1) mod c`.
    AllToAll,
}

/// One sampled Trojan attack setting: trigger mask, pattern, transparency,
/// malicious labeling rule, and the poisoning ratio used during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrojanSetting {
    /// 0/1 per input coordinate; 1 marks trigger support.
    pub mask: Vec<u8>,
    /// Trigger pattern values in `[0,1]`, same length as the input.
    pub pattern: Vec<f64>,
    /// Transparency: 0 replaces masked coordinates with the pattern, values
    /// toward 1 keep more of the original input.
    pub alpha: f64,
    /// Malicious label for single-target attacks (ignored for all-to-all).
    pub target_label: usize,
    /// Fraction of the clean training set injected as triggered copies.
    pub poison_ratio: f64,
    pub goal: AttackGoal,
}

impl TrojanSetting {
    pub fn validate(&self, d_x: usize, c: usize) -> Result<()> {
        if self.mask.len() != d_x || self.pattern.len() != d_x {
            return Err(Error::shape(format!(
                "mask/pattern lengths {}/{} do not match d_x={d_x}",
                self.mask.len(),
                self.pattern.len()
            )));
        }
        if self.mask.iter().any(|&m| m > 1) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        if !self.mask.contains(&1) {
            return Err(Error::invalid("mask must select at least one coordinate"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha {} outside [0,1]",
                self.alpha
            )));
        }
        if self.pattern.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pattern values must lie in [0,1]"));
        }
        if !(self.poison_ratio > 0.0 && self.poison_ratio <= 0.5) {
            return Err(Error::invalid(format!(
                "poison_ratio {} outside (0, 0.5]",
                self.poison_ratio
            )));
        }
        if self.target_label >= c {
            return Err(Error::invalid(format!(
                "target label {} outside 0..{c}",
                self.target_label
            )));
        }
        Ok(())
    }

    /// The label a triggered input of true class `y` is rewritten to.
    pub fn malicious_label(&self, y: usize, c: usize) -> usize {
        match self.goal {
            AttackGoal::SingleTarget => self.target_label,
            AttackGoal::AllToAll => (y + 1) % c,
        }
    }

    pub fn mask_popcount(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// A trained shadow model plus its ground-truth Trojan label; the unit the
/// meta-classifier trains on.
#[derive(Debug, Clone)]
pub struct ShadowRecord {
    pub model: Network,
    /// `true` when the model was trained on a poisoned dataset.
    pub label: bool,
    /// The setting used to poison; present iff `label`.
    pub setting: Option<TrojanSetting>,
    /// Accuracy over the (possibly poisoned) data the model was trained on.
    pub train_accuracy: f64,
    /// Attack success rate on a held-out slice; present iff `label`.
    pub attack_success_rate: Option<f64>,
    /// Training seed, recorded for reproducibility.
    pub seed: u64,
}

impl ShadowRecord {
    pub fn check_consistency(&self) -> Result<()> {
        if self.label != self.setting.is_some() {
            return Err(Error::invalid(
                "shadow record label disagrees with presence of a setting",
            ));
        }
        Ok(())
    }
}
