//! Seeded empirical-risk training for task networks.
//!
//! Training is deterministic given the seed: parameter init draws from the
//! `init` stream, per-epoch shuffles from the `shuffle` stream, and nothing
//! else consumes randomness. `train_with_hook` lets a caller add extra
//! gradients into the parameter buffers each step (the adaptive attacker
//! uses this); the hook must not consume randomness of its own.

use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, NetworkOptimizer};
use super::loss::{accuracy, cross_entropy_grad, cross_entropy_loss};
use super::network::{LayerSpec, Network};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0 < self.adam_beta1 && self.adam_beta1 < 1.0) {
            return Err(Error::invalid("adam_beta1 must lie in (0,1)"));
        }
        if !(0.0 < self.adam_beta2 && self.adam_beta2 < 1.0) {
            return Err(Error::invalid("adam_beta2 must lie in (0,1)"));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub network: Network,
    /// Accuracy over the data the model was trained on.
    pub train_accuracy: f64,
    /// Full-pass loss at the seeded initialization.
    pub initial_loss: f64,
    /// Full-pass loss after the last epoch.
    pub final_loss: f64,
}

/// Per-step extension point: called after the task-loss gradients have been
/// accumulated and before the optimizer step; returns its own loss value.
pub type StepHook<'a> = dyn FnMut(&mut Network) -> Result<f64> + 'a;

/// Train a classifier on `data` by minimizing cross-entropy with Adam.
pub fn train_task_model(
    data: &Dataset,
    arch: &[LayerSpec],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_hook(data, arch, cfg, None)
}

pub fn train_with_hook(
    data: &Dataset,
    arch: &[LayerSpec],
    cfg: &TrainConfig,
    mut hook: Option<&mut StepHook<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut init_rng = rng::stream(cfg.seed, "init");
    let mut net = Network::seeded_init(arch, &mut init_rng)?;
    if net.input_dim() != data.d_x() || net.output_dim() != data.c() {
        return Err(Error::shape(format!(
            "architecture {}->{} does not fit dataset with d_x={} c={}",
            net.input_dim(),
            net.output_dim(),
            data.d_x(),
            data.c()
        )));
    }

    let full = data.full_batch();
    let initial_loss = cross_entropy_loss(&net.logits(&full)?, data.labels())?;

    let mut shuffle_rng = rng::stream(cfg.seed, "shuffle");
    let mut optimizer = NetworkOptimizer::new(&net, AdamHyper::from(cfg));
    let mut order: Vec<usize> = (0..data.n()).collect();

    for epoch in 0..cfg.epochs {
        fisher_yates(&mut order, &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (batch, labels) = data.batch(chunk);
            let (logits, tape) = net.forward(&batch)?;
            epoch_loss += cross_entropy_loss(&logits, &labels)? * chunk.len() as f64;
            let d_logits = cross_entropy_grad(&logits, &labels)?;
            net.zero_grads();
            net.backward(&tape, &d_logits)?;
            if let Some(h) = hook.as_deref_mut() {
                h(&mut net)?;
            }
            optimizer.step(&mut net);
        }
        epoch_loss /= data.n() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
    }

    if !net.all_params_finite() {
        return Err(Error::NonFinite("trained parameters".into()));
    }
    let logits = net.logits(&full)?;
    let final_loss = cross_entropy_loss(&logits, data.labels())?;
    let train_accuracy = accuracy(&logits, data.labels())?;
    Ok(TrainOutcome {
        network: net,
        train_accuracy,
        initial_loss,
        final_loss,
    })
}

fn fisher_yates(order: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
