//! Meta-training over a shadow-model zoo.
//!
//! The training loss is binary cross-entropy of `sigmoid(score)` against the
//! records' Trojan labels. With query tuning enabled, gradients flow through
//! each shadow model into the query coordinates (the shadow models are ours,
//! so differentiating through them breaks no black-box assumption), and the
//! queries are clamped back into `[0,1]` after every step.

use rand::Rng;

use super::classifier::MetaClassifier;
use super::features::QuerySet;
use crate::diffnet::{
    adam_step_tensor, binary_cross_entropy_with_logit, softmax_probs, softmax_vjp_row, AdamHyper,
    AdamState, Network, Tensor,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::trojan::ShadowRecord;

#[derive(Debug, Clone)]
pub struct MetaTrainConfig {
    /// Hidden width of the meta-classifier.
    pub hidden: usize,
    pub epochs: usize,
    /// Shadow models per gradient step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        MetaTrainConfig {
            hidden: 64,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl MetaTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::invalid(
                "hidden width and batch size must be positive",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        MetaTrainConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug)]
pub struct MetaTrainOutcome {
    pub meta: MetaClassifier,
    pub queries: QuerySet,
    /// Mean training loss per epoch.
    pub trace: Vec<f64>,
}

/// Dimensions shared by every model in a zoo.
pub(crate) fn zoo_dims(zoo: &[ShadowRecord]) -> Result<(usize, usize)> {
    let first = zoo
        .first()
        .ok_or_else(|| Error::invalid("zoo must contain at least one model"))?;
    let d_x = first.model.input_dim();
    let c = first.model.output_dim();
    for (i, rec) in zoo.iter().enumerate() {
        if rec.model.input_dim() != d_x || rec.model.output_dim() != c {
            return Err(Error::shape(format!(
                "zoo model {i} has dimensions {}x{}, expected {d_x}x{c}",
                rec.model.input_dim(),
                rec.model.output_dim()
            )));
        }
    }
    Ok((d_x, c))
}

fn require_both_labels(zoo: &[ShadowRecord]) -> Result<()> {
    let trojans = zoo.iter().filter(|r| r.label).count();
    if trojans == 0 || trojans == zoo.len() {
        return Err(Error::invalid(
            "meta-training needs both benign and Trojaned shadow models",
        ));
    }
    Ok(())
}

/// Forward one shadow model at the queries and backpropagate the loss term,
/// accumulating into the meta-classifier's gradients (when `update_meta`)
/// and the query tensor's gradients (when `tune_queries`). Returns the
/// item's loss.
pub(crate) fn jumbo_item_backward(
    net: &Network,
    label: f64,
    meta: &mut MetaClassifier,
    queries: &mut QuerySet,
    d_score_scale: f64,
    tune_queries: bool,
    update_meta: bool,
) -> Result<f64> {
    let c = net.output_dim();
    let k = queries.k();
    let (logits, tape) = net.forward(queries.as_tensor())?;
    let probs = softmax_probs(&logits)?;
    let features = probs.data();

    let (score, z) = meta.score_cached(features)?;
    let (loss, ds) = binary_cross_entropy_with_logit(score, label);
    let ds = ds * d_score_scale;

    let mut d_features = if tune_queries {
        Some(vec![0.0; features.len()])
    } else {
        None
    };
    meta.backward(features, &z, ds, update_meta, d_features.as_deref_mut());

    if let Some(df) = d_features {
        let mut d_logits = Tensor::zeros(&[k, c]);
        for q in 0..k {
            let block = &df[q * c..(q + 1) * c];
            softmax_vjp_row(probs.row(q), block, d_logits.row_mut(q));
        }
        let d_queries = net.input_gradient(&tape, &d_logits)?;
        let qgrad = queries.tensor_mut().grad_mut();
        for (g, d) in qgrad.iter_mut().zip(d_queries.data()) {
            *g += d;
        }
    }
    Ok(loss)
}

fn run_epochs(
    zoo: &[ShadowRecord],
    meta: &mut MetaClassifier,
    queries: &mut QuerySet,
    cfg: &MetaTrainConfig,
    tune_queries: bool,
    update_meta: bool,
) -> Result<Vec<f64>> {
    let m = zoo.len();
    let mut shuffle_rng = rng::stream(cfg.seed, "meta/shuffle");
    let hp = cfg.hyper();
    let mut meta_states: Vec<AdamState> = meta
        .params()
        .iter()
        .map(|p| AdamState::new(p.len()))
        .collect();
    let mut query_state = AdamState::new(queries.as_tensor().len());

    let mut order: Vec<usize> = (0..m).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            meta.zero_grads();
            queries.tensor_mut().ensure_grad();
            queries.tensor_mut().zero_grad();
            let inv = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let rec = &zoo[i];
                epoch_loss += jumbo_item_backward(
                    &rec.model,
                    if rec.label { 1.0 } else { 0.0 },
                    meta,
                    queries,
                    inv,
                    tune_queries,
                    update_meta,
                )?;
            }
            if update_meta {
                for (p, st) in meta.params_mut().into_iter().zip(&mut meta_states) {
                    adam_step_tensor(p, st, &hp);
                }
            }
            if tune_queries {
                adam_step_tensor(queries.tensor_mut(), &mut query_state, &hp);
                queries.clamp_unit();
            }
        }
        trace.push(epoch_loss / m as f64);
    }
    Ok(trace)
}

/// Train the meta-classifier on a mixed zoo, optionally tuning the query
/// set jointly. With `tune_queries` off the queries stay bit-identical to
/// their Gaussian initialization.
pub fn meta_train_jumbo(
    zoo: &[ShadowRecord],
    k: usize,
    tune_queries: bool,
    cfg: &MetaTrainConfig,
) -> Result<MetaTrainOutcome> {
    cfg.validate()?;
    require_both_labels(zoo)?;
    let (d_x, c) = zoo_dims(zoo)?;
    let mut queries =
        QuerySet::init_gaussian(k, d_x, &mut rng::stream(cfg.seed, "meta/query-init"))?;
    let mut meta =
        MetaClassifier::seeded_init(cfg.hidden, c * k, &mut rng::stream(cfg.seed, "meta/init"))?;
    let trace = run_epochs(zoo, &mut meta, &mut queries, cfg, tune_queries, true)?;
    Ok(MetaTrainOutcome {
        meta,
        queries,
        trace,
    })
}

/// Tune only the queries against a fixed, externally supplied classifier
/// (whose parameters are left untouched). Returns the tuned queries and the
/// loss trace.
pub fn tune_queries_with_frozen_meta(
    zoo: &[ShadowRecord],
    meta: &MetaClassifier,
    k: usize,
    cfg: &MetaTrainConfig,
) -> Result<(QuerySet, Vec<f64>)> {
    cfg.validate()?;
    require_both_labels(zoo)?;
    let (d_x, c) = zoo_dims(zoo)?;
    if meta.feat_len() != c * k {
        return Err(Error::shape(format!(
            "classifier expects {} features but c*k = {}",
            meta.feat_len(),
            c * k
        )));
    }
    let mut queries =
        QuerySet::init_gaussian(k, d_x, &mut rng::stream(cfg.seed, "meta/query-init"))?;
    let mut frozen = meta.clone();
    let trace = run_epochs(zoo, &mut frozen, &mut queries, cfg, true, false)?;
    debug_assert_eq!(frozen.param_hash(), meta.param_hash());
    Ok((queries, trace))
}
