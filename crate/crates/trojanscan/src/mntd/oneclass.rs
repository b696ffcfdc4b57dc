//! One-class meta-training from benign shadow models only.
//!
//! Minimizes `0.5 * l2(theta) + (1/nu) * (1/m) * sum relu(rho - score_i) - rho`
//! by alternating gradient steps on the classifier and queries with an
//! analytic radius update: after each epoch `rho` is set to the nu-quantile
//! of the current scores, so roughly a `nu` fraction of benign models sit
//! below the radius. At detection time the anomaly score of a target is
//! `rho - score`, so higher means more likely Trojaned.

use rand::Rng;

use super::classifier::MetaClassifier;
use super::features::QuerySet;
use super::train::{zoo_dims, MetaTrainConfig};
use crate::diffnet::{
    adam_step_tensor, softmax_probs, softmax_vjp_row, AdamState, Network, Tensor,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::trojan::ShadowRecord;

#[derive(Debug, Clone)]
pub struct OneClassState {
    pub meta: MetaClassifier,
    /// Radius: benign models score at or above it at convergence.
    pub rho: f64,
    /// Slack fraction in (0,1).
    pub nu: f64,
}

impl OneClassState {
    /// Anomaly score for a feature vector: `rho - score`.
    pub fn anomaly_score(&self, features: &[f64]) -> Result<f64> {
        Ok(self.rho - self.meta.score(features)?)
    }
}

#[derive(Debug)]
pub struct OneClassOutcome {
    pub state: OneClassState,
    pub queries: QuerySet,
    /// Objective value per epoch, starting with the pre-training value.
    pub trace: Vec<f64>,
}

/// The nu-quantile used for the radius: with scores sorted ascending, the
/// `ceil(nu * m)`-th smallest.
pub(crate) fn nu_quantile(scores: &[f64], nu: f64) -> f64 {
    debug_assert!(!scores.is_empty());
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let idx = ((nu * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[idx - 1]
}

fn all_scores(zoo: &[ShadowRecord], meta: &MetaClassifier, queries: &QuerySet) -> Result<Vec<f64>> {
    zoo.iter()
        .map(|rec| {
            let probs = softmax_probs(&rec.model.logits(queries.as_tensor())?)?;
            meta.score(probs.data())
        })
        .collect()
}

fn objective(scores: &[f64], meta: &MetaClassifier, rho: f64, nu: f64) -> f64 {
    let hinge: f64 = scores.iter().map(|s| (rho - s).max(0.0)).sum();
    0.5 * meta.l2_norm_squared() + hinge / (nu * scores.len() as f64) - rho
}

/// Backward one benign model's hinge term; only active when its score sits
/// below the radius.
fn hinge_item_backward(
    net: &Network,
    meta: &mut MetaClassifier,
    queries: &mut QuerySet,
    rho: f64,
    d_slack: f64,
) -> Result<()> {
    let c = net.output_dim();
    let k = queries.k();
    let (logits, tape) = net.forward(queries.as_tensor())?;
    let probs = softmax_probs(&logits)?;
    let features = probs.data();
    let (score, z) = meta.score_cached(features)?;
    if score >= rho {
        return Ok(());
    }
    // d/ds of relu(rho - s) is -1 on the active branch.
    let ds = -d_slack;
    let mut df = vec![0.0; features.len()];
    meta.backward(features, &z, ds, true, Some(&mut df));
    let mut d_logits = Tensor::zeros(&[k, c]);
    for q in 0..k {
        softmax_vjp_row(probs.row(q), &df[q * c..(q + 1) * c], d_logits.row_mut(q));
    }
    let d_queries = net.input_gradient(&tape, &d_logits)?;
    let qgrad = queries.tensor_mut().grad_mut();
    for (g, d) in qgrad.iter_mut().zip(d_queries.data()) {
        *g += d;
    }
    Ok(())
}

pub fn meta_train_oneclass(
    benign_zoo: &[ShadowRecord],
    k: usize,
    nu: f64,
    cfg: &MetaTrainConfig,
) -> Result<OneClassOutcome> {
    cfg.validate()?;
    if !(0.0 < nu && nu < 1.0) {
        return Err(Error::invalid(format!("nu {nu} outside (0,1)")));
    }
    if benign_zoo.iter().any(|r| r.label) {
        return Err(Error::invalid(
            "one-class meta-training takes benign shadow models only",
        ));
    }
    let (d_x, c) = zoo_dims(benign_zoo)?;
    let m = benign_zoo.len();

    let mut queries =
        QuerySet::init_gaussian(k, d_x, &mut rng::stream(cfg.seed, "meta/query-init"))?;
    let mut meta =
        MetaClassifier::seeded_init(cfg.hidden, c * k, &mut rng::stream(cfg.seed, "meta/init"))?;
    let mut shuffle_rng = rng::stream(cfg.seed, "meta/shuffle");
    let hp = cfg.hyper();
    let mut meta_states: Vec<AdamState> = meta
        .params()
        .iter()
        .map(|p| AdamState::new(p.len()))
        .collect();
    let mut query_state = AdamState::new(queries.as_tensor().len());

    let scores = all_scores(benign_zoo, &meta, &queries)?;
    let mut rho = nu_quantile(&scores, nu);
    let mut trace = vec![objective(&scores, &meta, rho, nu)];

    let d_slack = 1.0 / (nu * m as f64);
    let mut order: Vec<usize> = (0..m).collect();
    for _epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            meta.zero_grads();
            queries.tensor_mut().ensure_grad();
            queries.tensor_mut().zero_grad();
            for &i in chunk {
                hinge_item_backward(&benign_zoo[i].model, &mut meta, &mut queries, rho, d_slack)?;
            }
            // Ridge term, scaled so one epoch applies it exactly once.
            let reg_scale = chunk.len() as f64 / m as f64;
            for p in meta.params_mut() {
                let (data, grad) = p.data_and_grad_mut();
                for (g, v) in grad.iter_mut().zip(data) {
                    *g += v * reg_scale;
                }
            }
            for (p, st) in meta.params_mut().into_iter().zip(&mut meta_states) {
                adam_step_tensor(p, st, &hp);
            }
            adam_step_tensor(queries.tensor_mut(), &mut query_state, &hp);
            queries.clamp_unit();
        }
        let scores = all_scores(benign_zoo, &meta, &queries)?;
        rho = nu_quantile(&scores, nu);
        trace.push(objective(&scores, &meta, rho, nu));
    }

    Ok(OneClassOutcome {
        state: OneClassState { meta, rho, nu },
        queries,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::TrainConfig;
    use crate::trojan::{generate_zoo, Task, ZooRole};

    fn benign_zoo(n: usize) -> Vec<ShadowRecord> {
        let task = Task::new(60, 64, 4, 0.1).unwrap();
        let clean = task.sample(61, 64).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        generate_zoo(&task, &clean, n, 0, ZooRole::Defender, 62, &cfg).unwrap()
    }

    #[test]
    fn constant_scorer_radius_equals_the_constant() {
        let scores = vec![0.37; 9];
        assert_eq!(nu_quantile(&scores, 0.1), 0.37);
        assert_eq!(nu_quantile(&scores, 0.9), 0.37);
    }

    #[test]
    fn hinge_is_zero_when_all_scores_clear_the_radius() {
        let meta = MetaClassifier::zeros(2, 4).unwrap();
        let scores = [1.0, 2.0, 3.0];
        // objective = 0.5*0 + 0 - rho with rho below all scores
        let obj = objective(&scores, &meta, 0.5, 0.1);
        assert_eq!(obj, -0.5);
    }

    #[test]
    fn objective_decreases_over_training() {
        let zoo = benign_zoo(16);
        let cfg = MetaTrainConfig {
            epochs: 15,
            seed: 5,
            ..MetaTrainConfig::default()
        };
        let out = meta_train_oneclass(&zoo, 4, 0.1, &cfg).unwrap();
        assert!(out.trace.last().unwrap() < out.trace.first().unwrap());
        assert_eq!(out.state.nu, 0.1);
    }

    #[test]
    fn trojaned_records_are_rejected() {
        let task = Task::new(63, 64, 4, 0.1).unwrap();
        let clean = task.sample(64, 64).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let zoo = generate_zoo(&task, &clean, 1, 1, ZooRole::Defender, 65, &cfg).unwrap();
        assert!(meta_train_oneclass(&zoo, 4, 0.1, &MetaTrainConfig::default()).is_err());
    }

    #[test]
    fn invalid_nu_is_rejected() {
        let zoo = benign_zoo(2);
        for nu in [0.0, 1.0, -0.5, 1.5] {
            assert!(meta_train_oneclass(&zoo, 4, nu, &MetaTrainConfig::default()).is_err());
        }
    }
}
