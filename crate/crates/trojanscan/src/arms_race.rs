//! Adaptive attack and the randomized-detector countermeasure.
//!
//! The strong attacker knows a deployed detector exactly (classifier
//! parameters and queries) and trains Trojaned models against the combined
//! objective `L_train + lambda * L_mal`, where `L_mal` is the detector's
//! score of the model under training; the gradient of `L_mal` flows through
//! the feature extraction into the model's own parameters.
//!
//! The countermeasure denies the attacker that knowledge: the defender
//! samples a fresh random classifier, never trains it, and tunes only the
//! queries against the shadow zoo. The attacker can replay the same recipe
//! from his own seed but cannot reproduce the defender's draw.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::diffnet::{
    mlp_arch, softmax_probs, softmax_vjp_row, train_with_hook, Network, Tensor, TrainConfig,
};
use crate::error::{Error, Result};
use crate::mntd::{
    meta_train_jumbo, tune_queries_with_frozen_meta, DetectionReport, MetaClassifier, MetaState,
    MetaTrainConfig, QuerySet, ReportRow,
};
use crate::rng;
use crate::trojan::{
    attack_success_rate, dataset_accuracy, generate_zoo, poison_dataset, sample_attacker_setting,
    AttackKind, ShadowRecord, Task, TrojanSetting, ZooRole, EVAL_SLICE_SIZE, TASK_HIDDEN,
};

#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    /// Weight on the evasion term; 0 reduces to plain poisoned training.
    pub lambda: f64,
    pub train: TrainConfig,
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        self.train.validate()
    }
}

/// A detector the attacker holds in full: classifier plus queries.
#[derive(Debug, Clone, Copy)]
pub struct KnownSystem<'a> {
    pub meta: &'a MetaClassifier,
    pub queries: &'a QuerySet,
}

impl<'a> From<&'a MetaState> for KnownSystem<'a> {
    fn from(state: &'a MetaState) -> Self {
        KnownSystem {
            meta: &state.meta,
            queries: &state.queries,
        }
    }
}

#[derive(Debug)]
pub struct AdaptiveOutcome {
    pub network: Network,
    pub train_accuracy: f64,
    /// Mean detector score over the known systems after the last step.
    pub final_mal_loss: f64,
}

/// Mean score of `net` under the known systems, with gradients accumulated
/// into `net`'s parameter buffers scaled by `lambda` (skipped when `None`).
fn mal_term(net: &mut Network, known: &[KnownSystem<'_>], lambda: Option<f64>) -> Result<f64> {
    let mut total = 0.0;
    for sys in known {
        let k = sys.queries.k();
        let c = net.output_dim();
        let (logits, tape) = net.forward(sys.queries.as_tensor())?;
        let probs = softmax_probs(&logits)?;
        let (score, z) = sys.meta.score_cached(probs.data())?;
        total += score;
        if let Some(lambda) = lambda {
            let mut df = vec![0.0; probs.len()];
            // The classifier is the attacker's fixed knowledge; only the
            // feature gradient is needed.
            let mut frozen = sys.meta.clone();
            frozen.backward(probs.data(), &z, lambda, false, Some(&mut df));
            let mut d_logits = Tensor::zeros(&[k, c]);
            for q in 0..k {
                softmax_vjp_row(probs.row(q), &df[q * c..(q + 1) * c], d_logits.row_mut(q));
            }
            net.backward(&tape, &d_logits)?;
        }
    }
    Ok(total / known.len() as f64)
}

/// Train a Trojaned model that evades the known detectors: minimizes
/// `L_train + lambda * sum_over_known(score)` by joint backpropagation.
///
/// With `lambda == 0` (or no known systems) the evasion term is skipped
/// entirely, so the result is parameter-identical to plain training on the
/// same data and seed.
pub fn adaptive_train(
    poisoned: &Dataset,
    known: &[KnownSystem<'_>],
    cfg: &AdaptiveConfig,
) -> Result<AdaptiveOutcome> {
    cfg.validate()?;
    let arch = mlp_arch(poisoned.d_x(), TASK_HIDDEN, poisoned.c());
    let active = cfg.lambda > 0.0 && !known.is_empty();
    let outcome = if active {
        let mut hook = |net: &mut Network| mal_term(net, known, Some(cfg.lambda));
        train_with_hook(poisoned, &arch, &cfg.train, Some(&mut hook))?
    } else {
        train_with_hook(poisoned, &arch, &cfg.train, None)?
    };
    let mut network = outcome.network;
    let final_mal_loss = if known.is_empty() {
        0.0
    } else {
        mal_term(&mut network, known, None)?
    };
    Ok(AdaptiveOutcome {
        network,
        train_accuracy: outcome.train_accuracy,
        final_mal_loss,
    })
}

/// The randomized detector: a frozen, never-trained classifier with queries
/// tuned against the zoo.
#[derive(Debug, Clone)]
pub struct RobustMetaState {
    pub frozen_meta: MetaClassifier,
    pub tuned_queries: QuerySet,
    /// Hash of the sampled parameters, fixed at sampling time.
    pub theta_hash: u64,
}

impl RobustMetaState {
    pub fn to_meta_state(&self) -> MetaState {
        MetaState::jumbo(self.frozen_meta.clone(), self.tuned_queries.clone())
    }

    /// Verify the classifier still carries exactly the sampled values.
    pub fn check_frozen(&self) -> Result<()> {
        if self.frozen_meta.param_hash() != self.theta_hash {
            return Err(Error::invalid("frozen classifier was modified"));
        }
        Ok(())
    }
}

/// Sample a random classifier from `seed` (i.i.d. standard normal entries)
/// and tune only the queries on the zoo; the classifier is hash-checked
/// across tuning.
pub fn train_robust(
    zoo: &[ShadowRecord],
    k: usize,
    seed: u64,
    cfg: &MetaTrainConfig,
) -> Result<RobustMetaState> {
    let first = zoo
        .first()
        .ok_or_else(|| Error::invalid("zoo must contain at least one model"))?;
    let c = first.model.output_dim();
    let frozen_meta =
        MetaClassifier::sampled_normal(cfg.hidden, c * k, &mut rng::stream(seed, "robust/theta"))?;
    let theta_hash = frozen_meta.param_hash();
    let tune_cfg = cfg.with_seed(rng::derive_seed(seed, "robust/tune"));
    let (tuned_queries, _trace) = tune_queries_with_frozen_meta(zoo, &frozen_meta, k, &tune_cfg)?;
    let state = RobustMetaState {
        frozen_meta,
        tuned_queries,
        theta_hash,
    };
    state.check_frozen()?;
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct ArmsRaceConfig {
    pub defender_seed: u64,
    pub attacker_seed: u64,
    pub lambda: f64,
    /// Number of Trojaned targets per arm (an equal count of benign targets
    /// is trained as well).
    pub target_count: usize,
    pub k: usize,
    pub target_train: TrainConfig,
    pub meta: MetaTrainConfig,
}

#[derive(Debug)]
pub struct ArmsRaceOutcome {
    /// The attacker-known detectors scoring the adaptive targets.
    pub plain_under_attack: DetectionReport,
    /// The defender's independently seeded randomized detector on the same
    /// adaptive targets.
    pub robust_under_attack: DetectionReport,
    /// Trained detector on the matched non-adaptive (lambda = 0) targets.
    pub plain_clean: DetectionReport,
    /// Randomized detector on the non-adaptive targets.
    pub robust_clean: DetectionReport,
    /// Median clean-accuracy cost of adaptivity (lambda=0 minus lambda=1).
    pub accuracy_drop: f64,
    /// Median attack-success cost of adaptivity.
    pub asr_drop: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite medians"));
    v[v.len() / 2]
}

fn report(
    state: &MetaState,
    trojaned: &[(String, Network)],
    benign: &[ShadowRecord],
) -> Result<DetectionReport> {
    let mut rows = Vec::with_capacity(trojaned.len() + benign.len());
    for (name, net) in trojaned {
        rows.push(ReportRow {
            name: name.clone(),
            label: Some(true),
            score: state.score_target(net)?,
        });
    }
    for (i, rec) in benign.iter().enumerate() {
        rows.push(ReportRow {
            name: format!("benign_{i:04}"),
            label: Some(false),
            score: state.score_target(&rec.model)?,
        });
    }
    DetectionReport::from_rows(rows)
}

/// Run the full exchange. The attacker holds the plain trained detector and
/// a replica of the randomized pipeline built from `attacker_seed`; his
/// adaptive targets are trained to evade both. The defender scores them
/// with a randomized detector built from `defender_seed`, which the
/// attacker-facing code path never sees.
pub fn evaluate_arms_race(
    task: &Task,
    attacker_data: &Dataset,
    zoo: &[ShadowRecord],
    cfg: &ArmsRaceConfig,
) -> Result<ArmsRaceOutcome> {
    if cfg.defender_seed == cfg.attacker_seed {
        return Err(Error::invalid(
            "defender and attacker seeds must differ; the defense rests on the attacker not knowing the defender's draw",
        ));
    }
    if cfg.target_count == 0 {
        return Err(Error::invalid("target_count must be positive"));
    }

    let plain_out = meta_train_jumbo(zoo, cfg.k, true, &cfg.meta)?;
    let plain = MetaState::jumbo(plain_out.meta, plain_out.queries);
    let robust_attacker = train_robust(zoo, cfg.k, cfg.attacker_seed, &cfg.meta)?;
    let attacker_replica = robust_attacker.to_meta_state();
    let robust_defender = train_robust(zoo, cfg.k, cfg.defender_seed, &cfg.meta)?;
    let defender = robust_defender.to_meta_state();

    let eval = task.sample(
        rng::derive_seed(cfg.attacker_seed, "arms/eval"),
        EVAL_SLICE_SIZE,
    )?;

    // Matched pairs: each setting is trained twice from the same seed, with
    // and without the evasion term.
    struct Pair {
        setting: TrojanSetting,
        adaptive: AdaptiveOutcome,
        baseline: AdaptiveOutcome,
    }
    let pairs: Vec<Result<Pair>> = (0..cfg.target_count)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let mut srng = rng::stream_indexed(cfg.attacker_seed, "arms/setting", i);
            let setting = sample_attacker_setting(
                &mut srng,
                AttackKind::Modification,
                attacker_data.d_x(),
                attacker_data.c(),
            )?;
            let mut prng = rng::stream_indexed(cfg.attacker_seed, "arms/poison", i);
            let poisoned = poison_dataset(attacker_data, &setting, &mut prng)?;
            let train_seed = rng::derive_seed_indexed(cfg.attacker_seed, "arms/train", i);
            let known = [
                KnownSystem::from(&plain),
                KnownSystem::from(&attacker_replica),
            ];
            let adaptive = adaptive_train(
                &poisoned,
                &known,
                &AdaptiveConfig {
                    lambda: cfg.lambda,
                    train: cfg.target_train.with_seed(train_seed),
                },
            )?;
            let baseline = adaptive_train(
                &poisoned,
                &known,
                &AdaptiveConfig {
                    lambda: 0.0,
                    train: cfg.target_train.with_seed(train_seed),
                },
            )?;
            Ok(Pair {
                setting,
                adaptive,
                baseline,
            })
        })
        .collect();
    let pairs: Vec<Pair> = pairs.into_iter().collect::<Result<_>>()?;

    let benign = generate_zoo(
        task,
        attacker_data,
        cfg.target_count,
        0,
        ZooRole::Defender,
        rng::derive_seed(cfg.attacker_seed, "arms/benign"),
        &cfg.target_train,
    )?;

    let adaptive_targets: Vec<(String, Network)> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("adaptive_{i:04}"), p.adaptive.network.clone()))
        .collect();
    let baseline_targets: Vec<(String, Network)> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("nonadaptive_{i:04}"), p.baseline.network.clone()))
        .collect();

    let plain_under_attack = report(&plain, &adaptive_targets, &benign)?;
    let robust_under_attack = report(&defender, &adaptive_targets, &benign)?;
    let plain_clean = report(&plain, &baseline_targets, &benign)?;
    let robust_clean = report(&defender, &baseline_targets, &benign)?;

    let mut acc_base = Vec::new();
    let mut acc_adapt = Vec::new();
    let mut asr_base = Vec::new();
    let mut asr_adapt = Vec::new();
    for p in &pairs {
        acc_base.push(dataset_accuracy(&p.baseline.network, &eval)?);
        acc_adapt.push(dataset_accuracy(&p.adaptive.network, &eval)?);
        asr_base.push(attack_success_rate(&p.baseline.network, &eval, &p.setting)?);
        asr_adapt.push(attack_success_rate(&p.adaptive.network, &eval, &p.setting)?);
    }
    let accuracy_drop = median(acc_base) - median(acc_adapt);
    let asr_drop = median(asr_base) - median(asr_adapt);

    Ok(ArmsRaceOutcome {
        plain_under_attack,
        robust_under_attack,
        plain_clean,
        robust_clean,
        accuracy_drop,
        asr_drop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::train_task_model;

    fn setup() -> (Task, Dataset, TrojanSetting, Dataset) {
        let task = Task::new(80, 64, 4, 0.1).unwrap();
        let clean = task.sample(81, 128).unwrap();
        let mut srng = rng::stream(82, "setting");
        let setting = sample_attacker_setting(&mut srng, AttackKind::Modification, 64, 4).unwrap();
        let mut prng = rng::stream(83, "poison");
        let poisoned = poison_dataset(&clean, &setting, &mut prng).unwrap();
        (task, clean, setting, poisoned)
    }

    #[test]
    fn lambda_zero_is_parameter_identical_to_plain_training() {
        let (_, _, _, poisoned) = setup();
        let train = TrainConfig {
            epochs: 5,
            seed: 84,
            ..TrainConfig::default()
        };
        let mut mrng = rng::stream(85, "meta");
        let meta = MetaClassifier::seeded_init(8, 4 * 3, &mut mrng).unwrap();
        let queries = QuerySet::init_gaussian(3, 64, &mut mrng).unwrap();
        let known = [KnownSystem {
            meta: &meta,
            queries: &queries,
        }];
        let adaptive = adaptive_train(
            &poisoned,
            &known,
            &AdaptiveConfig {
                lambda: 0.0,
                train: train.clone(),
            },
        )
        .unwrap();
        let plain = train_task_model(&poisoned, &mlp_arch(64, TASK_HIDDEN, 4), &train).unwrap();
        for (a, b) in adaptive
            .network
            .params()
            .iter()
            .zip(plain.network.params().iter())
        {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn adaptive_training_lowers_the_known_score() {
        let (_, _, _, poisoned) = setup();
        let train = TrainConfig {
            epochs: 20,
            seed: 86,
            ..TrainConfig::default()
        };
        let mut mrng = rng::stream(87, "meta");
        let meta = MetaClassifier::seeded_init(16, 4 * 3, &mut mrng).unwrap();
        let queries = QuerySet::init_gaussian(3, 64, &mut mrng).unwrap();
        let known = [KnownSystem {
            meta: &meta,
            queries: &queries,
        }];
        let baseline = adaptive_train(
            &poisoned,
            &known,
            &AdaptiveConfig {
                lambda: 0.0,
                train: train.clone(),
            },
        )
        .unwrap();
        let evasive =
            adaptive_train(&poisoned, &known, &AdaptiveConfig { lambda: 1.0, train }).unwrap();
        assert!(
            evasive.final_mal_loss < baseline.final_mal_loss,
            "evasion {} vs baseline {}",
            evasive.final_mal_loss,
            baseline.final_mal_loss
        );
    }

    #[test]
    fn robust_state_keeps_theta_frozen_and_seeds_differ() {
        let task = Task::new(90, 64, 4, 0.1).unwrap();
        let clean = task.sample(91, 64).unwrap();
        let tcfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let zoo = generate_zoo(&task, &clean, 3, 3, ZooRole::Defender, 92, &tcfg).unwrap();
        let mcfg = MetaTrainConfig {
            epochs: 3,
            hidden: 8,
            ..MetaTrainConfig::default()
        };
        let a = train_robust(&zoo, 4, 1, &mcfg).unwrap();
        let b = train_robust(&zoo, 4, 2, &mcfg).unwrap();
        a.check_frozen().unwrap();
        b.check_frozen().unwrap();
        assert_eq!(a.frozen_meta.param_hash(), a.theta_hash);
        assert_ne!(a.theta_hash, b.theta_hash);
    }

    #[test]
    fn seed_collision_is_rejected() {
        let task = Task::new(93, 64, 4, 0.1).unwrap();
        let clean = task.sample(94, 64).unwrap();
        let tcfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let zoo = generate_zoo(&task, &clean, 2, 2, ZooRole::Defender, 95, &tcfg).unwrap();
        let cfg = ArmsRaceConfig {
            defender_seed: 7,
            attacker_seed: 7,
            lambda: 1.0,
            target_count: 1,
            k: 4,
            target_train: tcfg,
            meta: MetaTrainConfig {
                epochs: 1,
                hidden: 8,
                ..MetaTrainConfig::default()
            },
        };
        assert!(evaluate_arms_race(&task, &clean, &zoo, &cfg).is_err());
    }
}
