//! Meta neural Trojan detection.
//!
//! A trained detector is a query set plus a scorer. Feature extraction asks
//! the target model for its class probabilities at the k queries and
//! concatenates them; the meta-classifier maps that vector to a real-valued
//! Trojan score. Everything downstream of training touches targets only
//! through the [`BlackBox`] trait.

mod auc;
mod classifier;
mod features;
mod oneclass;
mod report;
mod train;

pub use auc::compute_auc;
pub use classifier::MetaClassifier;
pub use features::{extract_features, BlackBox, QuerySet};
pub use oneclass::{meta_train_oneclass, OneClassOutcome, OneClassState};
pub use report::{DetectionReport, ReportRow};
pub use train::{
    meta_train_jumbo, tune_queries_with_frozen_meta, MetaTrainConfig, MetaTrainOutcome,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaMode {
    Jumbo,
    OneClass,
}

impl MetaMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetaMode::Jumbo => "jumbo",
            MetaMode::OneClass => "oneclass",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "jumbo" => Ok(MetaMode::Jumbo),
            "oneclass" => Ok(MetaMode::OneClass),
            other => Err(Error::invalid(format!("unknown meta mode '{other}'"))),
        }
    }
}

/// A complete deployable detector: queries, classifier, and (for the
/// one-class variant) the radius.
#[derive(Debug, Clone)]
pub struct MetaState {
    pub mode: MetaMode,
    pub meta: MetaClassifier,
    pub queries: QuerySet,
    pub rho: Option<f64>,
}

impl MetaState {
    pub fn jumbo(meta: MetaClassifier, queries: QuerySet) -> Self {
        MetaState {
            mode: MetaMode::Jumbo,
            meta,
            queries,
            rho: None,
        }
    }

    pub fn one_class(state: OneClassState, queries: QuerySet) -> Self {
        MetaState {
            mode: MetaMode::OneClass,
            meta: state.meta,
            queries,
            rho: Some(state.rho),
        }
    }

    pub fn k(&self) -> usize {
        self.queries.k()
    }

    pub fn d_x(&self) -> usize {
        self.queries.d_x()
    }

    pub fn c(&self) -> usize {
        self.meta.feat_len() / self.queries.k()
    }

    /// Score a target through forward queries only. Higher means more likely
    /// Trojaned in both modes.
    pub fn score_target(&self, target: &dyn BlackBox) -> Result<f64> {
        if target.num_classes() != self.c() {
            return Err(Error::shape(format!(
                "target has {} classes, detector expects {}",
                target.num_classes(),
                self.c()
            )));
        }
        let features = extract_features(target, &self.queries)?;
        let score = self.meta.score(&features)?;
        Ok(match self.mode {
            MetaMode::Jumbo => score,
            MetaMode::OneClass => self.rho.unwrap_or(0.0) - score,
        })
    }
}
