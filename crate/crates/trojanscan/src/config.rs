//! Experiment configuration: one JSON file, dotted-path overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffnet::TrainConfig;
use crate::error::{Error, Result};
use crate::mntd::{MetaMode, MetaTrainConfig};
use crate::trojan::AttackKind;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSection {
    pub d_x: usize,
    pub c: usize,
    pub n_attacker: usize,
    pub n_defender: usize,
    pub noise_sigma: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            d_x: 64,
            c: 4,
            n_attacker: 2048,
            n_defender: 256,
            noise_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ZooSection {
    pub count_benign: usize,
    pub count_trojan: usize,
    pub validation_benign: usize,
    pub validation_trojan: usize,
    /// `defender`, `modification`, `blending`, or `all_to_all`.
    pub role: String,
}

impl Default for ZooSection {
    fn default() -> Self {
        ZooSection {
            count_benign: 64,
            count_trojan: 64,
            validation_benign: 16,
            validation_trojan: 16,
            role: "defender".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
        }
    }
}

impl TrainingSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaSection {
    pub k: usize,
    /// `jumbo` or `oneclass`.
    pub mode: String,
    pub tune_queries: bool,
    pub nu: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MetaSection {
    fn default() -> Self {
        MetaSection {
            k: 10,
            mode: "jumbo".into(),
            tune_queries: true,
            nu: 0.1,
            hidden: 64,
            epochs: 50,
            batch_size: 32,
        }
    }
}

impl MetaSection {
    pub fn to_meta_train_config(&self, learning_rate: f64, seed: u64) -> MetaTrainConfig {
        MetaTrainConfig {
            hidden: self.hidden,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate,
            seed,
            ..MetaTrainConfig::default()
        }
    }

    pub fn mode(&self) -> Result<MetaMode> {
        MetaMode::parse(&self.mode)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmsRaceSection {
    pub lambda: f64,
    /// Trojaned adaptive targets per evaluation (matched by as many benign).
    pub target_count: usize,
    /// Explicit seeds; when absent they derive from the master seed.
    pub defender_seed: Option<u64>,
    pub attacker_seed: Option<u64>,
}

impl Default for ArmsRaceSection {
    fn default() -> Self {
        ArmsRaceSection {
            lambda: 1.0,
            target_count: 32,
            defender_seed: None,
            attacker_seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IoSection {
    pub output_dir: String,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection {
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub task: TaskSection,
    pub zoo: ZooSection,
    pub training: TrainingSection,
    pub meta: MetaSection,
    pub arms_race: ArmsRaceSection,
    pub io: IoSection,
}

pub fn parse_zoo_role(role: &str) -> Result<crate::trojan::ZooRole> {
    use crate::trojan::ZooRole;
    Ok(match role {
        "defender" => ZooRole::Defender,
        "modification" => ZooRole::Attacker(AttackKind::Modification),
        "blending" => ZooRole::Attacker(AttackKind::Blending),
        "all_to_all" => ZooRole::Attacker(AttackKind::AllToAll),
        other => return Err(Error::invalid(format!("unknown zoo role '{other}'"))),
    })
}

/// Set `path` (dot-separated) inside a JSON tree, creating objects as
/// needed. The value text is parsed as JSON when possible and falls back to
/// a plain string.
pub fn apply_override(root: &mut Value, path: &str, value_text: &str) -> Result<()> {
    let value: Value =
        serde_json::from_str(value_text).unwrap_or_else(|_| Value::String(value_text.to_string()));
    let mut cursor = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::invalid(format!("bad override path '{path}'")));
        }
        if !cursor.is_object() {
            return Err(Error::invalid(format!(
                "override path '{path}' descends into a non-object"
            )));
        }
        let map = cursor.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        cursor = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop always returns on the last segment")
}

/// Load a config: the file (or `{}` when absent), then overrides, then the
/// `TROJANSCAN_SEED` environment variable on top.
pub fn load_config(
    file: Option<&std::path::Path>,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<ExperimentConfig> {
    let mut root: Value = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            serde_json::from_str(&text).map_err(|e| {
                Error::parse(path.display().to_string(), format!("invalid JSON: {e}"))
            })?
        }
        None => Value::Object(Default::default()),
    };
    if !root.is_object() {
        return Err(Error::invalid("config root must be a JSON object"));
    }
    for (path, value) in overrides {
        apply_override(&mut root, path, value)?;
    }
    if let Some(seed_text) = env_seed {
        let seed: u64 = seed_text.trim().parse().map_err(|_| {
            Error::invalid(format!("TROJANSCAN_SEED must be a u64, got '{seed_text}'"))
        })?;
        apply_override(&mut root, "master_seed", &seed.to_string())?;
    }
    let config: ExperimentConfig = serde_json::from_value(root)
        .map_err(|e| Error::invalid(format!("config does not match schema: {e}")))?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.task.c < 2 {
            return Err(Error::invalid("task.c must be at least 2"));
        }
        self.training.to_train_config(0).validate()?;
        self.meta.mode()?;
        parse_zoo_role(&self.zoo.role)?;
        if !(0.0 < self.meta.nu && self.meta.nu < 1.0) {
            return Err(Error::invalid("meta.nu must lie in (0,1)"));
        }
        if self.meta.k == 0 {
            return Err(Error::invalid("meta.k must be at least 1"));
        }
        if !(self.arms_race.lambda.is_finite() && self.arms_race.lambda >= 0.0) {
            return Err(Error::invalid("arms_race.lambda must be nonnegative"));
        }
        Ok(())
    }

    pub fn defender_seed(&self) -> u64 {
        self.arms_race
            .defender_seed
            .unwrap_or_else(|| crate::rng::derive_seed(self.master_seed, "arms/defender"))
    }

    pub fn attacker_seed(&self) -> u64 {
        self.arms_race
            .attacker_seed
            .unwrap_or_else(|| crate::rng::derive_seed(self.master_seed, "arms/attacker"))
    }
}
