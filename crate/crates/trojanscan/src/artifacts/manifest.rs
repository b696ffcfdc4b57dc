//! Zoo manifests: JSON-Lines, one record per shadow model.
//!
//! ```json
//! {"path":"models/trojan_0003.json","label":1,"setting":{...},"train_acc":...,"asr":...,"seed":...}
//! ```
//!
//! Settings serialize the mask as a base-2 string and the pattern as a
//! float array.

use std::path::{Path, PathBuf};

use serde_json::Value;

use super::json_out::JsonBuf;
use super::model_file::{read_model, write_model};
use crate::error::{Error, Result};
use crate::trojan::{AttackGoal, ShadowRecord, TrojanSetting};

fn goal_str(goal: AttackGoal) -> &'static str {
    match goal {
        AttackGoal::SingleTarget => "single_target",
        AttackGoal::AllToAll => "all_to_all",
    }
}

fn setting_json(b: &mut JsonBuf, s: &TrojanSetting) {
    b.raw("{\"mask\":\"");
    for &m in &s.mask {
        b.raw(if m == 1 { "1" } else { "0" });
    }
    b.raw("\",\"pattern\":");
    b.float_array(&s.pattern);
    b.raw(",\"alpha\":");
    b.float(s.alpha);
    b.raw(",\"target_label\":");
    b.raw(&s.target_label.to_string());
    b.raw(",\"poison_ratio\":");
    b.float(s.poison_ratio);
    b.raw(",\"goal\":\"");
    b.raw(goal_str(s.goal));
    b.raw("\"}");
}

fn manifest_line(rec: &ShadowRecord, rel_path: &str) -> String {
    let mut b = JsonBuf::new();
    b.raw("{\"path\":");
    b.string(rel_path);
    b.raw(",\"label\":");
    b.raw(if rec.label { "1" } else { "0" });
    b.raw(",\"setting\":");
    match &rec.setting {
        Some(s) => setting_json(&mut b, s),
        None => {
            b.raw("null");
        }
    }
    b.raw(",\"train_acc\":");
    b.float(rec.train_accuracy);
    b.raw(",\"asr\":");
    match rec.attack_success_rate {
        Some(asr) => {
            b.float(asr);
        }
        None => {
            b.raw("null");
        }
    }
    b.raw(",\"seed\":");
    b.raw(&rec.seed.to_string());
    b.raw("}");
    b.finish()
}

fn record_file_name(index: usize, rec: &ShadowRecord) -> String {
    if rec.label {
        format!("models/trojan_{index:04}.json")
    } else {
        format!("models/benign_{index:04}.json")
    }
}

/// Write every model under `dir/models/` plus `dir/manifest.jsonl`;
/// returns the manifest path. Rewrites are byte-identical for identical
/// zoos.
pub fn write_zoo(dir: &Path, zoo: &[ShadowRecord]) -> Result<PathBuf> {
    let models_dir = dir.join("models");
    std::fs::create_dir_all(&models_dir)
        .map_err(|e| Error::io(models_dir.display().to_string(), e))?;
    let mut lines = String::new();
    let mut benign_idx = 0usize;
    let mut trojan_idx = 0usize;
    for rec in zoo {
        let idx = if rec.label {
            let i = trojan_idx;
            trojan_idx += 1;
            i
        } else {
            let i = benign_idx;
            benign_idx += 1;
            i
        };
        let rel = record_file_name(idx, rec);
        write_model(&dir.join(&rel), &rec.model)?;
        lines.push_str(&manifest_line(rec, &rel));
        lines.push('\n');
    }
    let manifest = dir.join("manifest.jsonl");
    std::fs::write(&manifest, lines).map_err(|e| Error::io(manifest.display().to_string(), e))?;
    Ok(manifest)
}

fn parse_setting(value: &Value, context: &str) -> Result<TrojanSetting> {
    let mask_str = value
        .get("mask")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::parse(context, "setting missing mask string"))?;
    let mask = mask_str
        .chars()
        .map(|c| match c {
            '0' => Ok(0u8),
            '1' => Ok(1u8),
            other => Err(Error::parse(
                context,
                format!("mask contains non-binary character '{other}'"),
            )),
        })
        .collect::<Result<Vec<u8>>>()?;
    let pattern = value
        .get("pattern")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(context, "setting missing pattern"))?
        .iter()
        .map(Value::as_f64)
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::parse(context, "pattern must be numbers"))?;
    let alpha = value
        .get("alpha")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::parse(context, "setting missing alpha"))?;
    let target_label = value
        .get("target_label")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::parse(context, "setting missing target_label"))?
        as usize;
    let poison_ratio = value
        .get("poison_ratio")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::parse(context, "setting missing poison_ratio"))?;
    let goal = match value.get("goal").and_then(Value::as_str) {
        Some("single_target") => AttackGoal::SingleTarget,
        Some("all_to_all") => AttackGoal::AllToAll,
        other => {
            return Err(Error::parse(
                context,
                format!("setting has unknown goal {other:?}"),
            ))
        }
    };
    Ok(TrojanSetting {
        mask,
        pattern,
        alpha,
        target_label,
        poison_ratio,
        goal,
    })
}

/// One parsed manifest row; the model itself is loaded separately.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: bool,
    pub setting: Option<TrojanSetting>,
    pub train_acc: f64,
    pub asr: Option<f64>,
    pub seed: u64,
}

/// Parse `manifest.jsonl`; `path` entries are resolved relative to the
/// manifest's directory. Errors name the offending line.
pub fn read_manifest(manifest_path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let context = format!("{}:{}", manifest_path.display(), lineno + 1);
        let value: Value = serde_json::from_str(line)
            .map_err(|e| Error::parse(&context, format!("invalid JSON: {e}")))?;
        let rel = value
            .get("path")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(&context, "missing path"))?;
        let label = match value.get("label").and_then(Value::as_u64) {
            Some(0) => false,
            Some(1) => true,
            other => {
                return Err(Error::parse(
                    &context,
                    format!("label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let setting = match value.get("setting") {
            None | Some(Value::Null) => None,
            Some(v) => Some(parse_setting(v, &context)?),
        };
        if label != setting.is_some() {
            return Err(Error::parse(
                &context,
                "label disagrees with presence of setting",
            ));
        }
        let train_acc = value
            .get("train_acc")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::parse(&context, "missing train_acc"))?;
        let asr = match value.get("asr") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| Error::parse(&context, "asr must be a number"))?,
            ),
        };
        let seed = value
            .get("seed")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::parse(&context, "missing seed"))?;
        entries.push(ManifestEntry {
            path: base.join(rel),
            label,
            setting,
            train_acc,
            asr,
            seed,
        });
    }
    if entries.is_empty() {
        return Err(Error::parse(
            manifest_path.display().to_string(),
            "manifest contains no records",
        ));
    }
    Ok(entries)
}

/// Read the manifest and load every referenced model.
pub fn load_zoo(manifest_path: &Path) -> Result<Vec<ShadowRecord>> {
    let entries = read_manifest(manifest_path)?;
    entries
        .into_iter()
        .map(|e| {
            let model = read_model(&e.path)?;
            let rec = ShadowRecord {
                model,
                label: e.label,
                setting: e.setting,
                train_accuracy: e.train_acc,
                attack_success_rate: e.asr,
                seed: e.seed,
            };
            rec.check_consistency()?;
            Ok(rec)
        })
        .collect()
}
