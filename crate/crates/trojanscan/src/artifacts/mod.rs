//! On-disk artifact formats.
//!
//! Everything here is deterministic: identical inputs produce identical
//! bytes, so reruns of a seeded experiment overwrite files with themselves.

mod json_out;
mod manifest;
mod meta_file;
mod model_file;

pub use json_out::fmt_f64;
pub use manifest::{load_zoo, read_manifest, write_zoo, ManifestEntry};
pub use meta_file::{
    meta_state_from_json, meta_state_to_json, read_meta_state, write_meta_state,
    META_FORMAT_VERSION,
};
pub use model_file::{
    model_from_json, model_to_json, read_model, write_model, MODEL_FORMAT_VERSION,
};

use crate::error::{Error, Result};
use crate::mntd::ReportRow;
use std::path::Path;

/// Detection-report CSV: `model_path,label,score`, one row per target.
/// Unknown labels print as an empty field; failed rows carry `ERROR` in the
/// score column.
pub fn detection_csv(rows: &[(ReportRow, bool)]) -> String {
    let mut out = String::from("model_path,label,score\n");
    for (row, errored) in rows {
        out.push_str(&csv_escape(&row.name));
        out.push(',');
        if let Some(label) = row.label {
            out.push_str(if label { "1" } else { "0" });
        }
        out.push(',');
        if *errored {
            out.push_str("ERROR");
        } else {
            out.push_str(&fmt_f64(row.score));
        }
        out.push('\n');
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
