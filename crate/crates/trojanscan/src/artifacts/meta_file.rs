//! Meta-state files: the deployable detector.
//!
//! ```json
//! {"version":1,"k":10,"c":4,"queries":[[...],...],
//!  "theta":{"w1":{"shape":[..],"data":[..]},"b1":...,"w2":...,"b2":...},
//!  "mode":"jumbo","rho":null,"master_seed":...}
//! ```

use std::path::Path;

use serde_json::Value;

use super::json_out::JsonBuf;
use super::model_file::parse_tensor;
use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::mntd::{MetaClassifier, MetaMode, MetaState, QuerySet};

pub const META_FORMAT_VERSION: u64 = 1;

pub fn meta_state_to_json(state: &MetaState, master_seed: u64) -> String {
    let mut b = JsonBuf::new();
    b.raw("{\"version\":");
    b.raw(&META_FORMAT_VERSION.to_string());
    b.raw(",\"k\":");
    b.raw(&state.k().to_string());
    b.raw(",\"c\":");
    b.raw(&state.c().to_string());
    b.raw(",\"queries\":[");
    for q in 0..state.k() {
        if q > 0 {
            b.raw(",");
        }
        b.float_array(state.queries.as_tensor().row(q));
    }
    b.raw("],\"theta\":{");
    for (i, (name, tensor)) in [
        ("w1", &state.meta.w1),
        ("b1", &state.meta.b1),
        ("w2", &state.meta.w2),
        ("b2", &state.meta.b2),
    ]
    .iter()
    .enumerate()
    {
        if i > 0 {
            b.raw(",");
        }
        b.string(name);
        b.raw(":{\"shape\":");
        b.usize_array(tensor.shape());
        b.raw(",\"data\":");
        b.float_array(tensor.data());
        b.raw("}");
    }
    b.raw("},\"mode\":\"");
    b.raw(state.mode.as_str());
    b.raw("\",\"rho\":");
    match state.rho {
        Some(rho) => {
            b.float(rho);
        }
        None => {
            b.raw("null");
        }
    }
    b.raw(",\"master_seed\":");
    b.raw(&master_seed.to_string());
    b.raw("}");
    b.finish()
}

pub fn write_meta_state(path: &Path, state: &MetaState, master_seed: u64) -> Result<()> {
    std::fs::write(path, meta_state_to_json(state, master_seed))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn meta_state_from_json(text: &str, context: &str) -> Result<MetaState> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(context, format!("invalid JSON: {e}")))?;
    let version = root.get("version").and_then(Value::as_u64);
    if version != Some(META_FORMAT_VERSION) {
        return Err(Error::parse(
            context,
            format!("unsupported meta-state version {version:?}"),
        ));
    }
    let k = root
        .get("k")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::parse(context, "missing k"))? as usize;
    let c = root
        .get("c")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::parse(context, "missing c"))? as usize;
    let rows = root
        .get("queries")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(context, "missing queries"))?;
    if rows.len() != k {
        return Err(Error::parse(
            context,
            format!("queries has {} rows, expected k={k}", rows.len()),
        ));
    }
    let mut data = Vec::new();
    let mut d_x = None;
    for row in rows {
        let row: Vec<f64> = row
            .as_array()
            .ok_or_else(|| Error::parse(context, "query rows must be arrays"))?
            .iter()
            .map(Value::as_f64)
            .collect::<Option<_>>()
            .ok_or_else(|| Error::parse(context, "query values must be numbers"))?;
        match d_x {
            None => d_x = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(context, "query rows have unequal widths"))
            }
            _ => {}
        }
        data.extend(row);
    }
    let d_x = d_x.ok_or_else(|| Error::parse(context, "queries are empty"))?;
    let queries = QuerySet::new(Tensor::from_vec(&[k, d_x], data)?)?;

    let theta = root
        .get("theta")
        .ok_or_else(|| Error::parse(context, "missing theta"))?;
    let get = |name: &str| -> Result<Tensor> {
        parse_tensor(
            theta
                .get(name)
                .ok_or_else(|| Error::parse(context, format!("theta missing {name}")))?,
            context,
        )
    };
    let meta = MetaClassifier {
        w1: get("w1")?,
        b1: get("b1")?,
        w2: get("w2")?,
        b2: get("b2")?,
    };
    if meta.feat_len() != c * k {
        return Err(Error::parse(
            context,
            format!(
                "theta expects {} features but c*k={}",
                meta.feat_len(),
                c * k
            ),
        ));
    }
    let mode = MetaMode::parse(
        root.get("mode")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(context, "missing mode"))?,
    )?;
    let rho = match root.get("rho") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_f64()
                .ok_or_else(|| Error::parse(context, "rho must be a number"))?,
        ),
    };
    if mode == MetaMode::OneClass && rho.is_none() {
        return Err(Error::parse(context, "oneclass state requires rho"));
    }
    Ok(MetaState {
        mode,
        meta,
        queries,
        rho,
    })
}

pub fn read_meta_state(path: &Path) -> Result<MetaState> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    meta_state_from_json(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn meta_state_round_trips() {
        let mut r = rng::stream(1, "meta-file-test");
        let meta = MetaClassifier::seeded_init(8, 12, &mut r).unwrap();
        let queries = QuerySet::init_gaussian(4, 9, &mut r).unwrap();
        let state = MetaState::jumbo(meta, queries);
        let text = meta_state_to_json(&state, 42);
        let back = meta_state_from_json(&text, "test").unwrap();
        assert_eq!(back.k(), 4);
        assert_eq!(back.c(), 3);
        assert_eq!(back.rho, None);
        assert_eq!(back.meta.w1.data(), state.meta.w1.data());
        assert_eq!(
            back.queries.as_tensor().data(),
            state.queries.as_tensor().data()
        );
        assert_eq!(text, meta_state_to_json(&back, 42));
    }

    #[test]
    fn oneclass_without_rho_is_rejected() {
        let mut r = rng::stream(2, "meta-file-test");
        let meta = MetaClassifier::seeded_init(4, 6, &mut r).unwrap();
        let queries = QuerySet::init_gaussian(2, 5, &mut r).unwrap();
        let state = MetaState::jumbo(meta, queries);
        let text =
            meta_state_to_json(&state, 0).replace("\"mode\":\"jumbo\"", "\"mode\":\"oneclass\"");
        assert!(meta_state_from_json(&text, "test").is_err());
    }
}
