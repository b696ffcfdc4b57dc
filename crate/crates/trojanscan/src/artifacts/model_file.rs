//! Model files: architecture plus named parameter tensors.
//!
//! ```json
//! {"version":1,
//!  "arch":[["affine",64,32],["relu"],["affine",32,4]],
//!  "params":{"layer0.weight":{"shape":[32,64],"data":[...]}, ...}}
//! ```

use std::path::Path;

use serde_json::Value;

use super::json_out::JsonBuf;
use crate::diffnet::{LayerSpec, Network, Tensor};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u64 = 1;

pub fn model_to_json(net: &Network) -> String {
    let mut b = JsonBuf::new();
    b.raw("{\"version\":");
    b.raw(&MODEL_FORMAT_VERSION.to_string());
    b.raw(",\"arch\":[");
    for (i, layer) in net.spec().iter().enumerate() {
        if i > 0 {
            b.raw(",");
        }
        match layer {
            LayerSpec::Affine { input, output } => {
                b.raw(&format!("[\"affine\",{input},{output}]"));
            }
            LayerSpec::Relu => {
                b.raw("[\"relu\"]");
            }
        }
    }
    b.raw("],\"params\":{");
    for (i, (name, tensor)) in net.named_params().iter().enumerate() {
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
    b.raw("}}");
    b.finish()
}

pub fn write_model(path: &Path, net: &Network) -> Result<()> {
    std::fs::write(path, model_to_json(net)).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_arch(value: &Value, context: &str) -> Result<Vec<LayerSpec>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::parse(context, "arch must be an array"))?;
    let mut spec = Vec::with_capacity(arr.len());
    for (i, layer) in arr.iter().enumerate() {
        let parts = layer
            .as_array()
            .ok_or_else(|| Error::parse(context, format!("arch[{i}] must be an array")))?;
        let tag = parts
            .first()
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(context, format!("arch[{i}] missing tag")))?;
        match tag {
            "affine" => {
                let input = parts.get(1).and_then(Value::as_u64);
                let output = parts.get(2).and_then(Value::as_u64);
                match (input, output) {
                    (Some(input), Some(output)) => spec.push(LayerSpec::Affine {
                        input: input as usize,
                        output: output as usize,
                    }),
                    _ => {
                        return Err(Error::parse(
                            context,
                            format!("arch[{i}] affine layer needs input and output dims"),
                        ))
                    }
                }
            }
            "relu" => spec.push(LayerSpec::Relu),
            other => {
                return Err(Error::parse(
                    context,
                    format!("arch[{i}] has unknown layer kind '{other}'"),
                ))
            }
        }
    }
    Ok(spec)
}

pub(crate) fn parse_tensor(value: &Value, context: &str) -> Result<Tensor> {
    let shape: Vec<usize> = value
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(context, "tensor missing shape"))?
        .iter()
        .map(|v| v.as_u64().map(|u| u as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::parse(context, "tensor shape must be unsigned integers"))?;
    let data: Vec<f64> = value
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(context, "tensor missing data"))?
        .iter()
        .map(|v| v.as_f64())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::parse(context, "tensor data must be numbers"))?;
    let t = Tensor::from_vec(&shape, data).map_err(|e| Error::parse(context, e.to_string()))?;
    t.check_finite(context)?;
    Ok(t)
}

pub fn model_from_json(text: &str, context: &str) -> Result<Network> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(context, format!("invalid JSON: {e}")))?;
    let version = root.get("version").and_then(Value::as_u64);
    if version != Some(MODEL_FORMAT_VERSION) {
        return Err(Error::parse(
            context,
            format!("unsupported model version {version:?}"),
        ));
    }
    let spec = parse_arch(
        root.get("arch")
            .ok_or_else(|| Error::parse(context, "missing arch"))?,
        context,
    )?;
    let mut net = Network::zeros(&spec)?;
    let params = root
        .get("params")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::parse(context, "missing params object"))?;
    let names: Vec<String> = net.named_params().iter().map(|(n, _)| n.clone()).collect();
    {
        let mut affines = net.affine_layers_mut();
        for (pair_idx, chunk) in names.chunks(2).enumerate() {
            let w = params
                .get(&chunk[0])
                .ok_or_else(|| Error::parse(context, format!("missing parameter {}", chunk[0])))?;
            let b = params
                .get(&chunk[1])
                .ok_or_else(|| Error::parse(context, format!("missing parameter {}", chunk[1])))?;
            let w = parse_tensor(w, context)?;
            let b = parse_tensor(b, context)?;
            let aff = &mut affines[pair_idx];
            if w.shape() != aff.weight.shape() || b.shape() != aff.bias.shape() {
                return Err(Error::parse(
                    context,
                    format!(
                        "parameter {} has wrong shape for the declared arch",
                        chunk[0]
                    ),
                ));
            }
            aff.weight = w;
            aff.bias = b;
        }
    }
    Ok(net)
}

pub fn read_model(path: &Path) -> Result<Network> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    model_from_json(&text, &path.display().to_string())
}
