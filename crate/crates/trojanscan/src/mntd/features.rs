//! Query sets and black-box feature extraction.

use rand_distr::{Distribution, Normal};

use crate::diffnet::{softmax_probs, Network, Tensor};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Forward-evaluation-only view of a model.
///
/// Detection code takes targets through this trait, so scoring can never
/// depend on a target's parameters, only on what it answers at the queries.
pub trait BlackBox {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Class probabilities, one row per input row.
    fn predict_probs(&self, batch: &Tensor) -> Result<Tensor>;
}

impl BlackBox for Network {
    fn input_dim(&self) -> usize {
        self.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.output_dim()
    }

    fn predict_probs(&self, batch: &Tensor) -> Result<Tensor> {
        softmax_probs(&self.logits(batch)?)
    }
}

/// The k probe inputs, stored as a `k x d_x` tensor (with a grad buffer
/// during query tuning).
#[derive(Debug, Clone)]
pub struct QuerySet {
    tensor: Tensor,
}

impl QuerySet {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.shape().len() != 2 || tensor.rows() == 0 {
            return Err(Error::shape(format!(
                "query set must be a nonempty k x d_x matrix, got {:?}",
                tensor.shape()
            )));
        }
        tensor.check_finite("query set")?;
        Ok(QuerySet { tensor })
    }

    /// Initial queries: each coordinate `N(0.5, 0.1)` clamped to `[0,1]`.
    pub fn init_gaussian(k: usize, d_x: usize, rng: &mut Stream) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("query count k must be at least 1"));
        }
        let normal: Normal<f64> = Normal::new(0.5, 0.1).expect("fixed moments are valid");
        let data = (0..k * d_x)
            .map(|_| normal.sample(rng).clamp(0.0, 1.0))
            .collect();
        Ok(QuerySet {
            tensor: Tensor::from_vec(&[k, d_x], data)?,
        })
    }

    pub fn k(&self) -> usize {
        self.tensor.rows()
    }

    pub fn d_x(&self) -> usize {
        self.tensor.cols()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.tensor
    }

    /// Clamp every coordinate back into the valid input range; applied after
    /// every tuning step.
    pub fn clamp_unit(&mut self) {
        for v in self.tensor.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// Concatenated class-probability responses at the k queries, in query
/// order: a vector of length `c * k`.
pub fn extract_features(model: &dyn BlackBox, queries: &QuerySet) -> Result<Vec<f64>> {
    if model.input_dim() != queries.d_x() {
        return Err(Error::shape(format!(
            "model input width {} does not match query width {}",
            model.input_dim(),
            queries.d_x()
        )));
    }
    let probs = model.predict_probs(queries.as_tensor())?;
    Ok(probs.data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::mlp_arch;
    use crate::rng;

    #[test]
    fn feature_length_is_c_times_k() {
        let net = Network::zeros(&mlp_arch(64, 8, 4)).unwrap();
        let mut rng = rng::stream(1, "queries");
        let q = QuerySet::init_gaussian(10, 64, &mut rng).unwrap();
        let f = extract_features(&net, &q).unwrap();
        assert_eq!(f.len(), 40);
    }

    #[test]
    fn bias_only_network_repeats_one_block() {
        let mut net = Network::zeros(&mlp_arch(16, 4, 3)).unwrap();
        {
            let mut affs = net.affine_layers_mut();
            affs[1].bias.data_mut().copy_from_slice(&[0.2, -0.1, 0.6]);
        }
        let mut rng = rng::stream(2, "queries");
        let q = QuerySet::init_gaussian(5, 16, &mut rng).unwrap();
        let f = extract_features(&net, &q).unwrap();
        for block in f.chunks(3).skip(1) {
            assert_eq!(block, &f[..3]);
        }
    }

    #[test]
    fn each_block_sums_to_one() {
        let mut rng = rng::stream(3, "net");
        let net = Network::seeded_init(&mlp_arch(16, 6, 4), &mut rng).unwrap();
        let mut qrng = rng::stream(3, "queries");
        let q = QuerySet::init_gaussian(7, 16, &mut qrng).unwrap();
        let f = extract_features(&net, &q).unwrap();
        for block in f.chunks(4) {
            let s: f64 = block.iter().sum();
            assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn gaussian_init_is_clamped_to_unit_box() {
        let mut rng = rng::stream(4, "queries");
        let q = QuerySet::init_gaussian(50, 64, &mut rng).unwrap();
        assert!(q.as_tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let net = Network::zeros(&mlp_arch(8, 4, 2)).unwrap();
        let mut rng = rng::stream(5, "queries");
        let q = QuerySet::init_gaussian(3, 16, &mut rng).unwrap();
        assert!(extract_features(&net, &q).is_err());
    }
}
