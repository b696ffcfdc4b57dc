//! The two-layer meta-classifier.

use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// `score = w2 . relu(W1 f + b1) + b2`; higher means more likely Trojaned.
#[derive(Debug, Clone)]
pub struct MetaClassifier {
    /// `hidden x feat_len`
    pub w1: Tensor,
    /// `hidden`
    pub b1: Tensor,
    /// `hidden`
    pub w2: Tensor,
    /// scalar, stored as a length-1 tensor
    pub b2: Tensor,
}

impl MetaClassifier {
    pub fn zeros(hidden: usize, feat_len: usize) -> Result<Self> {
        if hidden == 0 || feat_len == 0 {
            return Err(Error::shape("meta-classifier dimensions must be positive"));
        }
        Ok(MetaClassifier {
            w1: Tensor::zeros(&[hidden, feat_len]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden]),
            b2: Tensor::zeros(&[1]),
        })
    }

    /// Fan-in-scaled uniform init, the same scheme task networks use.
    pub fn seeded_init(hidden: usize, feat_len: usize, rng: &mut Stream) -> Result<Self> {
        use rand::Rng;
        let mut meta = MetaClassifier::zeros(hidden, feat_len)?;
        let bound1 = 1.0 / (feat_len as f64).sqrt();
        for v in meta.w1.data_mut() {
            *v = rng.gen_range(-bound1..=bound1);
        }
        for v in meta.b1.data_mut() {
            *v = rng.gen_range(-bound1..=bound1);
        }
        let bound2 = 1.0 / (hidden as f64).sqrt();
        for v in meta.w2.data_mut() {
            *v = rng.gen_range(-bound2..=bound2);
        }
        for v in meta.b2.data_mut() {
            *v = rng.gen_range(-bound2..=bound2);
        }
        Ok(meta)
    }

    /// Every parameter i.i.d. standard normal; the frozen randomized variant
    /// samples its classifier this way.
    pub fn sampled_normal(hidden: usize, feat_len: usize, rng: &mut Stream) -> Result<Self> {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, 1.0).expect("unit normal is well-formed");
        let mut meta = MetaClassifier::zeros(hidden, feat_len)?;
        for t in [&mut meta.w1, &mut meta.b1, &mut meta.w2, &mut meta.b2] {
            for v in t.data_mut() {
                *v = normal.sample(rng);
            }
        }
        Ok(meta)
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn feat_len(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        let (score, _) = self.score_cached(features)?;
        Ok(score)
    }

    /// Score plus the pre-activation vector needed by backward.
    pub fn score_cached(&self, features: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f_len = self.feat_len();
        if features.len() != f_len {
            return Err(Error::shape(format!(
                "feature length {} does not match meta input {}",
                features.len(),
                f_len
            )));
        }
        let w1 = self.w1.data();
        let mut z = self.b1.data().to_vec();
        for (j, zj) in z.iter_mut().enumerate() {
            let row = &w1[j * f_len..(j + 1) * f_len];
            for (w, f) in row.iter().zip(features) {
                *zj += w * f;
            }
        }
        let w2 = self.w2.data();
        let mut score = self.b2.data()[0];
        for (j, zj) in z.iter().enumerate() {
            if *zj > 0.0 {
                score += w2[j] * zj;
            }
        }
        Ok((score, z))
    }

    /// Backward through the classifier given the cached pre-activations.
    ///
    /// Accumulates parameter gradients when `accumulate_params` is set (the
    /// frozen-classifier variant turns it off), and writes the gradient on
    /// the features into `d_features` when provided.
    pub fn backward(
        &mut self,
        features: &[f64],
        z: &[f64],
        d_score: f64,
        accumulate_params: bool,
        d_features: Option<&mut [f64]>,
    ) {
        let h = self.hidden();
        let f_len = self.feat_len();
        debug_assert_eq!(features.len(), f_len);
        debug_assert_eq!(z.len(), h);

        // dz_j = d_score * w2_j * 1[z_j > 0]
        let mut dz = vec![0.0; h];
        {
            let w2 = self.w2.data();
            for j in 0..h {
                if z[j] > 0.0 {
                    dz[j] = d_score * w2[j];
                }
            }
        }
        if accumulate_params {
            {
                let g2 = self.w2.grad_mut();
                for j in 0..h {
                    if z[j] > 0.0 {
                        g2[j] += d_score * z[j];
                    }
                }
            }
            self.b2.grad_mut()[0] += d_score;
            {
                let g1 = self.w1.grad_mut();
                for (j, dzj) in dz.iter().enumerate() {
                    if *dzj != 0.0 {
                        let row = &mut g1[j * f_len..(j + 1) * f_len];
                        for (g, f) in row.iter_mut().zip(features) {
                            *g += dzj * f;
                        }
                    }
                }
            }
            {
                let gb1 = self.b1.grad_mut();
                for (g, dzj) in gb1.iter_mut().zip(&dz) {
                    *g += dzj;
                }
            }
        }
        if let Some(df) = d_features {
            debug_assert_eq!(df.len(), f_len);
            let w1 = self.w1.data();
            for (j, dzj) in dz.iter().enumerate() {
                if *dzj != 0.0 {
                    let row = &w1[j * f_len..(j + 1) * f_len];
                    for (d, w) in df.iter_mut().zip(row) {
                        *d += dzj * w;
                    }
                }
            }
        }
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn params(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.ensure_grad();
            p.zero_grad();
        }
    }

    /// Sum of squared Frobenius norms of all parameters.
    pub fn l2_norm_squared(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum()
    }

    /// Order-stable hash of the exact parameter bit patterns.
    pub fn param_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.params() {
            for v in t.data() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_only_classifier_returns_bias() {
        let mut meta = MetaClassifier::zeros(4, 8).unwrap();
        meta.b2.data_mut()[0] = 0.7;
        let score = meta.score(&[0.0; 8]).unwrap();
        assert_eq!(score, 0.7);
    }

    #[test]
    fn hand_set_single_hidden_unit_matches_arithmetic() {
        // All dyadic values, so the expected scores are exact.
        let mut meta = MetaClassifier::zeros(1, 2).unwrap();
        meta.w1.data_mut().copy_from_slice(&[0.5, -0.25]);
        meta.b1.data_mut()[0] = 0.125;
        meta.w2.data_mut()[0] = 2.0;
        meta.b2.data_mut()[0] = -0.25;
        // z = 0.5*1 - 0.25*0.5 + 0.125 = 0.5 -> score = 2*0.5 - 0.25 = 0.75
        assert_eq!(meta.score(&[1.0, 0.5]).unwrap(), 0.75);
        // z = 0.5*0 - 0.25*1 + 0.125 = -0.125 -> relu 0 -> score = -0.25
        assert_eq!(meta.score(&[0.0, 1.0]).unwrap(), -0.25);
    }

    #[test]
    fn score_is_lipschitz_in_features() {
        let mut rng = crate::rng::stream(8, "meta-test");
        let meta = MetaClassifier::seeded_init(16, 12, &mut rng).unwrap();
        let f: Vec<f64> = (0..12).map(|i| (i as f64) / 12.0).collect();
        let base = meta.score(&f).unwrap();
        let mut bumped = f.clone();
        for v in bumped.iter_mut() {
            *v += 1e-9;
        }
        let w1_norm: f64 = meta.w1.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let w2_norm: f64 = meta.w2.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = w1_norm * w2_norm * (12f64).sqrt() * 1e-9;
        let moved = meta.score(&bumped).unwrap();
        assert!((moved - base).abs() <= bound + 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = crate::rng::stream(9, "meta-test");
        let mut meta = MetaClassifier::seeded_init(6, 4, &mut rng).unwrap();
        let f = [0.3, 0.9, 0.1, 0.7];
        let (_, z) = meta.score_cached(&f).unwrap();
        meta.zero_grads();
        let mut df = vec![0.0; 4];
        meta.backward(&f, &z, 1.0, true, Some(&mut df));

        let h = 1e-6;
        for slot in 0..4 {
            let mut fp = f;
            fp[slot] += h;
            let plus = meta.score(&fp).unwrap();
            fp[slot] -= 2.0 * h;
            let minus = meta.score(&fp).unwrap();
            let numeric = (plus - minus) / (2.0 * h);
            assert!((df[slot] - numeric).abs() < 1e-6, "df[{slot}]");
        }
        for pi in 0..4 {
            for slot in 0..meta.params()[pi].len() {
                let analytic = meta.params()[pi].grad().unwrap()[slot];
                let orig = meta.params()[pi].data()[slot];
                meta.params_mut()[pi].data_mut()[slot] = orig + h;
                let plus = meta.score(&f).unwrap();
                meta.params_mut()[pi].data_mut()[slot] = orig - h;
                let minus = meta.score(&f).unwrap();
                meta.params_mut()[pi].data_mut()[slot] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                assert!(
                    (analytic - numeric).abs() < 1e-6,
                    "param {pi}[{slot}]: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn param_hash_tracks_any_bit_change() {
        let mut rng = crate::rng::stream(10, "meta-test");
        let meta = MetaClassifier::sampled_normal(4, 6, &mut rng).unwrap();
        let h0 = meta.param_hash();
        let mut changed = meta.clone();
        let v = changed.w2.data()[2];
        changed.w2.data_mut()[2] = f64::from_bits(v.to_bits() ^ 1);
        assert_ne!(h0, changed.param_hash());
        assert_eq!(h0, meta.param_hash());
    }
}
