//! Minimal reverse-mode differentiable network core.
//!
//! Sequential dense MLPs only: forward passes record a tape of activations,
//! and backward passes produce gradients for every parameter and for the
//! input batch itself. The input gradients are what make query tuning and
//! the adaptive attack possible, so they are first-class here rather than a
//! debugging afterthought.

mod adam;
mod loss;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, adam_step_tensor, AdamHyper, AdamState, NetworkOptimizer};
pub use loss::{
    accuracy, argmax, binary_cross_entropy_with_logit, cross_entropy_grad, cross_entropy_loss,
    softmax_probs, softmax_vjp_row,
};
pub use network::{mlp_arch, AffineLayer, LayerSpec, Network, Tape};
pub use tensor::Tensor;
pub use train::{train_task_model, train_with_hook, StepHook, TrainConfig, TrainOutcome};

#[cfg(test)]
mod gradient_tests {
    //! Analytic gradients against central finite differences.

    use super::*;
    use crate::data::Dataset;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    fn loss_of(net: &Network, x: &Tensor, labels: &[usize]) -> f64 {
        cross_entropy_loss(&net.logits(x).unwrap(), labels).unwrap()
    }

    #[test]
    fn parameter_and_input_gradients_match_finite_differences() {
        let spec = [
            LayerSpec::Affine {
                input: 4,
                output: 6,
            },
            LayerSpec::Relu,
            LayerSpec::Affine {
                input: 6,
                output: 5,
            },
            LayerSpec::Relu,
            LayerSpec::Affine {
                input: 5,
                output: 3,
            },
        ];
        let mut rng = crate::rng::stream(2024, "grad-check");
        let mut net = Network::seeded_init(&spec, &mut rng).unwrap();

        let raw: Vec<f64> = (0..8)
            .map(|i| (i as f64 * 0.37).sin() * 0.4 + 0.5)
            .collect();
        let x = Tensor::matrix(2, 4, raw).unwrap();
        let labels = [2usize, 0];

        let (logits, tape) = net.forward(&x).unwrap();
        let d_logits = cross_entropy_grad(&logits, &labels).unwrap();
        net.zero_grads();
        let d_input = net.backward(&tape, &d_logits).unwrap();

        let h = 1e-5;
        // Parameters: perturb one slot at a time, recompute the loss from
        // scratch, restore.
        for pi in 0..net.params().len() {
            for slot in 0..net.params()[pi].len() {
                let analytic = net.params()[pi].grad().unwrap()[slot];
                let orig = net.params()[pi].data()[slot];
                net.params_mut()[pi].data_mut()[slot] = orig + h;
                let plus = loss_of(&net, &x, &labels);
                net.params_mut()[pi].data_mut()[slot] = orig - h;
                let minus = loss_of(&net, &x, &labels);
                net.params_mut()[pi].data_mut()[slot] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                assert!(
                    rel_err(analytic, numeric) < 1e-4,
                    "param {pi}[{slot}]: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
        // Inputs.
        let mut xv = x.clone();
        for slot in 0..xv.len() {
            let analytic = d_input.data()[slot];
            let orig = xv.data()[slot];
            xv.data_mut()[slot] = orig + h;
            let plus = loss_of(&net, &xv, &labels);
            xv.data_mut()[slot] = orig - h;
            let minus = loss_of(&net, &xv, &labels);
            xv.data_mut()[slot] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            assert!(
                rel_err(analytic, numeric) < 1e-4,
                "input[{slot}]: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn training_determinism_is_thread_independent() {
        // Two trainings racing in different thread contexts produce the same
        // parameters as a sequential run.
        let data = Dataset::new(vec![0.1, 0.2, 0.9, 0.8, 0.4, 0.6], vec![0, 1, 1], 2, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let sequential = train_task_model(&data, &mlp_arch(2, 4, 2), &cfg).unwrap();
        let handle = {
            let data = data.clone();
            let cfg = cfg.clone();
            std::thread::spawn(move || train_task_model(&data, &mlp_arch(2, 4, 2), &cfg).unwrap())
        };
        let threaded = handle.join().unwrap();
        for (a, b) in sequential
            .network
            .params()
            .iter()
            .zip(threaded.network.params().iter())
        {
            assert_eq!(a.data(), b.data());
        }
    }
}
