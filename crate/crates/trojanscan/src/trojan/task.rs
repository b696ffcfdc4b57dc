//! Synthetic classification task: Gaussian clouds around class prototypes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// A fixed task identity: class prototypes on a `g x g` input grid. Both
/// sides of an experiment (attacker datasets, defender datasets, held-out
/// evaluation slices) sample from the same `Task` so their models share the
/// classification problem.
#[derive(Debug, Clone)]
pub struct Task {
    d_x: usize,
    c: usize,
    noise_sigma: f64,
    prototypes: Vec<f64>,
}

impl Task {
    /// Prototypes are drawn uniformly from `[0,1]^{d_x}`, seeded.
    pub fn new(seed: u64, d_x: usize, c: usize, noise_sigma: f64) -> Result<Self> {
        if c < 2 {
            return Err(Error::invalid("task needs at least two classes"));
        }
        let g = (d_x as f64).sqrt().round() as usize;
        if g * g != d_x || d_x == 0 {
            return Err(Error::invalid(format!(
                "d_x={d_x} is not a perfect square; trigger masks assume a square grid"
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        let mut proto_rng = rng::stream(seed, "prototypes");
        let prototypes = (0..c * d_x)
            .map(|_| proto_rng.gen_range(0.0..=1.0))
            .collect();
        Ok(Task {
            d_x,
            c,
            noise_sigma,
            prototypes,
        })
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn prototype(&self, class: usize) -> &[f64] {
        &self.prototypes[class * self.d_x..(class + 1) * self.d_x]
    }

    /// Draw `n` instances: labels cycle through the classes (balanced within
    /// one), inputs are prototype plus Gaussian noise clamped to `[0,1]`.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("cannot sample an empty dataset"));
        }
        let mut noise_rng = rng::stream(seed, "noise");
        let normal = Normal::new(0.0, 1.0).expect("unit normal is well-formed");
        let mut inputs = Vec::with_capacity(n * self.d_x);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % self.c;
            labels.push(class);
            let proto = self.prototype(class);
            if self.noise_sigma == 0.0 {
                inputs.extend_from_slice(proto);
            } else {
                for &p in proto {
                    let v = p + self.noise_sigma * normal.sample(&mut noise_rng);
                    inputs.push(v.clamp(0.0, 1.0));
                }
            }
        }
        Dataset::new(inputs, labels, self.d_x, self.c)
    }

    /// Classify by nearest prototype in Euclidean distance (reference rule
    /// used to sanity-check sampled data, independent of any network).
    pub fn nearest_prototype(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..self.c {
            let d: f64 = self
                .prototype(k)
                .iter()
                .zip(x)
                .map(|(p, v)| (p - v) * (p - v))
                .sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

/// One-shot convenience: build the task and sample from the same seed.
pub fn synth_dataset(
    seed: u64,
    n: usize,
    d_x: usize,
    c: usize,
    noise_sigma: f64,
) -> Result<Dataset> {
    Task::new(seed, d_x, c, noise_sigma)?.sample(seed, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_reproduces_prototypes() {
        let task = Task::new(5, 16, 4, 0.0).unwrap();
        let data = task.sample(5, 8).unwrap();
        for i in 0..8 {
            assert_eq!(data.input(i), task.prototype(i % 4));
        }
    }

    #[test]
    fn classes_balanced_exactly_when_divisible() {
        let data = synth_dataset(9, 100, 16, 4, 0.05).unwrap();
        let mut counts = [0usize; 4];
        for i in 0..data.n() {
            counts[data.label(i)] += 1;
        }
        assert_eq!(counts, [25, 25, 25, 25]);
    }

    #[test]
    fn balance_within_one_otherwise() {
        let data = synth_dataset(9, 102, 16, 4, 0.05).unwrap();
        let mut counts = [0usize; 4];
        for i in 0..data.n() {
            counts[data.label(i)] += 1;
        }
        let max = counts.iter().max().unwrap();
        let min = counts.iter().min().unwrap();
        assert!(max - min <= 1);
    }

    #[test]
    fn nearest_prototype_recovers_labels_at_low_noise() {
        let task = Task::new(13, 64, 4, 0.1).unwrap();
        let data = task.sample(77, 1000).unwrap();
        let hits = (0..data.n())
            .filter(|&i| task.nearest_prototype(data.input(i)) == data.label(i))
            .count();
        assert!(hits as f64 / data.n() as f64 >= 0.99, "hits={hits}");
    }

    #[test]
    fn rejects_non_square_input_dim() {
        assert!(Task::new(1, 15, 4, 0.1).is_err());
    }

    #[test]
    fn same_seed_same_dataset_different_draw_differs() {
        let task = Task::new(3, 16, 2, 0.1).unwrap();
        let a = task.sample(10, 6).unwrap();
        let b = task.sample(10, 6).unwrap();
        let c = task.sample(11, 6).unwrap();
        assert_eq!(a.input(0), b.input(0));
        assert_ne!(a.input(0), c.input(0));
    }
}
