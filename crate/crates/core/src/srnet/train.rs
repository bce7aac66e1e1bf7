use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConvNet, Gradients, Tensor};
use crate::error::{Error, Result};

/// Registered input/target crops. The target may be full size (it is then
/// cropped to the valid-mode window) or already cropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub input: Tensor,
    pub target: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Global L2 bound on the batch gradient; `None` disables clipping.
    pub clip: Option<f64>,
    #[serde(default)]
    pub schedule: Schedule,
}

/// Learning-rate schedule over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero across all steps.
    Cosine,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            optimizer: Optimizer::default(),
            clip: Some(1.0),
            schedule: Schedule::Constant,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "learning rate must be finite and ≥ 0, batch size ≥ 1".into(),
            ));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("clip bound {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch, measured before each batch update.
    pub losses: Vec<f64>,
    pub steps: usize,
}

/// Minibatch training. Per-sample gradients may be computed in parallel
/// but are always summed in dataset order, so results do not depend on the
/// thread count.
pub fn train(net: &mut ConvNet, data: &[PatchPair], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(net, data, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean loss)` after each epoch.
pub fn train_with_progress(
    net: &mut ConvNet,
    data: &[PatchPair],
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptState::new(net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    let total_steps = cfg.epochs * data.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample = batch
                .par_iter()
                .map(|&i| net.backward(&data[i].input, &data[i].target))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = Gradients::zeros_like(net);
            let mut batch_loss = 0.0;
            for (l, g) in &per_sample {
                batch_loss += l;
                grad.add_assign(g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            total += batch_loss;
            grad.scale(1.0 / batch.len() as f64);
            if let Some(bound) = cfg.clip {
                let norm = grad.norm();
                if norm > bound {
                    grad.scale(bound / norm);
                }
            }
            let lr = match cfg.schedule {
                Schedule::Constant => cfg.lr,
                Schedule::Cosine => {
                    let frac = steps as f64 / total_steps as f64;
                    0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * frac).cos())
                }
            };
            state.step(net, &grad, cfg.optimizer, lr);
            steps += 1;
        }
        let mean = total / data.len() as f64;
        losses.push(mean);
        progress(epoch, mean);
    }
    Ok(TrainReport { losses, steps })
}

struct OptState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl OptState {
    fn new(net: &ConvNet) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut ConvNet, grad: &Gradients, optimizer: Optimizer, lr: f64) {
        self.t += 1;
        let params = net
            .layers_mut()
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()));
        let m = self.m.values_mut();
        let v = self.v.values_mut();
        match optimizer {
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params.zip(grad.values()).zip(m).zip(v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
            Optimizer::Sgd { momentum } => {
                for ((p, g), m) in params.zip(grad.values()).zip(m) {
                    *m = momentum * *m + g;
                    *p -= lr * *m;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::OutputMode;
    use super::*;
    use rand::Rng;

    fn pairs(n: usize, k: usize, size: usize, seed: u64, identity: bool) -> Vec<PatchPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = k * size * size;
                let input = Tensor::new(k, size, size, (0..len).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
                let target = if identity {
                    input.clone()
                } else {
                    Tensor::new(k, size, size, (0..len).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
                };
                PatchPair { input, target }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut net = ConvNet::with_architecture(1, 2, 3, OutputMode::Direct, 0).unwrap();
        let before = net.clone();
        let cfg = TrainConfig { lr: 0.0, epochs: 2, batch_size: 2, ..Default::default() };
        train(&mut net, &pairs(4, 1, 8, 1, false), &cfg).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn identity_task_loss_decreases() {
        let mut net = ConvNet::with_architecture(1, 3, 8, OutputMode::Direct, 2).unwrap();
        let cfg = TrainConfig { lr: 1e-3, epochs: 10, batch_size: 4, ..Default::default() };
        let rep = train(&mut net, &pairs(8, 1, 12, 3, true), &cfg).unwrap();
        assert!(rep.losses.windows(2).all(|w| w[1] < w[0]), "{:?}", rep.losses);
    }

    #[test]
    fn deterministic_per_seed() {
        let data = pairs(6, 2, 10, 4, false);
        let cfg = TrainConfig { lr: 1e-3, epochs: 3, batch_size: 4, seed: 9, ..Default::default() };
        let mut a = ConvNet::with_architecture(2, 2, 4, OutputMode::Direct, 1).unwrap();
        let mut b = a.clone();
        let ra = train(&mut a, &data, &cfg).unwrap();
        let rb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn divergence_is_reported() {
        let mut net = ConvNet::with_architecture(1, 2, 3, OutputMode::Direct, 0).unwrap();
        let mut data = pairs(2, 1, 8, 1, false);
        data[0].target.as_mut_slice()[3 * 8 + 3] = f64::NAN;
        let err = train(&mut net, &data, &TrainConfig { epochs: 1, ..Default::default() });
        assert!(matches!(err, Err(Error::Diverged { .. })));
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut net = ConvNet::with_architecture(1, 2, 3, OutputMode::Direct, 0).unwrap();
        assert!(train(&mut net, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn ten_samples_overfit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<PatchPair> = (0..10)
            .map(|_| PatchPair {
                input: Tensor::new(1, 8, 8, (0..64).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap(),
                target: Tensor::new(1, 2, 2, (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap(),
            })
            .collect();
        let mut net = ConvNet::with_architecture(1, 3, 16, OutputMode::Direct, 3).unwrap();
        let cfg = TrainConfig { lr: 3e-3, epochs: 500, batch_size: 10, ..Default::default() };
        let rep = train(&mut net, &data, &cfg).unwrap();
        assert!(*rep.losses.last().unwrap() < 1e-4, "{:?}", rep.losses.last());
    }
}
