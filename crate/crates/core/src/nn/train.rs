use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics;
use crate::scalar::Scalar;

use super::adam::{learning_rate, Adam};
use super::loss::mape_loss;
use super::network::{normalize_fit, NetworkModel, DEFAULT_BN_MOMENTUM};
use super::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<S> {
    pub lr0: S,
    pub decay: S,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: S,
    pub beta2: S,
    pub eps_adam: S,
    /// Loss guard, in normalized target units.
    pub eps_mape: S,
    pub bn_momentum: S,
    pub seed: u64,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        TrainConfig {
            lr0: S::lit(1e-4),
            decay: S::lit(1e-7),
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            beta1: S::lit(0.9),
            beta2: S::lit(0.999),
            eps_adam: S::lit(1e-8),
            eps_mape: S::lit(1e-7),
            bn_momentum: S::lit(DEFAULT_BN_MOMENTUM),
            seed: 42,
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::domain("batch_size must be at least 2"));
        }
        if self.patience == 0 {
            return Err(Error::domain("patience must be positive"));
        }
        if !(self.lr0 > S::zero()) || self.decay < S::zero() {
            return Err(Error::domain("lr0 must be positive and decay non-negative"));
        }
        let unit = |v: S| v >= S::zero() && v < S::one();
        if !unit(self.beta1) || !unit(self.beta2) || !unit(self.bn_momentum) {
            return Err(Error::domain("beta1, beta2 and bn_momentum must lie in [0, 1)"));
        }
        if !(self.eps_adam > S::zero()) || self.eps_mape < S::zero() {
            return Err(Error::domain("eps_adam must be positive and eps_mape non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord<S> {
    pub epoch: usize,
    /// Mean minibatch loss (guarded MAPE, percent, normalized units).
    pub train_mape: S,
    /// Percent, infer mode, denormalized outputs.
    pub test_mape: S,
    pub lr: S,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History<S> {
    pub epochs: Vec<EpochRecord<S>>,
    /// Epoch whose parameters were kept, if any epoch ran.
    pub best_epoch: Option<usize>,
}

impl<S: Scalar> History<S> {
    pub fn best_test_mape(&self) -> Option<S> {
        self.best_epoch.map(|e| self.epochs[e].test_mape)
    }
}

/// Test-set MAPE (percent) of the model's denormalized predictions.
pub fn evaluate_mape<S: Scalar>(model: &NetworkModel<S>, data: &Dataset<S>) -> Result<S> {
    let pred = model.predict(data.inputs())?;
    let gt = data.targets();
    metrics::mape(
        gt.as_slice().expect("dataset is standard layout"),
        pred.as_slice().expect("fresh array"),
    )
}

/// Minibatch Adam on the guarded MAPE loss. Returns the parameters from the
/// epoch with the lowest test MAPE.
pub fn train<S: Scalar>(
    mut model: NetworkModel<S>,
    train_set: &Dataset<S>,
    test_set: &Dataset<S>,
    config: &TrainConfig<S>,
) -> Result<(NetworkModel<S>, History<S>)> {
    config.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::domain("training and test sets must be nonempty"));
    }
    for ds in [train_set, test_set] {
        if ds.input_dim() != model.input_dim() || ds.output_dim() != model.output_dim() {
            return Err(Error::domain(format!(
                "dataset is {}->{}, network is {}->{}",
                ds.input_dim(),
                ds.output_dim(),
                model.input_dim(),
                model.output_dim()
            )));
        }
    }
    if train_set.len() < 2 {
        return Err(Error::domain("training set needs at least 2 rows"));
    }
    let norm = match model.normalization() {
        Some(n) => n,
        None => {
            let n = normalize_fit(train_set)?;
            model.set_normalization(n);
            n
        }
    };
    model.set_bn_momentum(config.bn_momentum);
    let x_all = norm.normalize_inputs(train_set.inputs());
    let y_all = norm.normalize_targets(train_set.targets());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut adam = Adam::new(config.beta1, config.beta2, config.eps_adam);
    let mut history = History::default();
    let mut best: Option<(S, NetworkModel<S>)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.max_epochs {
        let lr = learning_rate(config.lr0, config.decay, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = S::zero();
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            // Batch statistics are undefined for a single trailing row.
            if chunk.len() < 2 {
                continue;
            }
            let xb = x_all.select(ndarray::Axis(0), chunk);
            let yb = y_all.select(ndarray::Axis(0), chunk);
            let cache = model.forward_train(xb.view())?;
            let (loss, grad) = mape_loss(yb.view(), cache.output(), config.eps_mape)?;
            let grads = model.backward(&cache, grad.view())?;
            adam.step(model.parameter_slices_mut(), grads.slices(), lr)?;
            loss_sum += loss;
            batches += 1;
        }
        let train_mape = loss_sum / S::lit(batches.max(1) as f64);
        let test_mape = evaluate_mape(&model, test_set)?;
        if !test_mape.is_finite() {
            return Err(Error::State(format!("test MAPE diverged at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_mape,
            test_mape,
            lr,
        });
        if best.as_ref().is_none_or(|(b, _)| test_mape < *b) {
            best = Some((test_mape, model.clone()));
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy(n: usize, offset: f64) -> Dataset<f64> {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| 0.1 + 0.9 * ((i as f64 + offset) / n as f64));
        let y = x.mapv(|v| v / 2.0);
        Dataset::from_parts(x, y).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let init = NetworkModel::<f64>::initialize(1, &[4], 1, 5).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (m, h) = train(init.clone(), &toy(20, 0.0), &toy(10, 0.5), &cfg).unwrap();
        assert!(h.epochs.is_empty());
        assert_eq!(m.layers(), init.layers());
    }

    #[test]
    fn deterministic_and_improving() {
        let cfg = TrainConfig {
            lr0: 1e-2,
            max_epochs: 15,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let init = NetworkModel::<f64>::initialize(1, &[8, 8], 1, 11).unwrap();
            train(init, &toy(100, 0.0), &toy(30, 0.5), &cfg).unwrap()
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let first = ha.epochs[0].test_mape;
        assert!(ha.best_test_mape().unwrap() <= first);
        assert!(ha.epochs.windows(2).all(|w| w[1].lr < w[0].lr));
    }

    #[test]
    fn rejects_mismatched_dims() {
        let init = NetworkModel::<f64>::initialize(2, &[4], 1, 5).unwrap();
        assert!(train(init, &toy(20, 0.0), &toy(10, 0.5), &TrainConfig::default()).is_err());
    }
}
