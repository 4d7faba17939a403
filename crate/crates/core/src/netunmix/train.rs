use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds;

use super::arch::{Gradients, NetworkParams};
use super::loss::{batch_loss, LossKind};
use super::tensor::Tensor;

/// Network input and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub loss: LossKind,
    pub seed: u64,
    /// Accumulate per-sample gradients serially in sample order.
    pub deterministic: bool,
    /// Keep a copy of the parameters every this many epochs (0 = never).
    pub checkpoint_every: usize,
    /// Fixed output-shaped factor applied to every prediction before the
    /// loss, e.g. the 0/1 aperture code.
    pub output_mask: Option<Tensor>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 8,
            epochs: 50,
            optimizer: Optimizer::adam(),
            loss: LossKind::Mse,
            seed: 0,
            deterministic: true,
            checkpoint_every: 0,
            output_mask: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be finite and >= 0",
                self.lr
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be >= 1".into(),
            ));
        }
        if self.output_mask.as_ref().is_some_and(|m| m.channels() != 1) {
            return Err(Error::InvalidConfig(
                "output mask must have one channel".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Training-set loss before the first update.
    pub initial_loss: f64,
    pub curve: Vec<EpochLoss>,
    pub checkpoints: Vec<(usize, NetworkParams)>,
}

fn masked(mut t: Tensor, mask: Option<&Tensor>) -> Tensor {
    if let Some(m) = mask {
        t.mul_assign(m);
    }
    t
}

/// Loss of `params` over a whole dataset, evaluated as one batch.
pub fn evaluate(
    params: &NetworkParams,
    data: &[Sample],
    loss: LossKind,
    mask: Option<&Tensor>,
) -> Result<f64> {
    let preds = data
        .par_iter()
        .map(|s| params.predict(&s.input).map(|p| masked(p, mask)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Tensor> = data.iter().map(|s| s.label.clone()).collect();
    Ok(batch_loss(loss, &preds, &labels)?.value)
}

/// Loss and accumulated parameter gradients for one minibatch.
pub fn batch_gradients(
    params: &NetworkParams,
    batch: &[&Sample],
    loss: LossKind,
    deterministic: bool,
    mask: Option<&Tensor>,
) -> Result<(f64, Gradients)> {
    let forwards = batch
        .par_iter()
        .map(|s| params.forward(&s.input))
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<Tensor> = forwards
        .iter()
        .map(|(p, _)| masked(p.clone(), mask))
        .collect();
    let labels: Vec<Tensor> = batch.iter().map(|s| s.label.clone()).collect();
    let bl = batch_loss(loss, &preds, &labels)?;
    let per_sample = forwards
        .par_iter()
        .zip(bl.grads.par_iter())
        .map(|((_, trace), dy)| params.backward(trace, &masked(dy.clone(), mask)));
    let add = |mut a: Gradients, b: Gradients| {
        for (x, y) in a.iter_mut().zip(b) {
            for (u, v) in x.iter_mut().zip(y) {
                *u += v;
            }
        }
        a
    };
    let grads = if deterministic {
        per_sample
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(params.zero_gradients(), add)
    } else {
        per_sample.try_reduce(|| params.zero_gradients(), |a, b| Ok(add(a, b)))?
    };
    Ok((bl.value, grads))
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

fn apply_update(
    params: &mut NetworkParams,
    grads: &Gradients,
    cfg: &TrainConfig,
    state: &mut AdamState,
) {
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (b, g) in params.blocks.iter_mut().zip(grads) {
                for (p, gv) in b.values.iter_mut().zip(g) {
                    *p -= cfg.lr * gv;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let c1 = 1.0 - beta1.powi(state.t);
            let c2 = 1.0 - beta2.powi(state.t);
            for (bi, (b, g)) in params.blocks.iter_mut().zip(grads).enumerate() {
                let (m, v) = (&mut state.m[bi], &mut state.v[bi]);
                for i in 0..g.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    b.values[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Minibatch training from `init`. Each epoch visits the training set in an
/// order drawn from `(seed, epoch)`.
pub fn train(
    init: NetworkParams,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidValue("training set is empty".into()));
    }
    let mut params = init;
    let mask = cfg.output_mask.as_ref();
    if let Some(m) = mask {
        let (_, h, w) = params.arch.output_dims();
        if m.dims() != (1, h, w) {
            return Err(crate::error::dims_err("output mask", (1, h, w), m.dims()));
        }
    }
    let initial_loss = evaluate(&params, train_set, cfg.loss, mask)?;
    let mut state = AdamState {
        m: params.zero_gradients(),
        v: params.zero_gradients(),
        t: 0,
    };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut checkpoints = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seeds::rng(seeds::derive(cfg.seed, epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) =
                batch_gradients(&params, &batch, cfg.loss, cfg.deterministic, mask)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            total += loss * chunk.len() as f64;
            apply_update(&mut params, &grads, cfg, &mut state);
        }
        if params
            .blocks
            .iter()
            .flat_map(|b| &b.values)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Divergence { epoch });
        }
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&params, val_set, cfg.loss, mask)?)
        };
        curve.push(EpochLoss {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
        });
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            checkpoints.push((epoch, params.clone()));
        }
    }
    Ok(TrainOutcome {
        params,
        initial_loss,
        curve,
        checkpoints,
    })
}

/// `epoch,train_loss,val_loss` rows; the validation column is empty when
/// no validation set was given.
pub fn curve_csv(curve: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in curve {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, val));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netunmix::arch::{build_network, ArchConfig};
    use rand::Rng;

    fn tiny_set(count: usize, seed: u64) -> (ArchConfig, Vec<Sample>) {
        let arch = ArchConfig::desk(4, 8);
        let (c, h, w) = arch.input_dims();
        let mut rng = seeds::rng(seed);
        let data = (0..count)
            .map(|_| Sample {
                input: Tensor::new(
                    c,
                    h,
                    w,
                    (0..c * h * w).map(|_| rng.random::<f64>()).collect(),
                )
                .unwrap(),
                label: Tensor::new(1, h, h, (0..h * h).map(|_| rng.random::<f64>()).collect())
                    .unwrap(),
            })
            .collect();
        (arch, data)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (arch, data) = tiny_set(5, 1);
        let net = build_network(&arch, 2).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            batch_size: 2,
            ..Default::default()
        };
        let out = train(net.clone(), &data, &[], &cfg).unwrap();
        assert_eq!(out.params, net);
        for e in &out.curve {
            assert!((e.train_loss - out.initial_loss).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_runs_are_bit_identical() {
        let (arch, data) = tiny_set(6, 3);
        let net = build_network(&arch, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            checkpoint_every: 1,
            ..Default::default()
        };
        let a = train(net.clone(), &data[..4], &data[4..], &cfg).unwrap();
        let b = train(net, &data[..4], &data[4..], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checkpoints.len(), 3);
        assert!(curve_csv(&a.curve).starts_with("epoch,train_loss,val_loss\n1,"));
    }

    #[test]
    fn huge_learning_rate_diverges_with_epoch() {
        let (arch, data) = tiny_set(2, 5);
        let net = build_network(&arch, 6).unwrap();
        let cfg = TrainConfig {
            lr: 1e200,
            optimizer: Optimizer::Sgd,
            epochs: 5,
            ..Default::default()
        };
        assert!(matches!(
            train(net, &data, &[], &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn masked_outputs_get_no_gradient() {
        let (arch, data) = tiny_set(2, 7);
        let net = build_network(&arch, 8).unwrap();
        let zero = Tensor::zeros(1, 8, 8);
        let batch: Vec<&Sample> = data.iter().collect();
        let (_, g) = batch_gradients(&net, &batch, LossKind::Mse, true, Some(&zero)).unwrap();
        assert!(g.iter().flatten().all(|&v| v == 0.0));
        let ones = zero.map(|_| 1.0);
        assert_eq!(
            batch_gradients(&net, &batch, LossKind::Mse, true, Some(&ones)).unwrap(),
            batch_gradients(&net, &batch, LossKind::Mse, true, None).unwrap()
        );
        let bad = TrainConfig {
            output_mask: Some(Tensor::zeros(1, 4, 4)),
            ..Default::default()
        };
        assert!(train(net, &data, &[], &bad).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let (arch, data) = tiny_set(1, 5);
        let net = build_network(&arch, 6).unwrap();
        assert!(train(
            net.clone(),
            &data,
            &[],
            &TrainConfig {
                epochs: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(train(net, &[], &[], &TrainConfig::default()).is_err());
    }
}
