use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Mse,
    /// Mean over the pixels whose squared error is at least the smallest of
    /// the top half.
    HardMining,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::HardMining => "hard-mining",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "hard-mining" => Ok(LossKind::HardMining),
            _ => Err(Error::InvalidConfig(format!(
                "unknown loss {s:?} (mse | hard-mining)"
            ))),
        }
    }
}

/// Loss value, its gradient with respect to every prediction, and the pixel
/// mask that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub grads: Vec<Tensor>,
    pub mask: Vec<bool>,
}

fn check_pairs(preds: &[Tensor], labels: &[Tensor]) -> Result<usize> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::SizeMismatch {
            expected: labels.len().max(1),
            found: preds.len(),
        });
    }
    for (p, l) in preds.iter().zip(labels) {
        l.check_dims("prediction vs label", p.dims())?;
    }
    Ok(preds.iter().map(Tensor::len).sum())
}

fn squared_errors(preds: &[Tensor], labels: &[Tensor]) -> Vec<f64> {
    preds
        .iter()
        .zip(labels)
        .flat_map(|(p, l)| {
            p.data()
                .iter()
                .zip(l.data())
                .map(|(a, b)| (a - b) * (a - b))
        })
        .collect()
}

/// Threshold `t`: the smallest of the `⌈N/2⌉` largest values.
pub fn hard_threshold(d: &[f64]) -> f64 {
    let mut sorted = d.to_vec();
    let keep = d.len().div_ceil(2);
    let (_, t, _) = sorted.select_nth_unstable_by(keep - 1, |a, b| b.total_cmp(a));
    *t
}

/// Mean squared error over the masked pixels of the batch.
pub fn masked_loss(preds: &[Tensor], labels: &[Tensor], mask: &[bool]) -> Result<BatchLoss> {
    let total = check_pairs(preds, labels)?;
    if mask.len() != total {
        return Err(Error::SizeMismatch {
            expected: total,
            found: mask.len(),
        });
    }
    let count = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let mut value = 0.0;
    let mut offset = 0;
    let grads = preds
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let data = p
                .data()
                .iter()
                .zip(l.data())
                .zip(&mask[offset..offset + p.len()])
                .map(|((a, b), &keep)| {
                    if keep {
                        value += (a - b) * (a - b);
                        2.0 * (a - b) / count
                    } else {
                        0.0
                    }
                })
                .collect();
            offset += p.len();
            Tensor::from_raw(p.channels(), p.height(), p.width(), data)
        })
        .collect();
    Ok(BatchLoss {
        value: value / count,
        grads,
        mask: mask.to_vec(),
    })
}

pub fn batch_loss(kind: LossKind, preds: &[Tensor], labels: &[Tensor]) -> Result<BatchLoss> {
    let total = check_pairs(preds, labels)?;
    let mask = match kind {
        LossKind::Mse => vec![true; total],
        LossKind::HardMining => {
            let d = squared_errors(preds, labels);
            let t = hard_threshold(&d);
            d.iter().map(|&v| v >= t).collect()
        }
    };
    masked_loss(preds, labels, &mask)
}

/// Mean squared error and its gradient `2(pred − label)/N`.
pub fn mse_loss(pred: &Tensor, label: &Tensor) -> Result<(f64, Tensor)> {
    let mut b = batch_loss(
        LossKind::Mse,
        std::slice::from_ref(pred),
        std::slice::from_ref(label),
    )?;
    Ok((b.value, b.grads.pop().expect("one prediction")))
}

pub fn hard_mining_loss(pred: &Tensor, label: &Tensor) -> Result<(f64, Tensor)> {
    let mut b = batch_loss(
        LossKind::HardMining,
        std::slice::from_ref(pred),
        std::slice::from_ref(label),
    )?;
    Ok((b.value, b.grads.pop().expect("one prediction")))
}
