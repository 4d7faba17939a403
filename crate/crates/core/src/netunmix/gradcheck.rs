use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds;

use super::arch::NetworkParams;
use super::loss::{batch_loss, masked_loss, LossKind};
use super::train::Sample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Parameters to compare.
    pub samples: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            samples: 200,
            loss: LossKind::Mse,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCheck {
    pub block: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checks: Vec<ParamCheck>,
    /// Candidates dropped because a ±eps step flipped a ReLU or max-pool.
    pub skipped_kinks: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences against backpropagation through the whole network
/// and loss, for a random subset of parameters. The loss's pixel selection
/// is frozen at the unperturbed point.
pub fn grad_check(
    params: &NetworkParams,
    sample: &Sample,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(cfg.eps > 0.0) || cfg.samples == 0 {
        return Err(Error::InvalidConfig(
            "grad check needs eps > 0 and samples >= 1".into(),
        ));
    }
    let labels = std::slice::from_ref(&sample.label);
    let (pred, trace) = params.forward(&sample.input)?;
    let base = batch_loss(cfg.loss, std::slice::from_ref(&pred), labels)?;
    let grads = params.backward(&trace, &base.grads[0])?;
    let decisions = trace.decisions();

    let offsets: Vec<usize> = params
        .blocks
        .iter()
        .scan(0, |acc, b| {
            let start = *acc;
            *acc += b.values.len();
            Some(start)
        })
        .collect();
    let total = params.param_count();
    let budget = (cfg.samples * 3).min(total);
    let mut rng = seeds::rng(cfg.seed);
    let picks: Vec<usize> = sample_indices(&mut rng, total, budget).into_vec();

    let probe = |flat: usize| -> Result<Option<ParamCheck>> {
        let block = offsets.partition_point(|&o| o <= flat) - 1;
        let index = flat - offsets[block];
        let eval = |delta: f64| -> Result<(f64, bool)> {
            let mut p = params.clone();
            p.blocks[block].values[index] += delta;
            let (out, t) = p.forward(&sample.input)?;
            let same = t.decisions() == decisions;
            Ok((
                masked_loss(std::slice::from_ref(&out), labels, &base.mask)?.value,
                same,
            ))
        };
        let (up, same_up) = eval(cfg.eps)?;
        let (down, same_down) = eval(-cfg.eps)?;
        if !(same_up && same_down) {
            return Ok(None);
        }
        let numeric = (up - down) / (2.0 * cfg.eps);
        let analytic = grads[block][index];
        Ok(Some(ParamCheck {
            block,
            index,
            analytic,
            numeric,
            rel_error: rel_error(analytic, numeric),
        }))
    };
    let results = picks
        .par_iter()
        .map(|&f| probe(f))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::with_capacity(cfg.samples);
    let mut skipped_kinks = 0;
    for r in results {
        if checks.len() == cfg.samples {
            break;
        }
        match r {
            Some(c) => checks.push(c),
            None => skipped_kinks += 1,
        }
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        checks,
        skipped_kinks,
    })
}
