use super::config::TrainConfig;
use super::{Model, ModelError, Result, SceneFeatures};
use crate::nn::{Adam, ParamStore, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Mean loss terms over one epoch, as seen before each batch update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub rmse: f64,
    pub nll: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<EpochLog>,
    pub steps: u64,
    /// Reason training stopped early; parameters are the last finite ones.
    pub aborted: Option<String>,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Trains `model` in place with Adam and cosine warm restarts.
pub fn train(model: &mut Model, data: &[SceneFeatures], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(ModelError::InvalidConfig(v));
    }
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if data.iter().any(|f| f.future.is_none()) {
        return Err(ModelError::MissingFuture);
    }
    let mut adam = Adam::new(&model.store, cfg.adam);
    let batches = data.len().div_ceil(cfg.batch_size);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let (mut total, mut rmse, mut nll) = (0.0, 0.0, 0.0);
        let mut lr = cfg.schedule.lr(epoch as f64);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<(super::LossReport, Vec<Tensor>)>> = {
                let m = &*model;
                chunk.par_iter().map(|&i| m.gradients(&data[i])).collect()
            };
            let snapshot: ParamStore = model.store.clone();
            model.store.zero_grads();
            for r in results {
                let (report, grads) = match r {
                    Ok(x) => x,
                    Err(ModelError::Nn(e)) => return Ok(abort(model, snapshot, curve, adam.steps(), e.to_string())),
                    Err(e) => return Err(e),
                };
                if !report.total.is_finite() {
                    return Ok(abort(model, snapshot, curve, adam.steps(), format!("non-finite loss in epoch {epoch}")));
                }
                total += report.total;
                rmse += report.rmse_term;
                nll += report.nll_term;
                model.store.accumulate(&grads)?;
            }
            model.store.scale_grads(1.0 / chunk.len() as f64);
            if let Some(clip) = cfg.grad_clip {
                let norm = model.store.grad_norm();
                if norm > clip {
                    model.store.scale_grads(clip / norm);
                }
            }
            lr = cfg.schedule.lr(epoch as f64 + b as f64 / batches as f64);
            adam.step(&mut model.store, lr);
        }
        let n = data.len() as f64;
        let log = EpochLog {
            epoch,
            total: total / n,
            rmse: rmse / n,
            nll: nll / n,
            lr,
        };
        log::info!(
            "epoch {epoch}: total {:.6} rmse {:.6} nll {:.6} lr {:.2e}",
            log.total,
            log.rmse,
            log.nll,
            lr
        );
        curve.push(log);
    }
    Ok(TrainOutcome {
        curve,
        steps: adam.steps(),
        aborted: None,
    })
}

fn abort(model: &mut Model, snapshot: ParamStore, curve: Vec<EpochLog>, steps: u64, reason: String) -> TrainOutcome {
    log::warn!("training aborted: {reason}");
    model.store = snapshot;
    TrainOutcome {
        curve,
        steps,
        aborted: Some(reason),
    }
}

/// Writes the loss curve as CSV (epoch,total,rmse,nll,lr).
pub fn write_curve_csv(curve: &[EpochLog], out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in curve {
        w.serialize(row)?;
    }
    w.flush()
}
