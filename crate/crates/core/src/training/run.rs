//! The training loop: seeded on-the-fly pair generation, mini-batch
//! optimization of the compound loss, validation tracking and early
//! stopping. Returns the best-validation checkpoint plus a per-epoch log.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tch::{nn::OptimizerConfig, Tensor};

use super::{compound_loss, make_training_pair, OptimizerKind, TrainConfig};
use crate::error::{Error, Result};
use crate::grid::SkullMask;
use crate::nets::{Checkpoint, NetConfig, SkullNet};
use crate::rng::{self, derive_seed};

/// One row of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochStats>,
    pub stopped_early: bool,
}

fn mask_to_input(mask: &SkullMask) -> Tensor {
    let [d, h, w] = mask.geom().dims.map(|v| v as i64);
    let values: Vec<f32> = mask.data().iter().map(|&v| v as f32).collect();
    Tensor::from_slice(&values).reshape([1, d, h, w])
}

fn batch_tensors(pairs: &[(SkullMask, SkullMask)]) -> (Tensor, Tensor) {
    let inputs: Vec<Tensor> = pairs
        .iter()
        .map(|(i, _)| mask_to_input(i).unsqueeze(0))
        .collect();
    let targets: Vec<Tensor> = pairs.iter().map(|(_, t)| mask_to_input(t)).collect();
    (Tensor::cat(&inputs, 0), Tensor::cat(&targets, 0))
}

/// Train a model on complete skulls.
///
/// The skull list is split by index into train/validation folds; validation
/// pairs are drawn once (seeded) and reused every epoch so early stopping
/// compares like with like. When the loss turns non-finite the run aborts
/// with [`Error::TrainingDiverged`], saving a diagnostic checkpoint to
/// `diverge_dump` if one was requested.
pub fn train(
    skulls: &[SkullMask],
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
    diverge_dump: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    net_cfg.validate()?;
    if skulls.len() < 2 {
        return Err(Error::InvalidParameter(
            "training needs at least two skulls (train/val split)".into(),
        ));
    }
    let geom = skulls[0].geom().clone();
    for s in skulls {
        if !s.geom().same_lattice(&geom) {
            return Err(Error::GridMismatch(
                "training skulls must share one grid".into(),
            ));
        }
    }

    // Split by skull id with a seeded shuffle.
    let mut order: Vec<usize> = (0..skulls.len()).collect();
    order.shuffle(&mut rng::stream(derive_seed(cfg.rng_seed, "split", &[])));
    let n_val = ((skulls.len() as f64 * cfg.validation_fraction).round() as usize)
        .clamp(1, skulls.len() - 1);
    let (val_ids, train_ids) = order.split_at(n_val);

    // Fixed validation pairs.
    let mut val_pairs = Vec::new();
    for (vi, &si) in val_ids.iter().enumerate() {
        for j in 0..cfg.val_draws_per_skull.max(1) {
            let seed = derive_seed(cfg.rng_seed, "val-pair", &[vi as u64, j as u64]);
            val_pairs.push(make_training_pair(&skulls[si], cfg, seed)?);
        }
    }

    let net = SkullNet::new(net_cfg, derive_seed(cfg.rng_seed, "init", &[]))?;
    let mut opt = match cfg.optimizer {
        OptimizerKind::Adam => tch::nn::Adam::default().build(net.var_store(), cfg.learning_rate),
        OptimizerKind::Sgd { momentum } => tch::nn::Sgd {
            momentum,
            ..Default::default()
        }
        .build(net.var_store(), cfg.learning_rate),
    }?;

    let validate = |net: &SkullNet| -> Result<f64> {
        let mut total = 0.0;
        for chunk in val_pairs.chunks(cfg.batch_size) {
            let (x, g) = batch_tensors(chunk);
            let loss = tch::no_grad(|| -> Result<Tensor> {
                let logits = net.forward(&x, false)?;
                compound_loss(&logits, &g, cfg.lambda_bce)
            })?;
            total += f64::try_from(loss)? * chunk.len() as f64;
        }
        Ok(total / val_pairs.len() as f64)
    };

    let mut log = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut epochs_since_improve = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        let mut epoch_order = train_ids.to_vec();
        epoch_order.shuffle(&mut rng::stream(derive_seed(
            cfg.rng_seed,
            "order",
            &[epoch as u64],
        )));

        let mut train_loss_sum = 0.0;
        let mut samples = 0usize;
        for chunk in epoch_order.chunks(cfg.batch_size) {
            let pairs: Vec<(SkullMask, SkullMask)> = chunk
                .iter()
                .map(|&si| {
                    // Per-sample seed from (run seed, epoch, skull index):
                    // independent of batching and worker scheduling.
                    let seed = derive_seed(cfg.rng_seed, "pair", &[epoch as u64, si as u64]);
                    make_training_pair(&skulls[si], cfg, seed)
                })
                .collect::<Result<_>>()?;
            let (x, g) = batch_tensors(&pairs);
            let logits = net.forward(&x, true)?;
            let finite = bool::try_from(logits.isfinite().all())?;
            let loss = if finite {
                compound_loss(&logits, &g, cfg.lambda_bce)?
            } else {
                Tensor::from(f64::NAN)
            };
            let loss_v = f64::try_from(&loss)?;
            if !loss_v.is_finite() {
                if let Some(path) = diverge_dump {
                    Checkpoint::from_net(&net, Some(cfg.strategy), epoch, f64::MAX, cfg.rng_seed)?
                        .save(path)?;
                }
                return Err(Error::TrainingDiverged { epoch });
            }
            opt.backward_step(&loss);
            train_loss_sum += loss_v * pairs.len() as f64;
            samples += pairs.len();
        }

        let val_loss = validate(&net)?;
        if !val_loss.is_finite() {
            if let Some(path) = diverge_dump {
                Checkpoint::from_net(&net, Some(cfg.strategy), epoch, f64::MAX, cfg.rng_seed)?
                    .save(path)?;
            }
            return Err(Error::TrainingDiverged { epoch });
        }
        log.push(EpochStats {
            epoch,
            train_loss: train_loss_sum / samples.max(1) as f64,
            val_loss,
            seconds: t0.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().map_or(true, |(b, _)| val_loss < *b);
        if improved {
            let ckpt =
                Checkpoint::from_net(&net, Some(cfg.strategy), epoch, val_loss, cfg.rng_seed)?;
            best = Some((val_loss, ckpt));
            epochs_since_improve = 0;
        } else {
            epochs_since_improve += 1;
            if epochs_since_improve >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, checkpoint) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint,
        log,
        stopped_early,
    })
}

/// Write the per-epoch log as CSV.
pub fn write_loss_log(path: impl AsRef<Path>, log: &[EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
