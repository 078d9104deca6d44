//! Network checkpoints: config + weights (including batch-norm running
//! statistics) + training metadata, persisted through the versioned model
//! container. Save/load round-trips are bit-exact.

use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::{NetConfig, SkullNet};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::training::TrainStrategy;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    net: NetConfig,
    strategy: Option<TrainStrategy>,
    epoch: usize,
    val_loss: f64,
    seed: u64,
}

/// A trained (or in-training) model snapshot.
#[derive(Debug)]
pub struct Checkpoint {
    pub net: NetConfig,
    pub strategy: Option<TrainStrategy>,
    /// Epoch the weights were taken from.
    pub epoch: usize,
    /// Validation loss at that epoch.
    pub val_loss: f64,
    /// Training seed (for provenance).
    pub seed: u64,
    /// Sorted (name, shape, values) triples for every variable.
    tensors: Vec<(String, Vec<i64>, Vec<f32>)>,
}

impl Checkpoint {
    /// Snapshot the model's current weights.
    pub fn from_net(
        net: &SkullNet,
        strategy: Option<TrainStrategy>,
        epoch: usize,
        val_loss: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut tensors = Vec::new();
        for (name, tensor) in net.var_store().variables() {
            let shape = tensor.size();
            let flat: Vec<f32> = Vec::<f32>::try_from(tensor.flatten(0, -1).to_kind(tch::Kind::Float))?;
            tensors.push((name, shape, flat));
        }
        tensors.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self {
            net: net.config().clone(),
            strategy,
            epoch,
            val_loss,
            seed,
            tensors,
        })
    }

    /// Rebuild the model and load the stored weights into it.
    pub fn build_net(&self) -> Result<SkullNet> {
        let net = SkullNet::new(&self.net, 0)?;
        let vars = net.var_store().variables();
        if vars.len() != self.tensors.len() {
            return Err(Error::BadContainer(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                vars.len()
            )));
        }
        tch::no_grad(|| -> Result<()> {
            for (name, shape, values) in &self.tensors {
                let mut target = vars
                    .get(name)
                    .ok_or_else(|| Error::BadContainer(format!("unexpected tensor {name:?}")))?
                    .shallow_clone();
                if &target.size() != shape {
                    return Err(Error::BadContainer(format!(
                        "tensor {name:?} has shape {:?}, model expects {:?}",
                        shape,
                        target.size()
                    )));
                }
                let src = Tensor::from_slice(values).reshape(shape.as_slice());
                target.copy_(&src);
            }
            Ok(())
        })?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let meta = CheckpointMeta {
            net: self.net.clone(),
            strategy: self.strategy,
            epoch: self.epoch,
            val_loss: self.val_loss,
            seed: self.seed,
        };
        let mut c = Container::new("checkpoint", serde_json::to_value(&meta)?);
        for (name, shape, values) in &self.tensors {
            c.push_tensor(name.clone(), shape.clone(), values.clone());
        }
        c.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let c = Container::load(path)?;
        if c.kind != "checkpoint" {
            return Err(Error::BadContainer(format!(
                "expected a checkpoint container, got kind {:?}",
                c.kind
            )));
        }
        let meta: CheckpointMeta = serde_json::from_value(c.meta.clone())?;
        let tensors = c
            .tensors()
            .map(|(e, data)| (e.name.clone(), e.shape.clone(), data.to_vec()))
            .collect();
        Ok(Self {
            net: meta.net,
            strategy: meta.strategy,
            epoch: meta.epoch,
            val_loss: meta.val_loss,
            seed: meta.seed,
            tensors,
        })
    }

    pub fn tensors(&self) -> &[(String, Vec<i64>, Vec<f32>)] {
        &self.tensors
    }
}
