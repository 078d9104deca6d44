//! Seeded generation of (input, target) training pairs from complete skulls.

use rand::Rng;

use super::{TrainConfig, TrainStrategy};
use crate::craniectomy::random_craniectomy;
use crate::error::Result;
use crate::grid::SkullMask;
use crate::rng::{self, derive_seed};

/// Flip each voxel independently with probability `p`. Deterministic per
/// seed; `p = 0` is the identity and `p = 1` the logical complement.
pub fn salt_pepper(mask: &SkullMask, p: f64, seed: u64) -> Result<SkullMask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(crate::error::Error::InvalidParameter(format!(
            "flip probability must be in [0, 1], got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(mask.clone());
    }
    let mut rng = rng::stream(seed);
    let data = mask
        .data()
        .iter()
        .map(|&v| if rng.gen_bool(p) { 1 - v } else { v })
        .collect();
    SkullMask::from_raw(mask.geom().clone(), data)
}

/// One self-supervised training pair.
///
/// With probability `cfg.vc_probability` a virtual craniectomy is applied;
/// the (possibly defected) skull gets salt-and-pepper noise and becomes the
/// input. The target depends on the strategy: DE → the flap (empty if no cut
/// happened), RS → the original complete skull, noise-free either way.
pub fn make_training_pair(
    skull: &SkullMask,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(SkullMask, SkullMask)> {
    cfg.validate()?;
    let mut rng = rng::stream(derive_seed(seed, "pair", &[]));
    let cut = rng.gen_bool(cfg.vc_probability);
    let vc_seed = derive_seed(seed, "pair-vc", &[]);
    let noise_seed = derive_seed(seed, "pair-noise", &[]);

    let (pre_noise, flap) = if cut {
        let vc = random_craniectomy(skull, &cfg.vc, vc_seed)?;
        (vc.defect, vc.flap)
    } else {
        (skull.clone(), SkullMask::zeros(skull.geom().clone()))
    };
    let input = salt_pepper(&pre_noise, cfg.noise_prob, noise_seed)?;
    let target = match cfg.strategy {
        TrainStrategy::DirectEstimation => flap,
        TrainStrategy::ReconstructSubtract => skull.clone(),
    };
    Ok((input, target))
}
