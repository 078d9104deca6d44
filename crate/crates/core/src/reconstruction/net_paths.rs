//! Network-backed flap estimation: direct estimation (DE) and the
//! reconstruct-and-subtract (RS) network path.

use tch::Tensor;

use super::{subtract_reconstruction, FlapEstimate, Method, PostprocFlags};
use crate::error::{Error, Result};
use crate::grid::SkullMask;
use crate::nets::{Arch, Checkpoint, SkullNet};
use crate::training::TrainStrategy;

/// A checkpoint rebuilt into a runnable model, with the metadata needed to
/// route it to the right inference path.
pub struct TrainedNet {
    net: SkullNet,
    strategy: TrainStrategy,
    arch: Arch,
}

impl TrainedNet {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let strategy = ckpt.strategy.ok_or_else(|| Error::MethodMismatch {
            expected: "a checkpoint with a recorded training strategy".into(),
            got: "no strategy metadata".into(),
        })?;
        Ok(Self {
            net: ckpt.build_net()?,
            strategy,
            arch: ckpt.net.arch,
        })
    }

    pub fn strategy(&self) -> TrainStrategy {
        self.strategy
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    /// Canonical method name for this (strategy, architecture) pair.
    pub fn method(&self) -> Result<Method> {
        match (self.strategy, self.arch) {
            (TrainStrategy::DirectEstimation, Arch::UNet3d) => Ok(Method::DeUnet),
            (TrainStrategy::ReconstructSubtract, Arch::UNet3d) => Ok(Method::RsUnet),
            (TrainStrategy::ReconstructSubtract, Arch::Ae3d) => Ok(Method::RsAe),
            (TrainStrategy::DirectEstimation, Arch::Ae3d) => Err(Error::MethodMismatch {
                expected: "DE-UNET, RS-UNET or RS-AE".into(),
                got: "direct estimation with an autoencoder".into(),
            }),
        }
    }

    /// Argmax-class foreground of a single-volume forward pass.
    pub fn infer_mask(&self, defect: &SkullMask) -> Result<SkullMask> {
        let [d, h, w] = defect.geom().dims.map(|v| v as i64);
        let values: Vec<f32> = defect.data().iter().map(|&v| v as f32).collect();
        let x = Tensor::from_slice(&values).reshape([1, 1, d, h, w]);
        let fg = self.net.predict_foreground(&x)?;
        let data: Vec<u8> = Vec::<u8>::try_from(fg.flatten(0, -1))?;
        SkullMask::from_raw(defect.geom().clone(), data)
    }
}

/// Direct estimation: the network output *is* the flap. No post-processing
/// by default. Requires a DE checkpoint.
pub fn estimate_flap_de(model: &TrainedNet, defect: &SkullMask) -> Result<FlapEstimate> {
    if model.strategy != TrainStrategy::DirectEstimation {
        return Err(Error::MethodMismatch {
            expected: "a DE (direct estimation) checkpoint".into(),
            got: format!("{} checkpoint", model.strategy),
        });
    }
    let method = model.method()?;
    let mask = model.infer_mask(defect)?;
    Ok(FlapEstimate::new(mask, method, PostprocFlags::default()))
}

/// RS full-skull reconstruction: argmax-class binarization of the forward
/// pass. Requires an RS checkpoint.
pub fn reconstruct_full_rs_net(model: &TrainedNet, defect: &SkullMask) -> Result<SkullMask> {
    if model.strategy != TrainStrategy::ReconstructSubtract {
        return Err(Error::MethodMismatch {
            expected: "an RS (reconstruct-and-subtract) checkpoint".into(),
            got: format!("{} checkpoint", model.strategy),
        });
    }
    model.infer_mask(defect)
}

/// RS flap estimate: reconstruct the full skull, subtract the defect,
/// optionally keep only the largest connected component.
pub fn estimate_flap_rs_net(
    model: &TrainedNet,
    defect: &SkullMask,
    use_largest_component: bool,
) -> Result<FlapEstimate> {
    let method = model.method()?;
    let reconstruction = reconstruct_full_rs_net(model, defect)?;
    subtract_reconstruction(&reconstruction, defect, method, use_largest_component)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeom;
    use crate::nets::NetConfig;

    fn untrained(strategy: TrainStrategy, arch: Arch) -> TrainedNet {
        let cfg = NetConfig {
            arch,
            ..Default::default()
        };
        let net = SkullNet::new(&cfg, 1).unwrap();
        let ckpt = Checkpoint::from_net(&net, Some(strategy), 0, 1.0, 1).unwrap();
        TrainedNet::from_checkpoint(&ckpt).unwrap()
    }

    fn defect_mask() -> SkullMask {
        let g = GridGeom::isotropic([32, 32, 32], 2.0).unwrap();
        SkullMask::from_fn(g, |[z, y, x]| {
            let d = |v: usize| v as f64 - 15.5;
            let r = (d(z).powi(2) + d(y).powi(2) + d(x).powi(2)).sqrt();
            (9.0..=12.0).contains(&r) && z < 28
        })
    }

    #[test]
    fn de_rejects_rs_checkpoints() {
        let model = untrained(TrainStrategy::ReconstructSubtract, Arch::UNet3d);
        assert!(matches!(
            estimate_flap_de(&model, &defect_mask()),
            Err(Error::MethodMismatch { .. })
        ));
    }

    #[test]
    fn rs_rejects_de_checkpoints() {
        let model = untrained(TrainStrategy::DirectEstimation, Arch::UNet3d);
        assert!(matches!(
            reconstruct_full_rs_net(&model, &defect_mask()),
            Err(Error::MethodMismatch { .. })
        ));
    }

    #[test]
    fn method_names_follow_strategy_and_arch() {
        assert_eq!(
            untrained(TrainStrategy::DirectEstimation, Arch::UNet3d)
                .method()
                .unwrap(),
            Method::DeUnet
        );
        assert_eq!(
            untrained(TrainStrategy::ReconstructSubtract, Arch::UNet3d)
                .method()
                .unwrap(),
            Method::RsUnet
        );
        assert_eq!(
            untrained(TrainStrategy::ReconstructSubtract, Arch::Ae3d)
                .method()
                .unwrap(),
            Method::RsAe
        );
        assert!(untrained(TrainStrategy::DirectEstimation, Arch::Ae3d)
            .method()
            .is_err());
    }

    #[test]
    fn de_estimate_is_binary_on_the_input_grid() {
        let model = untrained(TrainStrategy::DirectEstimation, Arch::UNet3d);
        let defect = defect_mask();
        let est = estimate_flap_de(&model, &defect).unwrap();
        assert_eq!(est.mask.geom(), defect.geom());
        assert_eq!(est.method, Method::DeUnet);
        assert_eq!(est.volume_cm3, est.mask.volume_cm3());
    }

    #[test]
    fn indivisible_grids_propagate_the_shape_error() {
        let model = untrained(TrainStrategy::DirectEstimation, Arch::UNet3d);
        let g = GridGeom::isotropic([20, 32, 32], 2.0).unwrap();
        let defect = SkullMask::from_fn(g, |_| true);
        assert!(matches!(
            estimate_flap_de(&model, &defect),
            Err(Error::NetInputShape { axis: 0, .. })
        ));
    }

    #[test]
    fn rs_estimate_does_not_overlap_the_defect() {
        let model = untrained(TrainStrategy::ReconstructSubtract, Arch::Ae3d);
        let defect = defect_mask();
        let est = estimate_flap_rs_net(&model, &defect, true).unwrap();
        let overlap = crate::volumetry::binary_intersection(&est.mask, &defect).unwrap();
        assert!(overlap.is_empty());
    }
}
