//! Bone-flap estimators.
//!
//! Two inference strategies over a defected skull mask:
//! * direct estimation (DE) — the network predicts the flap voxels;
//! * reconstruct-and-subtract (RS) — a model (network or PCA shape space)
//!   predicts the complete skull, and the flap is the binary difference
//!   `reconstruction AND NOT defect`.
//!
//! The manual ABC volume formula is included as the clinical baseline for
//! volume estimation.

pub mod abc;
pub mod pca;

#[cfg(feature = "torch")]
mod net_paths;
#[cfg(feature = "torch")]
pub use net_paths::{
    estimate_flap_de, estimate_flap_rs_net, reconstruct_full_rs_net, TrainedNet,
};

pub use abc::{abc_from_flap, abc_volume, AbcMeasurements};
pub use pca::{pca_fit, PcaModel};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::SkullMask;
use crate::volumetry::{binary_subtract, largest_component, Connectivity};

/// Reconstruction method identifiers, as reported in metrics tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    DeUnet,
    RsUnet,
    RsAe,
    RsPca,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::DeUnet => "DE-UNET",
            Method::RsUnet => "RS-UNET",
            Method::RsAe => "RS-AE",
            Method::RsPca => "RS-PCA",
        };
        f.write_str(s)
    }
}

impl Method {
    pub fn is_reconstruct_subtract(self) -> bool {
        !matches!(self, Method::DeUnet)
    }
}

/// Post-processing applied to an estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostprocFlags {
    pub largest_component: bool,
}

impl std::fmt::Display for PostprocFlags {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.largest_component {
            f.write_str("largest-component")
        } else {
            f.write_str("none")
        }
    }
}

/// A predicted flap with its derived volume.
#[derive(Debug, Clone)]
pub struct FlapEstimate {
    pub mask: SkullMask,
    pub volume_cm3: f64,
    pub method: Method,
    pub postproc: PostprocFlags,
}

impl FlapEstimate {
    /// Volume is derived from the mask, so the two can never disagree.
    pub fn new(mask: SkullMask, method: Method, postproc: PostprocFlags) -> Self {
        let volume_cm3 = mask.volume_cm3();
        Self {
            mask,
            volume_cm3,
            method,
            postproc,
        }
    }
}

/// RS subtraction step shared by the network and PCA paths: binary set
/// difference of the reconstruction and the defect, optionally reduced to
/// its largest connected component.
pub fn subtract_reconstruction(
    reconstruction: &SkullMask,
    defect: &SkullMask,
    method: Method,
    use_largest_component: bool,
) -> Result<FlapEstimate> {
    let mut flap = binary_subtract(reconstruction, defect)?;
    if use_largest_component {
        flap = largest_component(&flap, Connectivity::TwentySix).mask;
    }
    Ok(FlapEstimate::new(
        flap,
        method,
        PostprocFlags {
            largest_component: use_largest_component,
        },
    ))
}

/// RS path over a PCA shape model.
pub fn estimate_flap_rs_pca(
    model: &PcaModel,
    defect: &SkullMask,
    use_largest_component: bool,
) -> Result<FlapEstimate> {
    let reconstruction = model.reconstruct_mask(defect)?;
    subtract_reconstruction(&reconstruction, defect, Method::RsPca, use_largest_component)
}
