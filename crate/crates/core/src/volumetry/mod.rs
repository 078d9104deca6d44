//! Preprocessing chain and binary-mask algebra.
//!
//! Converts a head CT into an atlas-aligned, isotropic, binary skull mask:
//! resample to isotropic spacing, threshold at a Hounsfield cutoff, then
//! rigidly align to an atlas. Also provides the set operations every other
//! module builds on (subtraction, union, intersection, largest connected
//! component).

mod align;
mod components;
mod resample;

pub use align::{rigid_align, AlignmentMode, ExternalTool};
pub use components::{largest_component, ComponentExtraction, Connectivity};
pub use resample::{resample_iso, resample_mask_iso};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SkullMask, VoxelGrid};

/// Configuration for the CT → skull-mask pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocConfig {
    /// Hounsfield cutoff; a voxel is bone iff its value is strictly greater.
    pub hu_threshold: f32,
    /// Isotropic resampling target in mm.
    pub target_spacing_mm: f64,
    /// How masks are brought into the atlas frame.
    pub alignment: AlignmentMode,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            hu_threshold: 90.0,
            target_spacing_mm: 2.0,
            alignment: AlignmentMode::Identity,
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.hu_threshold.is_finite() {
            return Err(Error::InvalidParameter(
                "hu_threshold must be finite".into(),
            ));
        }
        if !(self.target_spacing_mm > 0.0) || !self.target_spacing_mm.is_finite() {
            return Err(Error::InvalidParameter(
                "target_spacing_mm must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Binarize a CT volume: voxel = 1 iff HU strictly exceeds the threshold.
pub fn threshold_hu(ct: &VoxelGrid, cfg: &PreprocConfig) -> Result<SkullMask> {
    cfg.validate()?;
    ct.ensure_finite()?;
    let data = ct
        .values()
        .iter()
        .map(|&v| (v > cfg.hu_threshold) as u8)
        .collect();
    SkullMask::from_raw(ct.geom().clone(), data)
}

/// Voxelwise `a AND NOT b`.
pub fn binary_subtract(a: &SkullMask, b: &SkullMask) -> Result<SkullMask> {
    a.check_same_lattice(b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&av, &bv)| av & !bv & 1)
        .collect();
    SkullMask::from_raw(a.geom().clone(), data)
}

/// Voxelwise `a OR b`.
pub fn binary_union(a: &SkullMask, b: &SkullMask) -> Result<SkullMask> {
    a.check_same_lattice(b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&av, &bv)| av | bv)
        .collect();
    SkullMask::from_raw(a.geom().clone(), data)
}

/// Voxelwise `a AND b`.
pub fn binary_intersection(a: &SkullMask, b: &SkullMask) -> Result<SkullMask> {
    a.check_same_lattice(b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&av, &bv)| av & bv)
        .collect();
    SkullMask::from_raw(a.geom().clone(), data)
}

/// Full preprocessing chain: resample the HU volume to isotropic spacing,
/// threshold, then align to the atlas (when one is given).
///
/// Thresholding runs after resampling, so interpolation happens on HU values
/// rather than on the binary mask.
pub fn preprocess_ct(
    ct: &VoxelGrid,
    atlas: Option<&SkullMask>,
    cfg: &PreprocConfig,
) -> Result<SkullMask> {
    cfg.validate()?;
    let iso = resample_iso(ct, cfg.target_spacing_mm)?;
    let mask = threshold_hu(&iso, cfg)?;
    match atlas {
        Some(atlas) => rigid_align(&mask, atlas, cfg),
        None => Ok(mask),
    }
}
