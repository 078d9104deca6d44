//! Overlap and surface-distance measures between binary masks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SkullMask;

/// Dice coefficient `2|A∩B| / (|A|+|B|)`; defined as 1.0 when both masks are
/// empty.
pub fn dice(a: &SkullMask, b: &SkullMask) -> Result<f64> {
    a.check_same_lattice(b)?;
    let mut inter = 0usize;
    let mut ca = 0usize;
    let mut cb = 0usize;
    for (&av, &bv) in a.data().iter().zip(b.data()) {
        inter += (av & bv) as usize;
        ca += av as usize;
        cb += bv as usize;
    }
    if ca + cb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (ca + cb) as f64)
}

/// Symmetric Hausdorff distance between mask surfaces, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HausdorffResult {
    /// Maximum of the directed nearest-surface distances.
    pub hd_mm: f64,
    /// 95th percentile (nearest-rank) of the pooled directed distances.
    pub hd95_mm: f64,
}

/// Surface voxels are foreground voxels with a background 6-neighbor;
/// distances are Euclidean between voxel centers in physical mm.
pub fn hausdorff_mm(a: &SkullMask, b: &SkullMask) -> Result<HausdorffResult> {
    a.check_same_lattice(b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedDistance);
    }
    let spacing = a.geom().spacing_mm;
    let to_mm = |idx: &[usize; 3]| {
        [
            idx[0] as f64 * spacing[0],
            idx[1] as f64 * spacing[1],
            idx[2] as f64 * spacing[2],
        ]
    };
    let surf_a: Vec<[f64; 3]> = a.surface_voxels().iter().map(to_mm).collect();
    let surf_b: Vec<[f64; 3]> = b.surface_voxels().iter().map(to_mm).collect();

    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| -> Vec<f64> {
        from.par_iter()
            .map(|p| {
                let min_d2 = to
                    .iter()
                    .map(|q| {
                        let dz = p[0] - q[0];
                        let dy = p[1] - q[1];
                        let dx = p[2] - q[2];
                        dz * dz + dy * dy + dx * dx
                    })
                    .fold(f64::INFINITY, f64::min);
                min_d2.sqrt()
            })
            .collect()
    };

    let mut pooled = directed(&surf_a, &surf_b);
    pooled.extend(directed(&surf_b, &surf_a));
    let hd_mm = pooled.iter().copied().fold(0.0, f64::max);
    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let hd95_mm = sorted[rank - 1];
    Ok(HausdorffResult { hd_mm, hd95_mm })
}
