//! Virtual craniectomy: carve a spherical bone flap out of a complete skull
//! mask to self-generate (defect, flap) pairs for training and simulated
//! test cases.
//!
//! Flap centers are sampled from skull voxels above an inferior exclusion
//! plane (craniectomies do not happen at the skull base), by default only on
//! surface voxels. The sphere radius is drawn uniformly in voxel units, so
//! this module requires isotropic grids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SkullMask;
use crate::rng;
use crate::volumetry::{binary_intersection, binary_subtract, binary_union};

/// Fraction of the inferior (low-z) grid extent where flap centers are
/// forbidden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionZone {
    pub z_fraction: f64,
}

impl Default for ExclusionZone {
    fn default() -> Self {
        Self { z_fraction: 0.35 }
    }
}

impl ExclusionZone {
    pub fn new(z_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&z_fraction) {
            return Err(Error::InvalidParameter(format!(
                "exclusion z_fraction must be in [0, 1), got {z_fraction}"
            )));
        }
        Ok(Self { z_fraction })
    }

    /// A voxel is eligible iff `z >= z_fraction * depth`.
    #[inline]
    pub fn admits(&self, z: usize, depth: usize) -> bool {
        z as f64 >= self.z_fraction * depth as f64
    }
}

/// Sphere radius range in voxels. The defaults (5..53 voxels at 2 mm
/// spacing) produce flap volumes spanning roughly 0.7 to 350 cm³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusRange {
    pub min_vox: f64,
    pub max_vox: f64,
}

impl Default for RadiusRange {
    fn default() -> Self {
        Self {
            min_vox: 5.0,
            max_vox: 53.0,
        }
    }
}

impl RadiusRange {
    pub fn new(min_vox: f64, max_vox: f64) -> Result<Self> {
        if !(min_vox > 0.0) || !(max_vox >= min_vox) || !max_vox.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "radius range must satisfy 0 < min <= max, got [{min_vox}, {max_vox}]"
            )));
        }
        Ok(Self { min_vox, max_vox })
    }

    pub fn contains(&self, r: f64) -> bool {
        (self.min_vox..=self.max_vox).contains(&r)
    }
}

/// Where flap centers may be placed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterSampling {
    /// Skull voxels with at least one background 6-neighbor (the cut is
    /// applied at the surface).
    #[default]
    Surface,
    /// Any foreground voxel.
    AnyForeground,
}

/// One spherical cut: the simulation's ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CraniectomySpec {
    /// Sphere center, voxel indices `(z, y, x)`.
    pub center_vox: [usize; 3],
    /// Sphere radius in voxel units.
    pub radius_vox: f64,
}

/// A virtual craniectomy outcome: `defect ∪ flap = skull`,
/// `defect ∩ flap = ∅`, `flap ⊆ ball(spec)`.
#[derive(Debug, Clone)]
pub struct VcSample {
    pub defect: SkullMask,
    pub flap: SkullMask,
    pub spec: CraniectomySpec,
}

impl VcSample {
    /// Check the defining set identities (used by tests and debug paths).
    pub fn verify_against(&self, skull: &SkullMask) -> Result<()> {
        let union = binary_union(&self.defect, &self.flap)?;
        if &union != skull {
            return Err(Error::InvalidParameter(
                "defect ∪ flap != original skull".into(),
            ));
        }
        let overlap = binary_intersection(&self.defect, &self.flap)?;
        if !overlap.is_empty() {
            return Err(Error::InvalidParameter("defect ∩ flap != ∅".into()));
        }
        Ok(())
    }
}

fn eligible_centers(
    skull: &SkullMask,
    zone: &ExclusionZone,
    sampling: CenterSampling,
) -> Vec<[usize; 3]> {
    let depth = skull.geom().dims[0];
    let candidates = match sampling {
        CenterSampling::Surface => skull.surface_voxels(),
        CenterSampling::AnyForeground => skull.foreground_indices(),
    };
    candidates
        .into_iter()
        .filter(|&[z, _, _]| zone.admits(z, depth))
        .collect()
}

/// Uniformly sample a flap center among eligible skull voxels.
/// Deterministic for a given seed.
pub fn sample_flap_center(
    skull: &SkullMask,
    zone: &ExclusionZone,
    sampling: CenterSampling,
    seed: u64,
) -> Result<[usize; 3]> {
    let candidates = eligible_centers(skull, zone, sampling);
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let mut rng = rng::stream(seed);
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

/// Intersect the skull with a Euclidean ball (voxel-index distance) and
/// split it into (defect, flap).
pub fn apply_craniectomy(skull: &SkullMask, spec: &CraniectomySpec) -> Result<VcSample> {
    let geom = skull.geom();
    if !geom.is_isotropic(1e-9) {
        return Err(Error::AnisotropicGrid {
            spacing: geom.spacing_mm,
        });
    }
    if spec.center_vox.iter().zip(geom.dims).any(|(&c, d)| c >= d) {
        return Err(Error::InvalidParameter(format!(
            "flap center {:?} outside grid {:?}",
            spec.center_vox, geom.dims
        )));
    }
    if !(spec.radius_vox > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "flap radius must be positive, got {}",
            spec.radius_vox
        )));
    }

    let [cz, cy, cx] = spec.center_vox.map(|c| c as i64);
    let r = spec.radius_vox;
    let r2 = r * r;
    let [d, h, w] = geom.dims.map(|d| d as i64);
    let bounds = |c: i64, dim: i64| {
        let lo = ((c as f64 - r).floor() as i64).max(0);
        let hi = ((c as f64 + r).ceil() as i64).min(dim - 1);
        (lo, hi)
    };
    let (z0, z1) = bounds(cz, d);
    let (y0, y1) = bounds(cy, h);
    let (x0, x1) = bounds(cx, w);

    let mut flap = SkullMask::zeros(geom.clone());
    for z in z0..=z1 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dz = (z - cz) as f64;
                let dy = (y - cy) as f64;
                let dx = (x - cx) as f64;
                if dz * dz + dy * dy + dx * dx <= r2
                    && skull.get(z as usize, y as usize, x as usize) == 1
                {
                    flap.set(z as usize, y as usize, x as usize, 1);
                }
            }
        }
    }
    if flap.is_empty() {
        return Err(Error::EmptyFlap {
            center: spec.center_vox,
            radius_vox: spec.radius_vox,
        });
    }
    let defect = binary_subtract(skull, &flap)?;
    Ok(VcSample {
        defect,
        flap,
        spec: *spec,
    })
}

/// Simulation knobs for [`random_craniectomy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VcConfig {
    pub zone: ExclusionZone,
    pub radius: RadiusRange,
    pub sampling: CenterSampling,
    /// Bounded retries when a drawn sphere misses the skull entirely.
    pub max_retries: usize,
}

impl Default for VcConfig {
    fn default() -> Self {
        Self {
            zone: ExclusionZone::default(),
            radius: RadiusRange::default(),
            sampling: CenterSampling::default(),
            max_retries: 10,
        }
    }
}

/// Draw a random craniectomy: radius uniform in the configured range, center
/// via [`sample_flap_center`]. Deterministic for a given seed.
pub fn random_craniectomy(skull: &SkullMask, cfg: &VcConfig, seed: u64) -> Result<VcSample> {
    let candidates = eligible_centers(skull, &cfg.zone, cfg.sampling);
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let mut rng = rng::stream(seed);
    let mut attempts = Vec::new();
    for _ in 0..cfg.max_retries.max(1) {
        let radius_vox = if cfg.radius.max_vox > cfg.radius.min_vox {
            rng.gen_range(cfg.radius.min_vox..=cfg.radius.max_vox)
        } else {
            cfg.radius.min_vox
        };
        let center_vox = candidates[rng.gen_range(0..candidates.len())];
        let spec = CraniectomySpec {
            center_vox,
            radius_vox,
        };
        match apply_craniectomy(skull, &spec) {
            Ok(sample) => return Ok(sample),
            Err(Error::EmptyFlap { .. }) => attempts.push(spec),
            Err(other) => return Err(other),
        }
    }
    Err(Error::SimulationFailed { attempts })
}
