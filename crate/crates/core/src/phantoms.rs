//! Parametric synthetic skull phantoms.
//!
//! Ellipsoidal shells (outer minus inner ellipsoid) with an optional
//! inferior opening and a low-frequency surface perturbation. Ellipsoids are
//! analytically checkable: the voxelized shell volume converges to
//! `4/3 π (abc − a'b'c')` as spacing shrinks, which is what the tests pin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridGeom, SkullMask};
use crate::rng::{self, derive_seed};
use crate::volumetry::{largest_component, Connectivity};

/// Inclusive parameter interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
}

impl ParamRange {
    pub fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.gen_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::InvalidParameter(format!(
                "{name}: invalid range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Generation parameters for a phantom cohort.
///
/// Semi-axis ranges are in axis order `(z, y, x)`: height, length, width.
/// The defaults fit a 96³ grid at 2 mm and keep total shell volume below
/// ~320 cm³ so that even a maximal spherical cut stays inside the flap
/// volume band used by the craniectomy simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomParams {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub semi_axes_mm: [ParamRange; 3],
    pub shell_thickness_mm: ParamRange,
    /// Cut the shell open below the inferior pole (foramen/jaw gap).
    pub inferior_opening: bool,
    /// Fraction of the inferior semi-axis removed by the opening.
    pub opening_cut_fraction: f64,
    /// Peak radial surface perturbation in mm (0 disables noise).
    pub surface_noise_amplitude_mm: f64,
    /// Number of random low-frequency waves in the perturbation field.
    pub noise_waves: usize,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            dims: [96, 96, 96],
            spacing_mm: 2.0,
            semi_axes_mm: [
                ParamRange {
                    min: 55.0,
                    max: 63.0,
                },
                ParamRange {
                    min: 68.0,
                    max: 76.0,
                },
                ParamRange {
                    min: 55.0,
                    max: 63.0,
                },
            ],
            shell_thickness_mm: ParamRange { min: 4.0, max: 6.0 },
            inferior_opening: true,
            opening_cut_fraction: 0.22,
            surface_noise_amplitude_mm: 1.5,
            noise_waves: 8,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter("phantom dims must be >= 1".into()));
        }
        if !(self.spacing_mm > 0.0) {
            return Err(Error::InvalidParameter("spacing must be positive".into()));
        }
        for (i, r) in self.semi_axes_mm.iter().enumerate() {
            r.validate(&format!("semi_axes_mm[{i}]"))?;
            if !(r.min > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "semi_axes_mm[{i}] must be positive"
                )));
            }
        }
        self.shell_thickness_mm.validate("shell_thickness_mm")?;
        if !(self.shell_thickness_mm.min > 0.0) {
            return Err(Error::InvalidParameter(
                "shell thickness must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.opening_cut_fraction) {
            return Err(Error::InvalidParameter(
                "opening_cut_fraction must be in [0, 1)".into(),
            ));
        }
        if self.surface_noise_amplitude_mm < 0.0 {
            return Err(Error::InvalidParameter(
                "noise amplitude must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Concrete (post-draw) phantom shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomShape {
    pub semi_axes_mm: [f64; 3],
    pub thickness_mm: f64,
    pub opening_cut_fraction: Option<f64>,
    pub noise_amplitude_mm: f64,
    /// (wave vector in cycles per unit cube, phase) pairs.
    pub noise_waves: Vec<([f64; 3], f64)>,
}

impl PhantomShape {
    /// Draw a concrete shape from parameter ranges; deterministic per seed.
    pub fn sample(params: &PhantomParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = rng::stream(derive_seed(seed, "phantom-shape", &[]));
        let semi_axes_mm = [
            params.semi_axes_mm[0].draw(&mut rng),
            params.semi_axes_mm[1].draw(&mut rng),
            params.semi_axes_mm[2].draw(&mut rng),
        ];
        let thickness_mm = params.shell_thickness_mm.draw(&mut rng);
        let noise_waves = (0..params.noise_waves)
            .map(|_| {
                let k = [
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.5..2.5),
                ];
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (k, phase)
            })
            .collect();
        Ok(Self {
            semi_axes_mm,
            thickness_mm,
            opening_cut_fraction: params.inferior_opening.then_some(params.opening_cut_fraction),
            noise_amplitude_mm: params.surface_noise_amplitude_mm,
            noise_waves,
        })
    }

    /// Analytic shell volume in cm³ (before opening/noise).
    pub fn analytic_volume_cm3(&self) -> f64 {
        let [az, ay, ax] = self.semi_axes_mm;
        let t = self.thickness_mm;
        let outer = az * ay * ax;
        let inner = (az - t) * (ay - t) * (ax - t);
        (4.0 / 3.0) * std::f64::consts::PI * (outer - inner) / 1000.0
    }

    fn noise_at(&self, u: [f64; 3]) -> f64 {
        if self.noise_waves.is_empty() {
            return 0.0;
        }
        let mut n = 0.0;
        for (k, phase) in &self.noise_waves {
            let arg = std::f64::consts::TAU * (k[0] * u[0] + k[1] * u[1] + k[2] * u[2]) + phase;
            n += arg.cos();
        }
        n / self.noise_waves.len() as f64
    }
}

/// Rasterize a shape on an isotropic, origin-centered grid.
pub fn rasterize(shape: &PhantomShape, dims: [usize; 3], spacing_mm: f64) -> Result<SkullMask> {
    let [az, ay, ax] = shape.semi_axes_mm;
    let t = shape.thickness_mm;
    let min_axis = az.min(ay).min(ax);
    if t >= min_axis {
        return Err(Error::DegeneratePhantom(format!(
            "shell thickness {t} mm >= smallest semi-axis {min_axis} mm"
        )));
    }
    let geom = GridGeom::isotropic(dims, spacing_mm)?;
    let extent = geom.extent_mm();
    let mean_axis = (az * ay * ax).cbrt();
    let amp = shape.noise_amplitude_mm / mean_axis;
    let z_cut = shape
        .opening_cut_fraction
        .map(|f| -(1.0 - f) * az)
        .unwrap_or(f64::NEG_INFINITY);

    let g = geom.clone();
    let mask = SkullMask::from_fn(geom, |idx| {
        let p = g.position_mm(idx);
        if p[0] < z_cut {
            return false;
        }
        let u = [
            p[0] / extent[0] + 0.5,
            p[1] / extent[1] + 0.5,
            p[2] / extent[2] + 0.5,
        ];
        let bump = amp * shape.noise_at(u);
        let e_outer =
            ((p[0] / az).powi(2) + (p[1] / ay).powi(2) + (p[2] / ax).powi(2)).sqrt();
        let e_inner = ((p[0] / (az - t)).powi(2)
            + (p[1] / (ay - t)).powi(2)
            + (p[2] / (ax - t)).powi(2))
        .sqrt();
        e_outer <= 1.0 + bump && e_inner >= 1.0 + bump * (mean_axis / (mean_axis - t))
    });

    if mask.is_empty() {
        return Err(Error::DegeneratePhantom(
            "parameters yield an empty shell".into(),
        ));
    }
    let comps = largest_component(&mask, Connectivity::TwentySix);
    if comps.component_count != 1 {
        return Err(Error::DegeneratePhantom(format!(
            "shell splits into {} components",
            comps.component_count
        )));
    }
    Ok(mask)
}

/// Generate one phantom mask. Deterministic for a given seed.
pub fn generate_phantom(params: &PhantomParams, seed: u64) -> Result<SkullMask> {
    let shape = PhantomShape::sample(params, seed)?;
    rasterize(&shape, params.dims, params.spacing_mm)
}

/// One cohort member with its realized draw.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub id: String,
    pub seed: u64,
    pub shape: PhantomShape,
    pub mask: SkullMask,
}

/// Generate a cohort of phantoms with jittered parameters.
/// Per-phantom seeds derive from `(master_seed, index)`.
pub fn generate_cohort(
    params: &PhantomParams,
    count: usize,
    master_seed: u64,
) -> Result<Vec<Phantom>> {
    (0..count)
        .map(|i| {
            let seed = derive_seed(master_seed, "cohort", &[i as u64]);
            let shape = PhantomShape::sample(params, seed)?;
            let mask = rasterize(&shape, params.dims, params.spacing_mm)?;
            Ok(Phantom {
                id: format!("phantom_{i:03}"),
                seed,
                shape,
                mask,
            })
        })
        .collect()
}

/// The canonical atlas mask shipped with the pipeline: the mean-parameter
/// phantom, noise-free, on the default 96³ / 2 mm grid.
pub fn canonical_atlas() -> SkullMask {
    let params = PhantomParams::default();
    let mid = |r: ParamRange| ParamRange::fixed(0.5 * (r.min + r.max));
    let atlas_params = PhantomParams {
        semi_axes_mm: [
            mid(params.semi_axes_mm[0]),
            mid(params.semi_axes_mm[1]),
            mid(params.semi_axes_mm[2]),
        ],
        shell_thickness_mm: mid(params.shell_thickness_mm),
        surface_noise_amplitude_mm: 0.0,
        noise_waves: 0,
        ..params
    };
    generate_phantom(&atlas_params, 0).expect("default atlas parameters are valid")
}
