//! The manual ABC volume estimate: three linear measurements of the skull
//! defect multiplied together, `V = A·B·C`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SkullMask;

/// The three manual measurements, in cm.
///
/// * `a_cm` — linear distance between the defect corners,
/// * `b_cm` — maximum thickness perpendicular to A,
/// * `c_cm` — sum of inter-slice distances on which the full-thickness
///   defect is visible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcMeasurements {
    pub a_cm: f64,
    pub b_cm: f64,
    pub c_cm: f64,
}

impl AbcMeasurements {
    pub fn new(a_cm: f64, b_cm: f64, c_cm: f64) -> Result<Self> {
        for (name, v) in [("A", a_cm), ("B", b_cm), ("C", c_cm)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "ABC measurement {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { a_cm, b_cm, c_cm })
    }
}

/// `V = A·B·C` in cm³.
pub fn abc_volume(m: &AbcMeasurements) -> f64 {
    m.a_cm * m.b_cm * m.c_cm
}

/// Derive ABC-style measurements from a flap mask's bounding geometry:
/// A = largest principal extent, B = smallest principal extent (the flap
/// thickness direction), C = extent along the slice (z) axis. Each extent is
/// padded by one voxel so single-voxel flaps stay positive.
pub fn abc_from_flap(flap: &SkullMask) -> Result<AbcMeasurements> {
    let fg = flap.foreground_indices();
    if fg.is_empty() {
        return Err(Error::NoForeground);
    }
    let geom = flap.geom();
    let points: Vec<Vector3<f64>> = fg
        .iter()
        .map(|&idx| {
            let p = geom.position_mm(idx);
            Vector3::new(p[0], p[1], p[2])
        })
        .collect();
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mean_spacing = geom.spacing_mm.iter().sum::<f64>() / 3.0;
    let extent_along = |axis: Vector3<f64>| -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &points {
            let t = axis.dot(&(p - centroid));
            lo = lo.min(t);
            hi = hi.max(t);
        }
        hi - lo + mean_spacing
    };
    let a_mm = extent_along(eig.eigenvectors.column(order[0]).into_owned());
    let b_mm = extent_along(eig.eigenvectors.column(order[2]).into_owned());

    let zs: Vec<usize> = fg.iter().map(|&[z, _, _]| z).collect();
    let z_min = *zs.iter().min().unwrap();
    let z_max = *zs.iter().max().unwrap();
    let c_mm = (z_max - z_min + 1) as f64 * geom.spacing_mm[0];

    AbcMeasurements::new(a_mm / 10.0, b_mm / 10.0, c_mm / 10.0)
}
