//! Rigid alignment of skull masks into an atlas frame.
//!
//! Three modes:
//! * `Identity` — no transform; the mask is regridded onto the atlas lattice
//!   by physical position.
//! * `Moments` — matches centers of mass and principal axes (a closed-form
//!   rigid registration, robust enough for pre-alignment of skull shapes).
//! * `External` — delegates to a user-configured registration executable
//!   that consumes and produces mask files.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridGeom, SkullMask};
use crate::volumetry::PreprocConfig;

/// Alignment strategy selector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMode {
    #[default]
    Identity,
    Moments,
    External(ExternalTool),
}

/// External registration command. `{input}`, `{atlas}` and `{output}` in the
/// argument list are replaced with mask file paths; the tool must write the
/// aligned mask (on the atlas grid) to `{output}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalTool {
    pub program: String,
    pub args: Vec<String>,
}

/// Rigidly align `mask` into the atlas frame per `cfg.alignment`.
pub fn rigid_align(mask: &SkullMask, atlas: &SkullMask, cfg: &PreprocConfig) -> Result<SkullMask> {
    if mask.is_empty() || atlas.is_empty() {
        return Err(Error::NoForeground);
    }
    match &cfg.alignment {
        AlignmentMode::Identity => Ok(regrid(mask, atlas.geom())),
        AlignmentMode::Moments => moments_align(mask, atlas),
        AlignmentMode::External(tool) => external_align(mask, atlas, tool),
    }
}

/// Nearest-neighbor regrid of `mask` onto `target` by physical position,
/// with no rotation or translation.
fn regrid(mask: &SkullMask, target: &GridGeom) -> SkullMask {
    let src = mask.geom().clone();
    SkullMask::from_fn(target.clone(), |idx| {
        let p = target.position_mm(idx);
        sample_nearest(mask, &src, p) == 1
    })
}

#[inline]
fn sample_nearest(mask: &SkullMask, src: &GridGeom, p: [f64; 3]) -> u8 {
    let mut ijk = [0usize; 3];
    for axis in 0..3 {
        let f = (p[axis] - src.origin_mm[axis]) / src.spacing_mm[axis];
        let r = f.round();
        if r < 0.0 || r > src.dims[axis] as f64 - 1.0 {
            return 0;
        }
        ijk[axis] = r as usize;
    }
    mask.get(ijk[0], ijk[1], ijk[2])
}

/// Center of mass of the foreground in physical mm.
fn center_of_mass(mask: &SkullMask) -> Vector3<f64> {
    let mut sum = Vector3::zeros();
    let mut n = 0.0;
    for idx in mask.foreground_indices() {
        let p = mask.geom().position_mm(idx);
        sum += Vector3::new(p[0], p[1], p[2]);
        n += 1.0;
    }
    sum / n
}

/// Principal axes (descending variance) of the foreground point cloud,
/// right-handed.
fn principal_axes(mask: &SkullMask, com: &Vector3<f64>) -> Matrix3<f64> {
    let mut cov = Matrix3::zeros();
    let mut n = 0.0;
    for idx in mask.foreground_indices() {
        let p = mask.geom().position_mm(idx);
        let d = Vector3::new(p[0], p[1], p[2]) - com;
        cov += d * d.transpose();
        n += 1.0;
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = Matrix3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ]);
    if axes.determinant() < 0.0 {
        let flipped = -axes.column(2).into_owned();
        axes.set_column(2, &flipped);
    }
    axes
}

/// Subsample of foreground positions used to score candidate rotations.
fn score_points(mask: &SkullMask, max_points: usize) -> Vec<Vector3<f64>> {
    let fg = mask.foreground_indices();
    let stride = (fg.len() / max_points).max(1);
    fg.iter()
        .step_by(stride)
        .map(|&idx| {
            let p = mask.geom().position_mm(idx);
            Vector3::new(p[0], p[1], p[2])
        })
        .collect()
}

fn moments_align(mask: &SkullMask, atlas: &SkullMask) -> Result<SkullMask> {
    let com_m = center_of_mass(mask);
    let com_a = center_of_mass(atlas);
    let axes_m = principal_axes(mask, &com_m);
    let axes_a = principal_axes(atlas, &com_a);

    // Eigenvector signs are arbitrary; try the four proper sign combinations
    // and keep the rotation with the best foreground overlap on the atlas.
    let signs = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let points = score_points(mask, 4096);
    let ageom = atlas.geom().clone();
    let mut best: Option<(usize, Matrix3<f64>)> = None;
    for s in signs {
        let rot = axes_a * Matrix3::from_diagonal(&Vector3::new(s[0], s[1], s[2])) * axes_m.transpose();
        let hits = points
            .iter()
            .filter(|&p| {
                let q = rot * (p - com_m) + com_a;
                sample_nearest(atlas, &ageom, [q[0], q[1], q[2]]) == 1
            })
            .count();
        if best.as_ref().map_or(true, |(h, _)| hits > *h) {
            best = Some((hits, rot));
        }
    }
    let (_, rot) = best.expect("at least one candidate rotation");

    // Pull back: for every atlas voxel, look up the source voxel under the
    // inverse transform.
    let inv = rot.transpose();
    let src = mask.geom().clone();
    let out = SkullMask::from_fn(ageom.clone(), |idx| {
        let q = ageom.position_mm(idx);
        let p = inv * (Vector3::new(q[0], q[1], q[2]) - com_a) + com_m;
        sample_nearest(mask, &src, [p[0], p[1], p[2]]) == 1
    });
    Ok(out)
}

fn external_align(mask: &SkullMask, atlas: &SkullMask, tool: &ExternalTool) -> Result<SkullMask> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("input.nii.gz");
    let atlas_path = dir.path().join("atlas.nii.gz");
    let output = dir.path().join("aligned.nii.gz");
    crate::io::write_mask(&input, mask)?;
    crate::io::write_mask(&atlas_path, atlas)?;

    let substitute = |arg: &str| {
        arg.replace("{input}", &input.to_string_lossy())
            .replace("{atlas}", &atlas_path.to_string_lossy())
            .replace("{output}", &output.to_string_lossy())
    };
    let out = std::process::Command::new(&tool.program)
        .args(tool.args.iter().map(|a| substitute(a)))
        .output()?;
    if !out.status.success() {
        return Err(Error::AdapterFailed {
            status: out.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        });
    }
    if !output.exists() {
        return Err(Error::AdapterFailed {
            status: 0,
            stderr: "tool exited 0 but produced no output file".into(),
        });
    }
    let aligned = crate::io::read_mask(&output)?;
    if !aligned.geom().same_lattice(atlas.geom()) {
        return Err(Error::GridMismatch(format!(
            "external tool output lattice {:?} does not match atlas {:?}",
            aligned.geom().dims,
            atlas.geom().dims
        )));
    }
    Ok(aligned)
}
