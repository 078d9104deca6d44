//! Isotropic resampling. HU volumes interpolate trilinearly; masks use
//! nearest-neighbor so they stay binary.

use crate::error::{Error, Result};
use crate::grid::{GridGeom, SkullMask, VoxelGrid};

const SPACING_TOL: f64 = 1e-9;

/// Output geometry for resampling `geom` to isotropic `target_mm`.
///
/// Voxel counts are `round(extent / target)` per axis, which preserves the
/// physical extent to within one voxel; grid corners stay fixed.
fn target_geom(geom: &GridGeom, target_mm: f64) -> Result<GridGeom> {
    if !(target_mm > 0.0) || !target_mm.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "resampling target must be positive, got {target_mm}"
        )));
    }
    let mut dims = [0usize; 3];
    let mut origin = [0f64; 3];
    for axis in 0..3 {
        let extent = geom.dims[axis] as f64 * geom.spacing_mm[axis];
        let n = (extent / target_mm).round();
        if n < 1.0 {
            return Err(Error::DegenerateExtent { axis });
        }
        dims[axis] = n as usize;
        origin[axis] = geom.origin_mm[axis] - 0.5 * geom.spacing_mm[axis] + 0.5 * target_mm;
    }
    GridGeom::new(dims, [target_mm; 3], origin)
}

fn already_at(geom: &GridGeom, target_mm: f64) -> bool {
    geom.spacing_mm
        .iter()
        .all(|&s| (s - target_mm).abs() <= SPACING_TOL)
}

/// Fractional source index of an output voxel along one axis.
#[inline]
fn source_coord(out_idx: usize, out: &GridGeom, src: &GridGeom, axis: usize) -> f64 {
    let pos = out.origin_mm[axis] + out_idx as f64 * out.spacing_mm[axis];
    (pos - src.origin_mm[axis]) / src.spacing_mm[axis]
}

/// Resample a scalar volume to isotropic spacing with trilinear interpolation.
/// Returns the input unchanged when it is already at the target spacing.
pub fn resample_iso(grid: &VoxelGrid, target_mm: f64) -> Result<VoxelGrid> {
    if already_at(grid.geom(), target_mm) {
        return Ok(grid.clone());
    }
    let out_geom = target_geom(grid.geom(), target_mm)?;
    let src = grid.geom();
    let [d, h, w] = out_geom.dims;
    let mut values = Vec::with_capacity(out_geom.voxel_count());
    for z in 0..d {
        let fz = source_coord(z, &out_geom, src, 0).clamp(0.0, src.dims[0] as f64 - 1.0);
        let z0 = fz.floor() as usize;
        let z1 = (z0 + 1).min(src.dims[0] - 1);
        let tz = fz - z0 as f64;
        for y in 0..h {
            let fy = source_coord(y, &out_geom, src, 1).clamp(0.0, src.dims[1] as f64 - 1.0);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(src.dims[1] - 1);
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = source_coord(x, &out_geom, src, 2).clamp(0.0, src.dims[2] as f64 - 1.0);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(src.dims[2] - 1);
                let tx = fx - x0 as f64;

                let c = |zi: usize, yi: usize, xi: usize| grid.at(zi, yi, xi) as f64;
                let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
                let v00 = lerp(c(z0, y0, x0), c(z0, y0, x1), tx);
                let v01 = lerp(c(z0, y1, x0), c(z0, y1, x1), tx);
                let v10 = lerp(c(z1, y0, x0), c(z1, y0, x1), tx);
                let v11 = lerp(c(z1, y1, x0), c(z1, y1, x1), tx);
                let v = lerp(lerp(v00, v01, ty), lerp(v10, v11, ty), tz);
                values.push(v as f32);
            }
        }
    }
    VoxelGrid::new(out_geom, values)
}

/// Resample a binary mask with nearest-neighbor sampling (stays binary).
pub fn resample_mask_iso(mask: &SkullMask, target_mm: f64) -> Result<SkullMask> {
    if already_at(mask.geom(), target_mm) {
        return Ok(mask.clone());
    }
    let out_geom = target_geom(mask.geom(), target_mm)?;
    let src = mask.geom().clone();
    let og = out_geom.clone();
    let nearest = move |i: usize, axis: usize| -> usize {
        source_coord(i, &og, &src, axis)
            .round()
            .clamp(0.0, src.dims[axis] as f64 - 1.0) as usize
    };
    let out = SkullMask::from_fn(out_geom, |[z, y, x]| {
        mask.get(nearest(z, 0), nearest(y, 1), nearest(x, 2)) == 1
    });
    Ok(out)
}
