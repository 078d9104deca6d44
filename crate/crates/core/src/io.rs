//! NIfTI-1 file I/O for masks and HU volumes (`.nii` / `.nii.gz`).
//!
//! Masks are written as unsigned 8-bit volumes with values {0, 1}; scalar
//! volumes as 32-bit float. Spacing and origin round-trip through the file
//! header (axis-aligned affines only; oblique rotations are not supported and
//! only the translation/zoom parts are honored on read).

use std::path::Path;

use nalgebra::Matrix4;
use ndarray::{Array3, ShapeBuilder};
use nifti::{
    writer::WriterOptions, IntoNdArray, NiftiHeader, NiftiObject, NiftiVolume, XForm,
};

use crate::error::Result;
use crate::grid::{GridGeom, SkullMask, VoxelGrid};

/// NIfTI stores axes as (x, y, z); our grids index (z, y, x).
fn header_for(geom: &GridGeom) -> NiftiHeader {
    let mut header = NiftiHeader {
        pixdim: [
            1.0,
            geom.spacing_mm[2] as f32,
            geom.spacing_mm[1] as f32,
            geom.spacing_mm[0] as f32,
            0.0,
            0.0,
            0.0,
            0.0,
        ],
        ..NiftiHeader::default()
    };
    let affine = Matrix4::new(
        geom.spacing_mm[2],
        0.0,
        0.0,
        geom.origin_mm[2],
        0.0,
        geom.spacing_mm[1],
        0.0,
        geom.origin_mm[1],
        0.0,
        0.0,
        geom.spacing_mm[0],
        geom.origin_mm[0],
        0.0,
        0.0,
        0.0,
        1.0,
    );
    header.set_sform(&affine, XForm::AlignedAnat);
    header
}

fn geom_from_header(header: &NiftiHeader, dims_xyz: [usize; 3]) -> Result<GridGeom> {
    let affine: Matrix4<f64> = header.affine();
    // Zooms from the affine column norms, translation from the last column.
    let mut spacing_xyz = [0.0f64; 3];
    for c in 0..3 {
        let col = affine.fixed_view::<3, 1>(0, c);
        spacing_xyz[c] = col.norm();
    }
    let origin_xyz = [affine[(0, 3)], affine[(1, 3)], affine[(2, 3)]];
    GridGeom::new(
        [dims_xyz[2], dims_xyz[1], dims_xyz[0]],
        [spacing_xyz[2], spacing_xyz[1], spacing_xyz[0]],
        [origin_xyz[2], origin_xyz[1], origin_xyz[0]],
    )
}

/// Our (z, y, x) x-fastest layout is exactly the NIfTI Fortran data order.
fn to_xyz_array<T: Clone>(geom: &GridGeom, data: Vec<T>) -> Array3<T> {
    let [d, h, w] = geom.dims;
    Array3::from_shape_vec((w, h, d).f(), data).expect("buffer length matches geometry")
}

fn read_object(path: &Path) -> Result<(GridGeom, ndarray::ArrayD<f32>)> {
    let obj = nifti::ReaderOptions::new().read_file(path)?;
    let header = obj.header().clone();
    let volume = obj.into_volume();
    let dims = volume.dim().to_vec();
    if dims.len() != 3 && !(dims.len() > 3 && dims[3..].iter().all(|&d| d <= 1)) {
        return Err(crate::error::Error::InvalidParameter(format!(
            "expected a 3D volume, got dims {dims:?}"
        )));
    }
    let dims_xyz = [dims[0] as usize, dims[1] as usize, dims[2] as usize];
    let mut arr = volume.into_ndarray::<f32>()?;
    // Squeeze trailing singleton axes (e.g. 4D files with one frame).
    while arr.ndim() > 3 {
        arr = arr.index_axis_move(ndarray::Axis(3), 0);
    }
    let geom = geom_from_header(&header, dims_xyz)?;
    Ok((geom, arr))
}

/// Read a scalar volume (HU or probability map).
pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let (geom, arr) = read_object(path.as_ref())?;
    let [d, h, w] = geom.dims;
    let mut values = Vec::with_capacity(geom.voxel_count());
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                values.push(arr[[x, y, z]]);
            }
        }
    }
    VoxelGrid::new(geom, values)
}

/// Read a binary mask; values are binarized at 0.5 so that {0,1} and
/// {0,255}-style masks both load.
pub fn read_mask(path: impl AsRef<Path>) -> Result<SkullMask> {
    let (geom, arr) = read_object(path.as_ref())?;
    let [d, h, w] = geom.dims;
    let mut data = Vec::with_capacity(geom.voxel_count());
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                data.push((arr[[x, y, z]] > 0.5) as u8);
            }
        }
    }
    SkullMask::from_raw(geom, data)
}

/// Write a mask as uint8 {0,1}. Compressed when the path ends in `.gz`.
pub fn write_mask(path: impl AsRef<Path>, mask: &SkullMask) -> Result<()> {
    let header = header_for(mask.geom());
    let arr = to_xyz_array(mask.geom(), mask.data().to_vec());
    WriterOptions::new(path.as_ref())
        .reference_header(&header)
        .write_nifti(&arr)?;
    Ok(())
}

/// Write a scalar volume as float32.
pub fn write_volume(path: impl AsRef<Path>, grid: &VoxelGrid) -> Result<()> {
    let header = header_for(grid.geom());
    let arr = to_xyz_array(grid.geom(), grid.values().to_vec());
    WriterOptions::new(path.as_ref())
        .reference_header(&header)
        .write_nifti(&arr)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let geom = GridGeom::new([5, 6, 7], [2.0, 2.0, 2.0], [-4.0, 3.0, 10.0]).unwrap();
        let mask = SkullMask::from_fn(geom, |[z, y, x]| (z * 31 + y * 7 + x) % 3 == 0);
        for name in ["m.nii", "m.nii.gz"] {
            let path = dir.path().join(name);
            write_mask(&path, &mask).unwrap();
            let back = read_mask(&path).unwrap();
            assert_eq!(back.data(), mask.data(), "{name}");
            assert_eq!(back.geom().dims, mask.geom().dims);
            for axis in 0..3 {
                assert!((back.geom().spacing_mm[axis] - 2.0).abs() < 1e-5);
                assert!(
                    (back.geom().origin_mm[axis] - mask.geom().origin_mm[axis]).abs() < 1e-4,
                    "origin axis {axis}"
                );
            }
        }
    }

    #[test]
    fn volume_round_trips_values() {
        let dir = tempfile::tempdir().unwrap();
        let geom = GridGeom::isotropic([4, 4, 4], 1.5).unwrap();
        let values: Vec<f32> = (0..64).map(|i| i as f32 * 3.25 - 100.0).collect();
        let grid = VoxelGrid::new(geom, values).unwrap();
        let path = dir.path().join("v.nii.gz");
        write_volume(&path, &grid).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back.values(), grid.values());
    }
}
