//! Voxel-grid data model.
//!
//! A [`VoxelGrid`] is a dense 3D scalar field with physical spacing (CT
//! intensities in Hounsfield units, or probability maps). A [`SkullMask`] is
//! its binary counterpart and the currency every other module trades in.
//!
//! Axis convention: index order is `(z, y, x)` with `dims = [d, h, w]`;
//! `z = 0` is the inferior-most slice. Values are stored x-fastest, which is
//! the NIfTI data layout. Spacing and origin are per-axis in the same order,
//! and a voxel's physical position is `origin + index * spacing` (voxel
//! centers, NIfTI convention).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid geometry shared by scalar volumes and masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeom {
    /// Voxel counts per axis, `(z, y, x)` order.
    pub dims: [usize; 3],
    /// Voxel spacing in mm per axis.
    pub spacing_mm: [f64; 3],
    /// Physical position of the center of voxel `(0, 0, 0)` in mm.
    pub origin_mm: [f64; 3],
}

impl GridGeom {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], origin_mm: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(format!(
                "grid dims must all be >= 1, got {dims:?}"
            )));
        }
        if spacing_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive and finite, got {spacing_mm:?}"
            )));
        }
        if origin_mm.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid origin must be finite, got {origin_mm:?}"
            )));
        }
        Ok(Self {
            dims,
            spacing_mm,
            origin_mm,
        })
    }

    /// Isotropic grid centered on the physical origin.
    pub fn isotropic(dims: [usize; 3], spacing_mm: f64) -> Result<Self> {
        let origin = [
            -0.5 * (dims[0] as f64 - 1.0) * spacing_mm,
            -0.5 * (dims[1] as f64 - 1.0) * spacing_mm,
            -0.5 * (dims[2] as f64 - 1.0) * spacing_mm,
        ];
        Self::new(dims, [spacing_mm; 3], origin)
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[2];
        let y = (index / self.dims[2]) % self.dims[1];
        let z = index / (self.dims[1] * self.dims[2]);
        [z, y, x]
    }

    /// Physical position (mm) of a voxel center.
    #[inline]
    pub fn position_mm(&self, idx: [usize; 3]) -> [f64; 3] {
        [
            self.origin_mm[0] + idx[0] as f64 * self.spacing_mm[0],
            self.origin_mm[1] + idx[1] as f64 * self.spacing_mm[1],
            self.origin_mm[2] + idx[2] as f64 * self.spacing_mm[2],
        ]
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing_mm[0] * self.spacing_mm[1] * self.spacing_mm[2]
    }

    /// Physical extent per axis in mm (`dims * spacing`).
    pub fn extent_mm(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing_mm[0],
            self.dims[1] as f64 * self.spacing_mm[1],
            self.dims[2] as f64 * self.spacing_mm[2],
        ]
    }

    pub fn is_isotropic(&self, tol: f64) -> bool {
        let s = self.spacing_mm;
        (s[0] - s[1]).abs() <= tol && (s[1] - s[2]).abs() <= tol && (s[0] - s[2]).abs() <= tol
    }

    /// Same voxel lattice: equal dims and spacing (origin may differ).
    pub fn same_lattice(&self, other: &GridGeom) -> bool {
        const TOL: f64 = 1e-9;
        self.dims == other.dims
            && self
                .spacing_mm
                .iter()
                .zip(other.spacing_mm.iter())
                .all(|(a, b)| (a - b).abs() <= TOL)
    }

    fn check_same_lattice(&self, other: &GridGeom) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch {
                expected: self.dims,
                got: other.dims,
            });
        }
        if !self.same_lattice(other) {
            return Err(Error::GridMismatch(format!(
                "spacing {:?} vs {:?}",
                self.spacing_mm, other.spacing_mm
            )));
        }
        Ok(())
    }
}

/// Dense scalar volume (HU values or probabilities).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    geom: GridGeom,
    values: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(geom: GridGeom, values: Vec<f32>) -> Result<Self> {
        if values.len() != geom.voxel_count() {
            return Err(Error::ValueCountMismatch {
                expected: geom.voxel_count(),
                got: values.len(),
            });
        }
        Ok(Self { geom, values })
    }

    pub fn zeros(geom: GridGeom) -> Self {
        let n = geom.voxel_count();
        Self {
            geom,
            values: vec![0.0; n],
        }
    }

    pub fn geom(&self) -> &GridGeom {
        &self.geom
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> f32 {
        self.values[self.geom.index(z, y, x)]
    }

    /// Error if any stored value is NaN or infinite.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFiniteValue { index }),
            None => Ok(()),
        }
    }
}

/// Binary skull mask. Every voxel is 0 or 1 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SkullMask {
    geom: GridGeom,
    data: Vec<u8>,
}

impl SkullMask {
    /// Build from raw bytes, rejecting anything outside {0, 1}.
    pub fn from_raw(geom: GridGeom, data: Vec<u8>) -> Result<Self> {
        if data.len() != geom.voxel_count() {
            return Err(Error::ValueCountMismatch {
                expected: geom.voxel_count(),
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryValue {
                index,
                value: data[index] as f32,
            });
        }
        Ok(Self { geom, data })
    }

    pub fn zeros(geom: GridGeom) -> Self {
        let n = geom.voxel_count();
        Self {
            geom,
            data: vec![0; n],
        }
    }

    /// Build by evaluating a predicate at every voxel index `(z, y, x)`.
    pub fn from_fn(geom: GridGeom, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let mut data = Vec::with_capacity(geom.voxel_count());
        for z in 0..geom.dims[0] {
            for y in 0..geom.dims[1] {
                for x in 0..geom.dims[2] {
                    data.push(f([z, y, x]) as u8);
                }
            }
        }
        Self { geom, data }
    }

    pub fn geom(&self) -> &GridGeom {
        &self.geom
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> u8 {
        self.data[self.geom.index(z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, v: u8) {
        debug_assert!(v <= 1);
        let i = self.geom.index(z, y, x);
        self.data[i] = v;
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Foreground volume in cm³: `count * sx*sy*sz / 1000`.
    pub fn volume_cm3(&self) -> f64 {
        self.foreground_count() as f64 * self.geom.voxel_volume_mm3() / 1000.0
    }

    /// Indices `(z, y, x)` of all foreground voxels, lexicographic order.
    pub fn foreground_indices(&self) -> Vec<[usize; 3]> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| self.geom.coords(i))
            .collect()
    }

    /// Foreground voxels with at least one background 6-neighbor; voxels on
    /// the grid boundary count their out-of-bounds side as background.
    pub fn surface_voxels(&self) -> Vec<[usize; 3]> {
        let [d, h, w] = self.geom.dims;
        let mut out = Vec::new();
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    if self.get(z, y, x) == 0 {
                        continue;
                    }
                    let exposed = (z == 0 || self.get(z - 1, y, x) == 0)
                        || (z + 1 == d || self.get(z + 1, y, x) == 0)
                        || (y == 0 || self.get(z, y - 1, x) == 0)
                        || (y + 1 == h || self.get(z, y + 1, x) == 0)
                        || (x == 0 || self.get(z, y, x - 1) == 0)
                        || (x + 1 == w || self.get(z, y, x + 1) == 0);
                    if exposed {
                        out.push([z, y, x]);
                    }
                }
            }
        }
        out
    }

    /// Grid-compatibility check used by the binary-algebra operations.
    pub fn check_same_lattice(&self, other: &SkullMask) -> Result<()> {
        self.geom.check_same_lattice(&other.geom)
    }

    /// View as a float volume (0.0 / 1.0) on the same geometry.
    pub fn to_voxel_grid(&self) -> VoxelGrid {
        VoxelGrid {
            geom: self.geom.clone(),
            values: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_rejects_bad_parameters() {
        assert!(GridGeom::new([0, 3, 3], [1.0; 3], [0.0; 3]).is_err());
        assert!(GridGeom::new([3, 3, 3], [0.0, 1.0, 1.0], [0.0; 3]).is_err());
        assert!(GridGeom::new([3, 3, 3], [1.0; 3], [f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn linear_index_round_trips() {
        let g = GridGeom::new([3, 4, 5], [1.0; 3], [0.0; 3]).unwrap();
        for i in 0..g.voxel_count() {
            let [z, y, x] = g.coords(i);
            assert_eq!(g.index(z, y, x), i);
        }
    }

    #[test]
    fn mask_rejects_non_binary() {
        let g = GridGeom::isotropic([2, 2, 2], 1.0).unwrap();
        let err = SkullMask::from_raw(g, vec![0, 1, 2, 0, 0, 0, 0, 0]).unwrap_err();
        assert!(matches!(err, Error::NonBinaryValue { index: 2, .. }));
    }

    #[test]
    fn volume_is_count_times_voxel_volume() {
        // 1 voxel at (1, 2, 4) mm spacing -> 8 mm^3 = 0.008 cm^3
        let g = GridGeom::new([1, 1, 1], [1.0, 2.0, 4.0], [0.0; 3]).unwrap();
        let m = SkullMask::from_raw(g, vec![1]).unwrap();
        assert_eq!(m.volume_cm3(), 0.008);
    }

    #[test]
    fn surface_of_solid_cube_is_its_shell() {
        let g = GridGeom::isotropic([5, 5, 5], 1.0).unwrap();
        let m = SkullMask::from_fn(g, |_| true);
        // 5^3 cube fills the grid; every face voxel touches the boundary.
        assert_eq!(m.surface_voxels().len(), 125 - 27);
    }
}
