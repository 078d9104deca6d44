//! PCA shape-space baseline: fit principal components to vectorized complete
//! skulls, reconstruct a defected skull by projecting onto the learnt space
//! and inverting the transform.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::grid::{GridGeom, SkullMask};

/// Mean shape plus `k` orthonormal components over `d = D·H·W` voxels.
#[derive(Debug, Clone)]
pub struct PcaModel {
    geom: GridGeom,
    mean: Vec<f32>,
    /// Row-major `k × d`.
    components: Vec<f32>,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct PcaMeta {
    geom: GridGeom,
    k: usize,
    n_train: usize,
}

/// Fit a PCA shape model to complete skull masks on identical grids.
///
/// Components are the top-`k` right singular directions of the centered data
/// matrix, obtained through the `n × n` Gram matrix (the data dimension is
/// ~10⁶ voxels, the sample count tens). Component signs are normalized so
/// the entry of largest magnitude is positive, which makes the fit
/// invariant to duplicating the dataset.
pub fn pca_fit(skulls: &[SkullMask], k: usize) -> Result<PcaModel> {
    let n = skulls.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "PCA needs at least two training skulls".into(),
        ));
    }
    if k < 1 || k > n - 1 {
        return Err(Error::KOutOfRange { k, n });
    }
    let geom = skulls[0].geom().clone();
    for s in skulls.iter().skip(1) {
        if !s.geom().same_lattice(&geom) {
            return Err(Error::GridMismatch(
                "PCA training masks must share one grid".into(),
            ));
        }
    }
    let d = geom.voxel_count();

    // Voxelwise mean.
    let mut mean = vec![0f64; d];
    for s in skulls {
        for (m, &v) in mean.iter_mut().zip(s.data()) {
            *m += v as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Gram matrix of the centered rows without materializing them:
    // G[i][j] = <xi, xj> - s_i - s_j + <m, m>, with s_i = <m, xi>.
    let mm: f64 = mean.iter().map(|&m| m * m).sum();
    let s: Vec<f64> = skulls
        .par_iter()
        .map(|sk| {
            sk.data()
                .iter()
                .zip(&mean)
                .filter(|(&v, _)| v == 1)
                .map(|(_, &m)| m)
                .sum()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .collect();
    let dots: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let a = skulls[i].data();
            let b = skulls[j].data();
            a.iter().zip(b).filter(|(&x, &y)| x == 1 && y == 1).count() as f64
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for (&(i, j), &dot) in pairs.iter().zip(&dots) {
        let g = dot - s[i] - s[j] + mm;
        gram[(i, j)] = g;
        gram[(j, i)] = g;
    }

    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let mut components = vec![0f32; k * d];
    for (row, &e) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[e];
        if lambda <= lambda_max * 1e-12 || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "k = {k} exceeds the effective rank of the training set"
            )));
        }
        let sigma = lambda.sqrt();
        let u = eig.eigenvectors.column(e);
        // v = Xc^T u / sigma, accumulated mask by mask.
        let mut v = vec![0f64; d];
        let u_sum: f64 = u.iter().sum();
        for (i, sk) in skulls.iter().enumerate() {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            for (vv, &x) in v.iter_mut().zip(sk.data()) {
                if x == 1 {
                    *vv += ui;
                }
            }
        }
        for (vv, &m) in v.iter_mut().zip(&mean) {
            *vv = (*vv - m * u_sum) / sigma;
        }
        // Deterministic sign: largest-magnitude entry positive.
        let mut dominant = 0usize;
        for (i, &vv) in v.iter().enumerate() {
            if vv.abs() > v[dominant].abs() {
                dominant = i;
            }
        }
        let flip = if v[dominant] < 0.0 { -1.0 } else { 1.0 };
        for (dst, &vv) in components[row * d..(row + 1) * d].iter_mut().zip(&v) {
            *dst = (flip * vv) as f32;
        }
    }

    Ok(PcaModel {
        geom,
        mean: mean.iter().map(|&m| m as f32).collect(),
        components,
        k,
    })
}

impl PcaModel {
    pub fn geom(&self) -> &GridGeom {
        &self.geom
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn component(&self, j: usize) -> &[f32] {
        let d = self.geom.voxel_count();
        &self.components[j * d..(j + 1) * d]
    }

    /// Max absolute off-diagonal pairwise dot product (orthonormality check).
    pub fn max_cross_correlation(&self) -> f64 {
        let mut worst = 0f64;
        for i in 0..self.k {
            for j in 0..self.k {
                let dot: f64 = self
                    .component(i)
                    .iter()
                    .zip(self.component(j))
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn check_grid(&self, mask: &SkullMask) -> Result<()> {
        if !mask.geom().same_lattice(&self.geom) {
            return Err(Error::GridMismatch(
                "input mask does not match the PCA model grid".into(),
            ));
        }
        Ok(())
    }

    /// Coefficients of the centered input in component space.
    pub fn project(&self, mask: &SkullMask) -> Result<Vec<f64>> {
        self.check_grid(mask)?;
        let coeffs = (0..self.k)
            .into_par_iter()
            .map(|j| {
                let comp = self.component(j);
                let mut c = 0f64;
                for ((&v, &m), &x) in comp.iter().zip(&self.mean).zip(mask.data()) {
                    c += v as f64 * (x as f64 - m as f64);
                }
                c
            })
            .collect();
        Ok(coeffs)
    }

    /// `mean + components^T · coeffs`, the continuous reconstruction.
    pub fn reconstruct_continuous(&self, coeffs: &[f64]) -> Vec<f32> {
        let d = self.geom.voxel_count();
        let mut out: Vec<f64> = self.mean.iter().map(|&m| m as f64).collect();
        for (j, &c) in coeffs.iter().enumerate().take(self.k) {
            let comp = self.component(j);
            for (o, &v) in out.iter_mut().zip(comp) {
                *o += c * v as f64;
            }
        }
        let mut res = Vec::with_capacity(d);
        res.extend(out.iter().map(|&v| v as f32));
        res
    }

    /// Project, invert, binarize at 0.5.
    pub fn reconstruct_mask(&self, mask: &SkullMask) -> Result<SkullMask> {
        let coeffs = self.project(mask)?;
        let cont = self.reconstruct_continuous(&coeffs);
        let data = cont.iter().map(|&v| (v > 0.5) as u8).collect();
        SkullMask::from_raw(self.geom.clone(), data)
    }

    /// Mean squared reconstruction error before binarization.
    pub fn reconstruction_sq_error(&self, mask: &SkullMask) -> Result<f64> {
        let coeffs = self.project(mask)?;
        let cont = self.reconstruct_continuous(&coeffs);
        let err = cont
            .iter()
            .zip(mask.data())
            .map(|(&p, &x)| (p as f64 - x as f64).powi(2))
            .sum::<f64>();
        Ok(err / mask.geom().voxel_count() as f64)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let meta = PcaMeta {
            geom: self.geom.clone(),
            k: self.k,
            n_train: 0,
        };
        let mut c = Container::new("pca", serde_json::to_value(&meta)?);
        let d = self.geom.voxel_count() as i64;
        c.push_tensor("mean", vec![d], self.mean.clone());
        c.push_tensor("components", vec![self.k as i64, d], self.components.clone());
        c.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let c = Container::load(path)?;
        if c.kind != "pca" {
            return Err(Error::BadContainer(format!(
                "expected a pca container, got kind {:?}",
                c.kind
            )));
        }
        let meta: PcaMeta = serde_json::from_value(c.meta.clone())?;
        let (_, mean) = c
            .tensor("mean")
            .ok_or_else(|| Error::BadContainer("missing tensor: mean".into()))?;
        let (_, components) = c
            .tensor("components")
            .ok_or_else(|| Error::BadContainer("missing tensor: components".into()))?;
        Ok(Self {
            geom: meta.geom,
            mean: mean.to_vec(),
            components: components.to_vec(),
            k: meta.k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeom;

    fn ball(dims: [usize; 3], center: [f64; 3], r: f64) -> SkullMask {
        let g = GridGeom::isotropic(dims, 1.0).unwrap();
        SkullMask::from_fn(g, |[z, y, x]| {
            let d2 = (z as f64 - center[0]).powi(2)
                + (y as f64 - center[1]).powi(2)
                + (x as f64 - center[2]).powi(2);
            d2 <= r * r
        })
    }

    fn small_cohort(n: usize) -> Vec<SkullMask> {
        (0..n)
            .map(|i| {
                let r = 3.0 + 0.35 * (i as f64);
                let off = (i % 3) as f64 * 0.5;
                ball([12, 12, 12], [5.5 + off, 5.5, 5.5 - off], r)
            })
            .collect()
    }

    #[test]
    fn two_point_pca_component_is_the_normalized_difference() {
        let a = ball([10, 10, 10], [4.5, 4.5, 4.5], 3.0);
        let b = ball([10, 10, 10], [5.5, 5.5, 5.5], 3.5);
        let model = pca_fit(&[a.clone(), b.clone()], 1).unwrap();
        // diff = a - b, normalized; the single component must be ±diff/|diff|.
        let diff: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x as f64 - y as f64) / 2.0)
            .collect();
        let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        let comp = model.component(0);
        let dot: f64 = comp
            .iter()
            .zip(&diff)
            .map(|(&c, &d)| c as f64 * d / norm)
            .sum();
        assert!(
            (dot.abs() - 1.0).abs() < 1e-6,
            "|cos| between component and diff = {}",
            dot.abs()
        );
    }

    #[test]
    fn duplicated_dataset_yields_identical_components() {
        let cohort = small_cohort(5);
        let mut doubled = cohort.clone();
        doubled.extend(cohort.iter().cloned());
        let m1 = pca_fit(&cohort, 3).unwrap();
        let m2 = pca_fit(&doubled, 3).unwrap();
        for j in 0..3 {
            let max_diff = m1
                .component(j)
                .iter()
                .zip(m2.component(j))
                .map(|(&a, &b)| (a - b).abs())
                .fold(0f32, f32::max);
            assert!(max_diff < 1e-5, "component {j} differs by {max_diff}");
        }
    }

    #[test]
    fn components_are_orthonormal() {
        let cohort = small_cohort(7);
        let model = pca_fit(&cohort, 6).unwrap();
        assert!(model.max_cross_correlation() < 1e-6);
    }

    #[test]
    fn training_point_reconstructs_at_full_rank() {
        let cohort = small_cohort(6);
        let model = pca_fit(&cohort, 5).unwrap();
        let recon = model.reconstruct_mask(&cohort[2]).unwrap();
        let d = crate::metrics::dice(&recon, &cohort[2]).unwrap();
        assert!(d >= 0.99, "training-point dice {d}");
    }

    #[test]
    fn mean_input_reconstructs_to_binarized_mean() {
        let cohort = small_cohort(6);
        let model = pca_fit(&cohort, 3).unwrap();
        // Feed the binarized mean itself: coefficients are ~0 for the mean
        // shape, so the output equals the binarized mean map.
        let mean_mask = SkullMask::from_raw(
            model.geom().clone(),
            model.mean().iter().map(|&m| (m > 0.5) as u8).collect(),
        )
        .unwrap();
        let recon = model.reconstruct_mask(&mean_mask).unwrap();
        let d = crate::metrics::dice(&recon, &mean_mask).unwrap();
        assert!(d > 0.8, "mean-shape dice {d}");

        // With explicitly zero coefficients the inverse transform is the
        // mean itself, so binarization gives exactly the binarized mean.
        let from_zero = model.reconstruct_continuous(&[]);
        let binarized: Vec<u8> = from_zero.iter().map(|&v| (v > 0.5) as u8).collect();
        assert_eq!(binarized, mean_mask.data());
    }

    #[test]
    fn reconstruction_error_is_non_increasing_in_k() {
        let cohort = small_cohort(8);
        let probe = ball([12, 12, 12], [5.0, 6.0, 5.5], 4.1);
        let mut prev = f64::INFINITY;
        for k in 1..=7 {
            let model = pca_fit(&cohort, k).unwrap();
            let err = model.reconstruction_sq_error(&probe).unwrap();
            assert!(err <= prev + 1e-12, "error rose at k={k}: {prev} -> {err}");
            prev = err;
        }
    }

    #[test]
    fn k_bounds_are_enforced() {
        let cohort = small_cohort(4);
        assert!(matches!(
            pca_fit(&cohort, 4),
            Err(Error::KOutOfRange { k: 4, n: 4 })
        ));
        assert!(matches!(
            pca_fit(&cohort, 0),
            Err(Error::KOutOfRange { k: 0, n: 4 })
        ));
        assert!(pca_fit(&cohort[..1], 1).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let cohort = small_cohort(3);
        let model = pca_fit(&cohort, 2).unwrap();
        let other = ball([10, 10, 10], [4.5, 4.5, 4.5], 3.0);
        assert!(matches!(
            model.project(&other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn model_round_trips_through_container() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pca.flaprec");
        let cohort = small_cohort(5);
        let model = pca_fit(&cohort, 3).unwrap();
        model.save(&path).unwrap();
        let back = PcaModel::load(&path).unwrap();
        assert_eq!(back.k(), 3);
        assert_eq!(back.mean(), model.mean());
        assert_eq!(back.component(2), model.component(2));
        assert_eq!(back.geom(), model.geom());
    }
}
