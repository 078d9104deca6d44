//! Connected-component extraction on binary masks.

use serde::{Deserialize, Serialize};

use crate::grid::SkullMask;

/// Voxel neighborhood used for connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Default for Connectivity {
    fn default() -> Self {
        Connectivity::TwentySix
    }
}

impl Connectivity {
    fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nonzero = dz.abs() + dy.abs() + dx.abs();
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => (1..=2).contains(&nonzero),
                        Connectivity::TwentySix => nonzero >= 1,
                    };
                    if keep {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

/// Result of [`largest_component`]. An empty input is not an error; it is
/// reported through `input_empty`.
#[derive(Debug, Clone)]
pub struct ComponentExtraction {
    pub mask: SkullMask,
    pub component_count: usize,
    pub kept_voxels: usize,
    pub input_empty: bool,
}

/// Keep only the largest connected foreground component.
///
/// Components are discovered by scanning voxels in lexicographic `(z, y, x)`
/// order, so a size tie is deterministically broken in favor of the component
/// containing the lexicographically smallest voxel.
pub fn largest_component(mask: &SkullMask, connectivity: Connectivity) -> ComponentExtraction {
    let geom = mask.geom().clone();
    let [d, h, w] = geom.dims;
    let n = geom.voxel_count();
    let offsets = connectivity.offsets();

    let mut visited = vec![false; n];
    let mut component_count = 0usize;
    let mut best: Option<(usize, Vec<usize>)> = None; // (size, voxels)
    let mut queue = Vec::new();

    for start in 0..n {
        if mask.data()[start] == 0 || visited[start] {
            continue;
        }
        component_count += 1;
        let mut voxels = Vec::new();
        visited[start] = true;
        queue.push(start);
        while let Some(i) = queue.pop() {
            voxels.push(i);
            let [z, y, x] = geom.coords(i);
            for off in &offsets {
                let nz = z as i64 + off[0];
                let ny = y as i64 + off[1];
                let nx = x as i64 + off[2];
                if nz < 0 || ny < 0 || nx < 0 {
                    continue;
                }
                let (nz, ny, nx) = (nz as usize, ny as usize, nx as usize);
                if nz >= d || ny >= h || nx >= w {
                    continue;
                }
                let j = geom.index(nz, ny, nx);
                if mask.data()[j] == 1 && !visited[j] {
                    visited[j] = true;
                    queue.push(j);
                }
            }
        }
        // Strict inequality keeps the earlier (lexicographically smaller
        // seed) component on ties.
        if best.as_ref().map_or(true, |(sz, _)| voxels.len() > *sz) {
            best = Some((voxels.len(), voxels));
        }
    }

    match best {
        Some((size, voxels)) => {
            let mut out = SkullMask::zeros(geom);
            for i in voxels {
                out.data_mut()[i] = 1;
            }
            ComponentExtraction {
                mask: out,
                component_count,
                kept_voxels: size,
                input_empty: false,
            }
        }
        None => ComponentExtraction {
            mask: SkullMask::zeros(geom),
            component_count: 0,
            kept_voxels: 0,
            input_empty: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeom;
    use rand::Rng;

    fn mask_from_coords(dims: [usize; 3], coords: &[[usize; 3]]) -> SkullMask {
        let mut m = SkullMask::zeros(GridGeom::isotropic(dims, 1.0).unwrap());
        for &[z, y, x] in coords {
            m.set(z, y, x, 1);
        }
        m
    }

    #[test]
    fn cube_beats_isolated_voxel() {
        let g = GridGeom::isotropic([10, 10, 10], 1.0).unwrap();
        let m = SkullMask::from_fn(g, |[z, y, x]| {
            (z < 5 && y < 5 && x < 5) || (z == 9 && y == 9 && x == 9)
        });
        let res = largest_component(&m, Connectivity::TwentySix);
        assert_eq!(res.component_count, 2);
        assert_eq!(res.kept_voxels, 125);
        assert_eq!(res.mask.get(9, 9, 9), 0);
        assert_eq!(res.mask.get(0, 0, 0), 1);
    }

    #[test]
    fn single_component_is_unchanged() {
        let m = mask_from_coords([4, 4, 4], &[[1, 1, 1], [1, 1, 2], [1, 2, 2]]);
        let res = largest_component(&m, Connectivity::Six);
        assert_eq!(res.mask, m);
        assert_eq!(res.component_count, 1);
        assert!(!res.input_empty);
    }

    #[test]
    fn tie_goes_to_lexicographically_first_seed() {
        // Two disjoint 2^3 cubes of equal size.
        let g = GridGeom::isotropic([8, 8, 8], 1.0).unwrap();
        let m = SkullMask::from_fn(g, |[z, y, x]| {
            let in_a = (4..6).contains(&z) && (0..2).contains(&y) && (0..2).contains(&x);
            let in_b = (0..2).contains(&z) && (4..6).contains(&y) && (4..6).contains(&x);
            in_a || in_b
        });
        let res = largest_component(&m, Connectivity::TwentySix);
        // Cube B contains (0,4,4), lexicographically before (4,0,0).
        assert_eq!(res.mask.get(0, 4, 4), 1);
        assert_eq!(res.mask.get(4, 0, 0), 0);
    }

    #[test]
    fn empty_input_is_flagged_not_an_error() {
        let m = SkullMask::zeros(GridGeom::isotropic([3, 3, 3], 1.0).unwrap());
        let res = largest_component(&m, Connectivity::TwentySix);
        assert!(res.input_empty);
        assert!(res.mask.is_empty());
        assert_eq!(res.component_count, 0);
    }

    /// Reference oracle: label every component with an independent
    /// stack-based flood fill over explicit coordinate sets, then pick the
    /// winner by (size, then smallest seed index).
    fn oracle_largest(mask: &SkullMask, connectivity: Connectivity) -> SkullMask {
        let geom = mask.geom().clone();
        let fg: Vec<usize> = (0..geom.voxel_count())
            .filter(|&i| mask.data()[i] == 1)
            .collect();
        let mut remaining: std::collections::BTreeSet<usize> = fg.iter().copied().collect();
        let mut best: Option<(usize, usize, Vec<usize>)> = None; // (size, seed, voxels)
        while let Some(&seed) = remaining.iter().next() {
            let mut comp = vec![seed];
            remaining.remove(&seed);
            let mut stack = vec![seed];
            while let Some(i) = stack.pop() {
                let [z, y, x] = geom.coords(i);
                let neighbors: Vec<usize> = remaining
                    .iter()
                    .copied()
                    .filter(|&j| {
                        let [nz, ny, nx] = geom.coords(j);
                        let dz = (nz as i64 - z as i64).abs();
                        let dy = (ny as i64 - y as i64).abs();
                        let dx = (nx as i64 - x as i64).abs();
                        if dz > 1 || dy > 1 || dx > 1 {
                            return false;
                        }
                        match connectivity {
                            Connectivity::Six => dz + dy + dx == 1,
                            Connectivity::Eighteen => (1..=2).contains(&(dz + dy + dx)),
                            Connectivity::TwentySix => dz + dy + dx >= 1,
                        }
                    })
                    .collect();
                for j in neighbors {
                    remaining.remove(&j);
                    comp.push(j);
                    stack.push(j);
                }
            }
            let replace = match &best {
                None => true,
                Some((sz, sd, _)) => comp.len() > *sz || (comp.len() == *sz && seed < *sd),
            };
            if replace {
                best = Some((comp.len(), seed, comp));
            }
        }
        let mut out = SkullMask::zeros(geom);
        if let Some((_, _, voxels)) = best {
            for i in voxels {
                out.data_mut()[i] = 1;
            }
        }
        out
    }

    #[test]
    fn matches_flood_fill_oracle_on_random_masks() {
        let mut rng = crate::rng::stream(2024);
        for conn in [
            Connectivity::Six,
            Connectivity::Eighteen,
            Connectivity::TwentySix,
        ] {
            for _ in 0..40 {
                let g = GridGeom::isotropic([6, 6, 6], 1.0).unwrap();
                let m = SkullMask::from_fn(g, |_| rng.gen_bool(0.25));
                let ours = largest_component(&m, conn);
                let expect = oracle_largest(&m, conn);
                assert_eq!(ours.mask, expect, "connectivity {conn:?}");
            }
        }
    }
}
