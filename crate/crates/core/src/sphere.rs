//! Grids on the unit sphere.
//!
//! Grid density is an accuracy knob: set estimates computed on a grid are inner
//! approximations, and the grid should grow faster than the sample size for the
//! approximation error to vanish relative to sampling error.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum GridMeta {
    /// Normalized Gaussian draws; `seed` is recorded when known.
    Uniform { seed: Option<u64> },
    /// `φ_k = lo + kδ`, `k = 1..n_Q`, `q = (cos φ, sin φ)`.
    Polar { lo: f64, hi: f64, spacing: f64 },
    /// Points given explicitly.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct QGrid {
    pub points: Vec<DVector<f64>>,
    pub meta: GridMeta,
    /// Leading zero entries of every point.
    pub zero_count: usize,
}

impl QGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// Angular spacing of a polar grid.
    pub fn spacing(&self) -> Option<f64> {
        match self.meta {
            GridMeta::Polar { spacing, .. } => Some(spacing),
            _ => None,
        }
    }

    /// Polar angle of point `j` on a polar grid.
    pub fn angle(&self, j: usize) -> Option<f64> {
        match self.meta {
            GridMeta::Polar { lo, spacing, .. } => Some(lo + (j + 1) as f64 * spacing),
            _ => None,
        }
    }

    pub fn from_points(points: Vec<DVector<f64>>) -> Result<Self> {
        for q in &points {
            if (q.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("grid point with norm {}", q.norm())));
            }
        }
        Ok(Self { points, meta: GridMeta::Explicit, zero_count: 0 })
    }
}

/// `n_q` points `Z/‖Z‖` with `Z ~ N(0, I_n)`.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, n_q: usize, rng: &mut R) -> Result<QGrid> {
    if n == 0 || n_q == 0 {
        return Err(Error::InvalidInput("sphere grid needs n ≥ 1 and n_Q ≥ 1".into()));
    }
    let mut points = Vec::with_capacity(n_q);
    while points.len() < n_q {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        // a zero draw has probability zero but would not normalize
        if norm > 1e-300 {
            points.push(z / norm);
        }
    }
    Ok(QGrid { points, meta: GridMeta::Uniform { seed: None }, zero_count: 0 })
}

/// Uniform grid from the grid stream of `seed`.
pub fn sample_uniform_seeded(n: usize, n_q: usize, seed: u64) -> Result<QGrid> {
    let mut grid = sample_uniform(n, n_q, &mut rng::stream(seed, rng::tag::GRID, 0))?;
    grid.meta = GridMeta::Uniform { seed: Some(seed) };
    Ok(grid)
}

/// `n_q` equally spaced angles on `(lo, hi]`.
pub fn polar_grid_2d(n_q: usize, interval: (f64, f64)) -> Result<QGrid> {
    let (lo, hi) = interval;
    if n_q < 2 {
        return Err(Error::InvalidInput("polar grid needs at least two points".into()));
    }
    if !(hi > lo) || !(hi - lo).is_finite() {
        return Err(Error::InvalidInput(format!("degenerate angle interval ({lo}, {hi}]")));
    }
    if hi - lo > 2.0 * std::f64::consts::PI + 1e-12 {
        return Err(Error::InvalidInput("angle interval longer than 2π repeats points".into()));
    }
    let spacing = (hi - lo) / n_q as f64;
    let points = (1..=n_q)
        .map(|k| {
            let phi = lo + k as f64 * spacing;
            DVector::from_vec(vec![phi.cos(), phi.sin()])
        })
        .collect();
    Ok(QGrid { points, meta: GridMeta::Polar { lo, hi, spacing }, zero_count: 0 })
}

/// Pads each point of a grid on `𝕊^{n−z}` with `z` leading zeros.
pub fn embed_zero_restricted(grid: &QGrid, n: usize, z: usize) -> Result<QGrid> {
    if z >= n || grid.dim() + z != n {
        return Err(Error::InvalidInput(format!(
            "cannot embed a grid of dimension {} into R^{n} with {z} zeros",
            grid.dim()
        )));
    }
    let points = grid
        .points
        .iter()
        .map(|p| {
            let mut q = DVector::zeros(n);
            q.rows_mut(z, n - z).copy_from(p);
            q
        })
        .collect();
    Ok(QGrid { points, meta: grid.meta.clone(), zero_count: grid.zero_count + z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    #[test]
    fn uniform_points_are_unit() {
        let g = sample_uniform_seeded(5, 100, 1).unwrap();
        assert!(g.points.iter().all(|q| (q.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn uniform_moments_n4() {
        let g = sample_uniform_seeded(4, 20_000, 42).unwrap();
        let nq = g.len() as f64;
        let mean = g.points.iter().fold(DVector::zeros(4), |a, q| a + q) / nq;
        let cov = g.points.iter().fold(DMatrix::zeros(4, 4), |a, q| a + q * q.transpose()) / nq;
        assert!(mean.amax() < 0.02);
        assert!((cov - DMatrix::<f64>::identity(4, 4) * 0.25).amax() < 0.02);
    }

    #[test]
    fn uniform_is_deterministic() {
        let a = sample_uniform_seeded(3, 10, 9).unwrap();
        let b = sample_uniform_seeded(3, 10, 9).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn polar_spacing() {
        let g = polar_grid_2d(315, (-PI / 2.0, PI / 2.0)).unwrap();
        assert!((g.spacing().unwrap() - PI / 315.0).abs() < 1e-15);
        let g = polar_grid_2d(629, (-PI, PI)).unwrap();
        assert!((g.spacing().unwrap() - 2.0 * PI / 629.0).abs() < 1e-15);
        // (−π, π] ends at π and never revisits −π
        let last = g.points.last().unwrap();
        assert!((last[0] + 1.0).abs() < 1e-12);
        assert!((g.points[0][0] - (-PI + 2.0 * PI / 629.0).cos()).abs() < 1e-15);
        assert!(polar_grid_2d(10, (0.3, 0.3)).is_err());
    }

    #[test]
    fn embedding_pads_zeros() {
        let phi: f64 = 0.7;
        let g = QGrid::from_points(vec![DVector::from_vec(vec![phi.cos(), phi.sin()])]).unwrap();
        let e = embed_zero_restricted(&g, 4, 2).unwrap();
        assert_eq!(e.points[0].as_slice(), &[0.0, 0.0, phi.cos(), phi.sin()]);
        assert_eq!(e.zero_count, 2);
        let same = embed_zero_restricted(&g, 2, 0).unwrap();
        assert_eq!(same.points, g.points);
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(256))]

        #[test]
        fn grids_are_unit_and_embeddings_keep_zeros(n in 1usize..7, n_q in 2usize..300, z in 0usize..3, seed: u64) {
            let g = sample_uniform_seeded(n, n_q, seed).unwrap();
            proptest::prop_assert!(g.points.iter().all(|q| (q.norm() - 1.0).abs() < 1e-12));
            let e = embed_zero_restricted(&g, n + z, z).unwrap();
            proptest::prop_assert!(e.points.iter().all(|q| q.len() == n + z && q.rows(0, z).amax() == 0.0));
            let p = polar_grid_2d(n_q, (-PI, PI)).unwrap();
            proptest::prop_assert!(p.points.iter().all(|q| (q.norm() - 1.0).abs() < 1e-12));
        }
    }
}
