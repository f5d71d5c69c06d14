//! `min_{ν ≥ 0} (y − ν)ᵀB(y − ν)` by the Lawson–Hanson active-set method.
//!
//! Working on the quadratic form directly: with `ν_Z = 0` the free block solves
//! `B_PP ν_P = (By)_P`, and the dual vector is `w = B(y − ν)`. At the optimum
//! `w_P = 0` and `w_Z ≤ 0`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub nu: DVector<f64>,
    pub value: f64,
    /// Largest KKT violation: `|w_i|` on the free set, `max(w_i, 0)` elsewhere.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Checks symmetry and positive definiteness of `B`.
pub fn check_spd(b: &DMatrix<f64>) -> Result<()> {
    if !b.is_square() {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = b.amax().max(f64::MIN_POSITIVE);
    if (b - b.transpose()).amax() > 1e-10 * scale {
        return Err(Error::NotPositiveDefinite);
    }
    if b.nrows() > 0 && b.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// Solves the problem after validating `B`.
pub fn nnls(y: &DVector<f64>, b: &DMatrix<f64>) -> Result<NnlsSolution> {
    if b.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "weight is {}×{} but target has length {}",
            b.nrows(),
            b.ncols(),
            y.len()
        )));
    }
    check_spd(b)?;
    Ok(nnls_unchecked(y, b))
}

fn quad(y: &DVector<f64>, nu: &DVector<f64>, b: &DMatrix<f64>) -> f64 {
    let d = y - nu;
    d.dot(&(b * &d)).max(0.0)
}

fn solve_free(b: &DMatrix<f64>, by: &DVector<f64>, free: &[usize]) -> Option<DVector<f64>> {
    let sub = b.select_rows(free).select_columns(free);
    let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| by[i]));
    sub.cholesky().map(|c| c.solve(&rhs))
}

/// Solves the problem assuming `B` is symmetric positive definite.
pub fn nnls_unchecked(y: &DVector<f64>, b: &DMatrix<f64>) -> NnlsSolution {
    let k = y.len();
    if k == 0 {
        return NnlsSolution { nu: DVector::zeros(0), value: 0.0, kkt_residual: 0.0, iterations: 0 };
    }
    if y.iter().all(|&v| v >= 0.0) {
        return NnlsSolution { nu: y.clone(), value: 0.0, kkt_residual: 0.0, iterations: 0 };
    }
    let by = b * y;
    let tol = 1e-10 * (1.0 + by.amax());
    let mut nu = DVector::zeros(k);
    let mut in_p = vec![false; k];
    let mut iterations = 0;
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        let w = &by - b * &nu;
        let candidate = (0..k)
            .filter(|&i| !in_p[i] && w[i] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        in_p[j] = true;

        // inner loop removes at least one free index per pass
        for _ in 0..=k {
            iterations += 1;
            let free: Vec<usize> = (0..k).filter(|&i| in_p[i]).collect();
            let Some(s_free) = solve_free(b, &by, &free) else { break };
            if s_free.iter().all(|&v| v > 0.0) {
                nu.fill(0.0);
                for (idx, &i) in free.iter().enumerate() {
                    nu[i] = s_free[idx];
                }
                break;
            }
            // step toward s until the first free coordinate hits zero
            let mut alpha = f64::INFINITY;
            for (idx, &i) in free.iter().enumerate() {
                if s_free[idx] <= 0.0 {
                    let denom = nu[i] - s_free[idx];
                    if denom > 0.0 {
                        alpha = alpha.min(nu[i] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            let zero_tol = 1e-15 * (1.0 + y.amax());
            for (idx, &i) in free.iter().enumerate() {
                nu[i] += alpha * (s_free[idx] - nu[i]);
                if nu[i] <= zero_tol {
                    nu[i] = 0.0;
                    in_p[i] = false;
                }
            }
            if !in_p.iter().any(|&f| f) {
                break;
            }
        }
    }

    let w = &by - b * &nu;
    let kkt_residual = (0..k)
        .map(|i| if nu[i] > 0.0 { w[i].abs() } else { w[i].max(0.0) })
        .fold(0.0, f64::max);
    NnlsSolution { value: quad(y, &nu, b), nu, kkt_residual, iterations }
}

/// `min (x − [ν; 0])ᵀB(x − [ν; 0])` over `ν ≥ 0`, where `ν` runs over the
/// coordinates flagged in `constrained` and the others carry no slack.
///
/// With `I` the constrained and `E` the free coordinates this equals
/// `nnls(x_I + B_II⁻¹B_IE x_E, B_II) + x_Eᵀ(B_EE − B_EI B_II⁻¹ B_IE)x_E`.
pub fn mixed_min(x: &DVector<f64>, b: &DMatrix<f64>, constrained: &[bool]) -> f64 {
    let ineq: Vec<usize> = (0..x.len()).filter(|&i| constrained[i]).collect();
    let eq: Vec<usize> = (0..x.len()).filter(|&i| !constrained[i]).collect();
    if eq.is_empty() {
        return nnls_unchecked(x, b).value;
    }
    let x_e = DVector::from_iterator(eq.len(), eq.iter().map(|&i| x[i]));
    let b_ee = b.select_rows(&eq).select_columns(&eq);
    if ineq.is_empty() {
        return x_e.dot(&(&b_ee * &x_e)).max(0.0);
    }
    let x_i = DVector::from_iterator(ineq.len(), ineq.iter().map(|&i| x[i]));
    let b_ii = b.select_rows(&ineq).select_columns(&ineq);
    let b_ie = b.select_rows(&ineq).select_columns(&eq);
    let chol = b_ii.clone().cholesky().expect("principal submatrix of an SPD matrix");
    let shift = chol.solve(&(&b_ie * &x_e));
    let schur = &b_ee - b_ie.transpose() * chol.solve(&b_ie);
    nnls_unchecked(&(x_i + shift), &b_ii).value + x_e.dot(&(schur * &x_e)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn feasible_target_is_its_own_projection() {
        let y = DVector::from_vec(vec![0.5, 2.0, 0.0]);
        let s = nnls(&y, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.nu, y);
    }

    #[test]
    fn separable_negative_part() {
        let s = nnls(&DVector::from_vec(vec![-2.0, 3.0]), &DMatrix::identity(2, 2)).unwrap();
        assert!((s.value - 4.0).abs() < 1e-14);
        assert!((s.nu - DVector::from_vec(vec![0.0, 3.0])).amax() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_weight() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(nnls(&DVector::from_vec(vec![-1.0, 1.0]), &b), Err(Error::NotPositiveDefinite)));
    }

    fn random_spd(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(k, k) * 0.2
    }

    // coordinate-wise grid search over [0, 10]^3 at step 1e-3 is 1e12 points,
    // so refine: coarse grid at step 0.05, then two local passes at 1e-3
    fn grid_min(y: &DVector<f64>, b: &DMatrix<f64>) -> f64 {
        let f = |v: &[f64; 3]| {
            let d = [y[0] - v[0], y[1] - v[1], y[2] - v[2]];
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += d[i] * b[(i, j)] * d[j];
                }
            }
            acc
        };
        let mut best = ([0.0; 3], f64::INFINITY);
        let coarse: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        for &a in &coarse {
            for &c in &coarse {
                for &e in &coarse {
                    let v = [a, c, e];
                    let val = f(&v);
                    if val < best.1 {
                        best = (v, val);
                    }
                }
            }
        }
        for step in [1e-3, 1e-4] {
            let centre = best.0;
            let span = if step == 1e-3 { 60 } else { 20 };
            for i in -span..=span {
                for j in -span..=span {
                    for l in -span..=span {
                        let v = [
                            (centre[0] + i as f64 * step).clamp(0.0, 10.0),
                            (centre[1] + j as f64 * step).clamp(0.0, 10.0),
                            (centre[2] + l as f64 * step).clamp(0.0, 10.0),
                        ];
                        let val = f(&v);
                        if val < best.1 {
                            best = (v, val);
                        }
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn matches_grid_search_in_three_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let b = random_spd(3, &mut rng);
            let y = DVector::from_fn(3, |_, _| rng.random_range(-3.0..4.0));
            let s = nnls(&y, &b).unwrap();
            let g = grid_min(&y, &b);
            assert!(s.value <= g + 1e-10);
            assert!((s.value - g).abs() < 1e-4, "{} vs {}", s.value, g);
            assert!(s.kkt_residual < 1e-8);
        }
    }

    #[test]
    fn kkt_holds_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let k = rng.random_range(1..=8);
            let b = random_spd(k, &mut rng);
            let y = DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0));
            let s = nnls(&y, &b).unwrap();
            assert!(s.nu.iter().all(|&v| v >= 0.0));
            assert!(s.kkt_residual < 1e-8 * (1.0 + (&b * &y).amax()), "{}", s.kkt_residual);
        }
    }

    #[test]
    fn mixed_reduces_to_quadratic_without_inequalities() {
        let x = DVector::from_vec(vec![1.5]);
        assert!((mixed_min(&x, &DMatrix::identity(1, 1), &[false]) - 2.25).abs() < 1e-15);
    }

    #[test]
    fn mixed_matches_direct_minimization() {
        // one inequality, one equality coordinate: minimize over ν ≥ 0 by a fine scan
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.0]);
        let x = DVector::from_vec(vec![-0.4, 1.1]);
        let direct = (0..=100_000)
            .map(|i| {
                let d = &x - DVector::from_vec(vec![i as f64 * 1e-4, 0.0]);
                d.dot(&(&b * &d))
            })
            .fold(f64::INFINITY, f64::min);
        assert!((mixed_min(&x, &b, &[true, false]) - direct).abs() < 1e-6);
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(256))]

        #[test]
        fn kkt_holds_and_beats_every_face_start(
            entries in proptest::collection::vec(-1.0f64..1.0, 36),
            y in proptest::collection::vec(-3.0f64..3.0, 6),
            m in 1usize..=6,
        ) {
            let a = DMatrix::from_fn(m, m, |r, c| entries[r * 6 + c]);
            let b = &a * a.transpose() + DMatrix::identity(m, m) * 0.05;
            let y = DVector::from_column_slice(&y[..m]);
            let sol = nnls(&y, &b).unwrap();
            proptest::prop_assert!(sol.nu.iter().all(|&v| v >= 0.0));
            proptest::prop_assert!(sol.kkt_residual <= 1e-8 * (1.0 + y.amax() * b.amax()));
            // no worse than ν = 0 or ν = max(y, 0)
            proptest::prop_assert!(sol.value <= quad(&y, &DVector::zeros(m), &b) + 1e-10);
            proptest::prop_assert!(sol.value <= quad(&y, &y.map(|v| v.max(0.0)), &b) + 1e-10);
        }
    }
}
