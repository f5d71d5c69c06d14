//! Sample objective `G(q)`, moment selection, and simulated critical values.
//!
//! With `ξ = √T D̂^{-1/2} S(q) φ̂_q` the objective is the squared `B̂`-distance
//! from `ξ` to the nonnegative orthant (equality rows carry no slack). Rows
//! with `ξ_j ≥ κ_T` are treated as slack when simulating `c^{α₁}(q)`.

pub mod nnls;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::restrictions::ReducedFormStack;
use crate::{rng, Error, Result};

pub use nnls::{mixed_min, nnls, NnlsSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `B̂ = I`; the minimization has a closed form.
    #[default]
    Identity,
    /// `B̂ = Ω̂^{-1}(q)`.
    InverseCorrelation,
}

/// `κ_T = 1.96 ln(ln T)`.
pub fn kappa(t: f64) -> f64 {
    1.96 * t.ln().ln()
}

/// Quantities computed at one `q` that the critical value reuses.
#[derive(Debug, Clone)]
pub struct MomentDiagnostics {
    /// `ξ̂_{j,T}` for the rows of `S(q)` that survive the `D̂` floor.
    pub xi: DVector<f64>,
    pub kappa: f64,
    /// Per kept row: inequality with `ξ < κ_T`, or any equality row.
    pub binding: Vec<bool>,
    /// Per kept row: inequality (true) or equality (false).
    pub inequality: Vec<bool>,
    /// Binding inequalities `r̂₁`.
    pub r1: usize,
    /// Slack inequalities `r̂₂`.
    pub r2: usize,
    /// `D̂_jj` for the kept rows.
    pub d: DVector<f64>,
    /// Rows of `S̃(q)` kept after the zero-row screen and the `D̂` floor.
    pub kept: Vec<usize>,
    /// `r(q)` before the `D̂` floor.
    pub rank: usize,
    /// Rows removed by the `D̂` floor.
    pub floored: usize,
    /// `Ω̂(q)` over the kept rows.
    pub omega: DMatrix<f64>,
    /// `Â'(q) = D̂^{-1/2}S(q)L̂` over the kept rows.
    pub a_prime: DMatrix<f64>,
}

impl MomentDiagnostics {
    fn empty(kappa: f64, m: usize, rank: usize, floored: usize) -> Self {
        Self {
            xi: DVector::zeros(0),
            kappa,
            binding: Vec::new(),
            inequality: Vec::new(),
            r1: 0,
            r2: 0,
            d: DVector::zeros(0),
            kept: Vec::new(),
            rank,
            floored,
            omega: DMatrix::zeros(0, 0),
            a_prime: DMatrix::zeros(0, m),
        }
    }

    pub fn n_equalities(&self) -> usize {
        self.inequality.iter().filter(|&&i| !i).count()
    }
}

/// `G(q)` and its diagnostics.
pub fn objective_g(
    stack: &ReducedFormStack,
    q: &DVector<f64>,
    scheme: WeightScheme,
) -> Result<(f64, MomentDiagnostics)> {
    let lambda = stack.lambda_qq.as_ref().ok_or(Error::MissingCovariance)?;
    let l_qq = stack.l_qq.as_ref().ok_or(Error::MissingCovariance)?;
    let t = stack.sample_size as f64;
    let kap = kappa(t);
    let m = stack.dim();
    let sel = stack.s_and_v(q, stack.zero_row_tol());
    let rank = sel.rank();
    if rank == 0 {
        return Ok((0.0, MomentDiagnostics::empty(kap, m, 0, 0)));
    }
    let sigma = &sel.s * lambda * sel.s.transpose();
    let d_all = sigma.diagonal();
    let d_max = d_all.max();
    let keep: Vec<usize> = (0..rank).filter(|&j| d_all[j] >= 1e-14 * d_max && d_all[j] > 0.0).collect();
    let floored = rank - keep.len();
    if floored > 0 {
        log::debug!("{floored} restriction rows dropped: D̂_jj below 1e-14·max");
    }
    if keep.is_empty() {
        return Ok((0.0, MomentDiagnostics::empty(kap, m, rank, floored)));
    }
    let s = sel.s.select_rows(&keep);
    let d = DVector::from_iterator(keep.len(), keep.iter().map(|&j| d_all[j]));
    let inv_sqrt_d = d.map(|v| 1.0 / v.sqrt());
    let sigma_k = sigma.select_rows(&keep).select_columns(&keep);
    let omega = DMatrix::from_fn(keep.len(), keep.len(), |i, j| sigma_k[(i, j)] * inv_sqrt_d[i] * inv_sqrt_d[j]);
    let xi = (&s * &stack.phi_q).component_mul(&inv_sqrt_d) * t.sqrt();
    let inequality: Vec<bool> = keep.iter().map(|&j| j < sel.n_inequalities).collect();
    let binding: Vec<bool> = (0..keep.len()).map(|j| !inequality[j] || xi[j] < kap).collect();
    let r1 = (0..keep.len()).filter(|&j| inequality[j] && binding[j]).count();
    let r2 = (0..keep.len()).filter(|&j| inequality[j] && !binding[j]).count();
    let mut a_prime = &s * l_qq;
    for (j, mut row) in a_prime.row_iter_mut().enumerate() {
        row *= inv_sqrt_d[j];
    }

    let g = match scheme {
        WeightScheme::Identity => closed_form(&xi, &inequality),
        WeightScheme::InverseCorrelation => {
            let b = inverse_spd(&omega)?;
            mixed_min(&xi, &b, &inequality)
        }
    };
    let kept = keep.iter().map(|&j| sel.kept[j]).collect();
    Ok((
        g,
        MomentDiagnostics { xi, kappa: kap, binding, inequality, r1, r2, d, kept, rank, floored, omega, a_prime },
    ))
}

/// Identity-weight objective: squared negative parts of inequality rows plus
/// squares of equality rows.
pub fn closed_form(x: &DVector<f64>, inequality: &[bool]) -> f64 {
    x.iter()
        .zip(inequality)
        .map(|(&v, &ineq)| if !ineq || v < 0.0 { v * v } else { 0.0 })
        .sum()
}

fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `G̃(q)` with equality rows; same as [`objective_g`] since the stack's
/// equality rows already enter without slack.
pub fn objective_g_eq(stack: &ReducedFormStack, q: &DVector<f64>, scheme: WeightScheme) -> Result<f64> {
    objective_g(stack, q, scheme).map(|(g, _)| g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueConfig {
    pub alpha1: f64,
    pub n_z: usize,
    pub seed: u64,
    /// One `m×n_Z` panel of standard normals reused at every grid point.
    pub share_draws: bool,
    /// Keep at most this many binding inequalities, those with the smallest `ξ̂`.
    pub cap_binding: Option<usize>,
}

impl Default for CriticalValueConfig {
    fn default() -> Self {
        Self { alpha1: 0.05, n_z: 1000, seed: 0, share_draws: true, cap_binding: None }
    }
}

impl CriticalValueConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha1 < 0.5) {
            return Err(Error::InvalidInput(format!("α₁ = {} outside (0, 1/2)", self.alpha1)));
        }
        if self.n_z == 0 {
            return Err(Error::InvalidInput("n_Z must be positive".into()));
        }
        if self.n_z < 100 {
            log::warn!("n_Z = {} draws give a noisy critical value", self.n_z);
        }
        Ok(())
    }

    /// Draw panel for grid point `index`; the shared panel ignores the index.
    pub fn panel(&self, m: usize, index: usize) -> DrawPanel {
        let stream = if self.share_draws { 0 } else { index as u64 + 1 };
        DrawPanel::new(m, self.n_z, self.seed, stream)
    }
}

/// `Z_m^{(1..n_Z)}` stored as an `m×n_Z` matrix.
#[derive(Debug, Clone)]
pub struct DrawPanel {
    pub z: DMatrix<f64>,
}

impl DrawPanel {
    pub fn new(m: usize, n_z: usize, seed: u64, stream: u64) -> Self {
        let mut r = rng::stream(seed, rng::tag::CRITICAL, stream);
        // column-major fill: draw j occupies column j
        let z = DMatrix::from_iterator(m, n_z, (0..m * n_z).map(|_| StandardNormal.sample(&mut r)));
        Self { z }
    }

    pub fn n_draws(&self) -> usize {
        self.z.ncols()
    }
}

/// Smallest draw whose rank is at least `⌈(1−α)n⌉`.
pub fn quantile_higher(values: &mut [f64], alpha: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let rank = (((1.0 - alpha) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

/// Rows of the diagnostics that enter `Ḡ`: binding inequalities (optionally
/// capped) followed by nothing else reordered.
pub fn selected_rows(diag: &MomentDiagnostics, cap: Option<usize>) -> Vec<usize> {
    let mut ineq: Vec<usize> = (0..diag.xi.len()).filter(|&j| diag.inequality[j] && diag.binding[j]).collect();
    if let Some(cap) = cap {
        if ineq.len() > cap {
            ineq.sort_by(|&a, &b| diag.xi[a].total_cmp(&diag.xi[b]));
            ineq.truncate(cap);
            ineq.sort_unstable();
        }
    }
    let mut rows = ineq;
    rows.extend((0..diag.xi.len()).filter(|&j| !diag.inequality[j]));
    rows.sort_unstable();
    rows
}

/// Simulated `Ḡ` draws for the selected rows.
pub fn simulate_gbar(
    diag: &MomentDiagnostics,
    scheme: WeightScheme,
    rows: &[usize],
    panel: &DrawPanel,
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Ok(vec![0.0; panel.n_draws()]);
    }
    let a_m = diag.a_prime.select_rows(rows);
    if a_m.ncols() != panel.z.nrows() {
        return Err(Error::InvalidInput(format!(
            "draw panel has dimension {}, stack has {}",
            panel.z.nrows(),
            a_m.ncols()
        )));
    }
    let x = &a_m * &panel.z;
    let ineq: Vec<bool> = rows.iter().map(|&j| diag.inequality[j]).collect();
    match scheme {
        WeightScheme::Identity => Ok(x.column_iter().map(|c| closed_form(&c.into_owned(), &ineq)).collect()),
        WeightScheme::InverseCorrelation => {
            let b = inverse_spd(&diag.omega)?.select_rows(rows).select_columns(rows);
            Ok(x.column_iter().map(|c| mixed_min(&c.into_owned(), &b, &ineq)).collect())
        }
    }
}

/// `c^{α₁}(q)`: the `1−α₁` quantile of `Ḡ` over the panel; 0 when nothing
/// is selected.
pub fn critical_value(
    diag: &MomentDiagnostics,
    scheme: WeightScheme,
    cfg: &CriticalValueConfig,
    panel: &DrawPanel,
) -> Result<f64> {
    let rows = selected_rows(diag, cfg.cap_binding);
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut draws = simulate_gbar(diag, scheme, &rows, panel)?;
    Ok(quantile_higher(&mut draws, cfg.alpha1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restrictions::{build_phi, RestrictionSet, Sign, SignRestriction};
    use crate::var_core::VarDgp;

    fn pos(variable: usize) -> SignRestriction {
        SignRestriction { variable, horizon: 0, sign: Sign::Positive, cumulative: false }
    }

    // one-row stack with φ = [φ₁], Λ = [λ]: ξ = √T φ₁ q₁/√(λ q₁²)
    fn scalar_stack(phi: f64, lambda: f64, t: usize) -> ReducedFormStack {
        let dgp = VarDgp::from_cholesky(vec![], DMatrix::from_element(1, 1, 1.0));
        let mut s = build_phi(&dgp, &RestrictionSet::new(vec![pos(0)]), t).unwrap();
        s.phi_q = DVector::from_element(1, phi);
        s.set_lambda_qq(DMatrix::from_element(1, 1, lambda)).unwrap();
        s
    }

    #[test]
    fn kappa_values() {
        assert!((kappa(100.0) - 2.99327).abs() < 1e-5);
        assert!((kappa(std::f64::consts::E.powf(std::f64::consts::E)) - 1.96).abs() < 1e-12);
        assert!(kappa(200.0) > kappa(100.0));
    }

    #[test]
    fn single_row_closed_form() {
        // ξ = √100 · (−0.2)/√1 = −2
        let stack = scalar_stack(-0.2, 1.0, 100);
        let q = DVector::from_element(1, 1.0);
        let (g, d) = objective_g(&stack, &q, WeightScheme::Identity).unwrap();
        assert!((d.xi[0] + 2.0).abs() < 1e-12);
        assert!((g - 4.0).abs() < 1e-12);
        assert_eq!(d.r1, 1);
        let (g2, _) = objective_g(&stack, &q, WeightScheme::InverseCorrelation).unwrap();
        assert!((g2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn feasible_point_has_zero_objective() {
        let stack = scalar_stack(0.3, 1.0, 100);
        let (g, d) = objective_g(&stack, &DVector::from_element(1, 1.0), WeightScheme::Identity).unwrap();
        assert_eq!(g, 0.0);
        // ξ = 3 ≥ κ_100 so nothing binds and c = 0
        assert_eq!(d.r1, 0);
        let cfg = CriticalValueConfig::default();
        assert_eq!(critical_value(&d, WeightScheme::Identity, &cfg, &cfg.panel(1, 0)).unwrap(), 0.0);
    }

    #[test]
    fn single_binding_row_critical_value() {
        let stack = scalar_stack(0.0, 1.0, 100);
        let (_, d) = objective_g(&stack, &DVector::from_element(1, 1.0), WeightScheme::Identity).unwrap();
        let cfg = CriticalValueConfig { n_z: 10_000, ..Default::default() };
        let c = critical_value(&d, WeightScheme::Identity, &cfg, &cfg.panel(1, 0)).unwrap();
        // 90th percentile of χ²₁; the quantile's sampling s.d. is about 0.07 here
        assert!((c - 2.705543).abs() < 0.15, "{c}");
    }

    #[test]
    fn two_independent_binding_rows() {
        let dgp = VarDgp::from_cholesky(vec![], DMatrix::identity(2, 2));
        let mut stack = build_phi(&dgp, &RestrictionSet::new(vec![pos(0), pos(1)]), 100).unwrap();
        // φ = [Σ11, Σ21, Σ22] at zero, Λ = I: with q = e1 rows are independent
        stack.phi_q = DVector::zeros(3);
        stack.set_lambda_qq(DMatrix::identity(3, 3)).unwrap();
        let q = DVector::from_vec(vec![1.0, 0.0]);
        let (_, d) = objective_g(&stack, &q, WeightScheme::Identity).unwrap();
        assert_eq!(d.r1, 2);
        let cfg = CriticalValueConfig { n_z: 20_000, seed: 8, ..Default::default() };
        let c = critical_value(&d, WeightScheme::Identity, &cfg, &cfg.panel(3, 0)).unwrap();
        // oracle: 10⁶ direct draws of Z₁²1{Z₁<0} + Z₂²1{Z₂<0}
        let mut r = rng::stream(99, 77, 0);
        let mut sims: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut r);
                let b: f64 = StandardNormal.sample(&mut r);
                a.min(0.0).powi(2) + b.min(0.0).powi(2)
            })
            .collect();
        let oracle = quantile_higher(&mut sims, 0.05);
        // above the one-row mixture quantile, below the χ²₂ 0.95 quantile
        assert!(c > 2.705 && c < 5.991, "{c}");
        assert!((c - oracle).abs() < 0.15, "{c} vs {oracle}");
    }

    #[test]
    fn equality_row_without_inequalities() {
        let dgp = VarDgp::from_cholesky(vec![], DMatrix::from_element(1, 1, 1.0));
        let mut r = RestrictionSet::new(vec![]);
        r.equalities.push(crate::restrictions::EqualityRestriction { variable: 0, horizon: 0, cumulative: false });
        let layout =
            crate::restrictions::StackLayout::new(&r, 1, 0, crate::restrictions::Purpose::Bayesian).unwrap();
        let mut stack = ReducedFormStack::from_layout(layout, &dgp, 100).unwrap();
        stack.phi_q = DVector::from_element(1, 0.15);
        stack.set_lambda_qq(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let q = DVector::from_element(1, 1.0);
        let g = objective_g_eq(&stack, &q, WeightScheme::Identity).unwrap();
        assert!((g - 2.25).abs() < 1e-12);
        let g2 = objective_g_eq(&stack, &q, WeightScheme::InverseCorrelation).unwrap();
        assert!((g2 - 2.25).abs() < 1e-12);
    }

    #[test]
    fn missing_covariance_is_an_error() {
        let dgp = VarDgp::from_cholesky(vec![], DMatrix::from_element(1, 1, 1.0));
        let stack = build_phi(&dgp, &RestrictionSet::new(vec![pos(0)]), 100).unwrap();
        assert!(matches!(
            objective_g(&stack, &DVector::from_element(1, 1.0), WeightScheme::Identity),
            Err(Error::MissingCovariance)
        ));
    }

    #[test]
    fn higher_quantile_convention() {
        let mut v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(quantile_higher(&mut v, 0.05), 19.0);
        let mut v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_higher(&mut v, 0.25), 8.0);
    }
}
