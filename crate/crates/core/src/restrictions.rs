//! Restriction schema and the reduced-form stack `φ_q`.
//!
//! Each sign (or equality) restriction is a linear function `±a_jᵀq` of the
//! rotation vector, where `a_j` is a row of `C_hΣ_tr` (or of its cumulative
//! sum). Rows that share a coefficient row share a block of `φ_q`; entries that
//! are zero by construction are left out. Those are the upper triangle of
//! `Σ_tr` on impact and the leading `z` columns fixed by zero restrictions.
//! `S̃(q)` then places the entries of `q` so that `S̃(q)φ_q` reproduces the
//! signed responses.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::var_core::{check_unit, ReducedFormParams, VmaCoefficients};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    #[serde(alias = ">=0", alias = "+", alias = "nonnegative")]
    Positive,
    #[serde(alias = "<=0", alias = "-", alias = "nonpositive")]
    Negative,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Response of `variable` (0-based) at `horizon` has the given sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignRestriction {
    pub variable: usize,
    pub horizon: usize,
    pub sign: Sign,
    #[serde(default)]
    pub cumulative: bool,
}

/// Response of `variable` at `horizon` equals zero; enters the
/// equality-augmented objective only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualityRestriction {
    pub variable: usize,
    pub horizon: usize,
    #[serde(default)]
    pub cumulative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Irf,
    CumulativeIrf,
    /// Share of the one-step-ahead forecast error variance; horizon must be 0.
    VarianceShare,
}

/// Scalar object of inference `θ = f(φ_θ, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaTarget {
    pub kind: TargetKind,
    pub variable: usize,
    pub horizon: usize,
    /// Parameter space `Θ`; `None` means the natural range of the kind.
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
}

impl ThetaTarget {
    pub fn irf(variable: usize, horizon: usize) -> Self {
        Self { kind: TargetKind::Irf, variable, horizon, bounds: None }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    fn natural_bounds(&self) -> (f64, f64) {
        match self.kind {
            TargetKind::VarianceShare => (0.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn cumulative(&self) -> bool {
        self.kind == TargetKind::CumulativeIrf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Moment-inequality inference; needs at least one inequality.
    Frequentist,
    /// Posterior sampling; an empty restriction set is legal.
    Bayesian,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RestrictionSet {
    pub signs: Vec<SignRestriction>,
    /// Leading entries of `q` fixed at zero, i.e. no impact response of the
    /// first `zero_count` variables.
    #[serde(default)]
    pub zero_count: usize,
    #[serde(default)]
    pub equalities: Vec<EqualityRestriction>,
    #[serde(default)]
    pub targets: Vec<ThetaTarget>,
}

/// `(variable, horizon, cumulative)` after collapsing cumulative sums that
/// coincide with the plain response.
type ResponseKey = (usize, usize, bool);

fn canonical(variable: usize, horizon: usize, cumulative: bool, p: usize) -> ResponseKey {
    if cumulative && (horizon == 0 || p == 0) {
        (variable, 0, false)
    } else {
        (variable, horizon, cumulative)
    }
}

impl RestrictionSet {
    pub fn new(signs: Vec<SignRestriction>) -> Self {
        Self { signs, ..Default::default() }
    }

    pub fn with_zero_count(mut self, z: usize) -> Self {
        self.zero_count = z;
        self
    }

    pub fn with_targets(mut self, targets: Vec<ThetaTarget>) -> Self {
        self.targets = targets;
        self
    }

    pub fn validate(&self, n: usize, p: usize, purpose: Purpose) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidRestriction(msg));
        let z = self.zero_count;
        if z >= n {
            return bad(format!("{z} zero restrictions leave no free direction for n={n}"));
        }
        if purpose == Purpose::Frequentist && self.signs.is_empty() {
            return bad("at least one sign restriction is required".into());
        }
        let mut seen: HashMap<ResponseKey, Option<Sign>> = HashMap::new();
        let check_response = |variable: usize, horizon: usize, cumulative: bool| -> Result<ResponseKey> {
            if variable >= n {
                return Err(Error::InvalidRestriction(format!(
                    "variable {} out of range 1..={n}",
                    variable + 1
                )));
            }
            if p == 0 && horizon > 0 && !cumulative {
                return Err(Error::InvalidRestriction(format!(
                    "response of variable {} at horizon {horizon} is identically zero in a VAR(0)",
                    variable + 1
                )));
            }
            let key = canonical(variable, horizon, cumulative, p);
            if key.1 == 0 && !key.2 && variable < z {
                return Err(Error::InvalidRestriction(format!(
                    "impact response of variable {} is zero under the zero restrictions",
                    variable + 1
                )));
            }
            Ok(key)
        };
        for s in &self.signs {
            let key = check_response(s.variable, s.horizon, s.cumulative)?;
            match seen.insert(key, Some(s.sign)) {
                Some(Some(prev)) if prev != s.sign => {
                    return bad(format!(
                        "opposing sign restrictions on variable {} at horizon {}; use a zero restriction",
                        s.variable + 1,
                        s.horizon
                    ))
                }
                Some(_) => {
                    return bad(format!(
                        "duplicate restriction on variable {} at horizon {}",
                        s.variable + 1,
                        s.horizon
                    ))
                }
                None => {}
            }
        }
        for e in &self.equalities {
            let key = check_response(e.variable, e.horizon, e.cumulative)?;
            if seen.insert(key, None).is_some() {
                return bad(format!(
                    "variable {} at horizon {} is restricted twice",
                    e.variable + 1,
                    e.horizon
                ));
            }
        }
        for t in &self.targets {
            if t.variable >= n {
                return bad(format!("target variable {} out of range 1..={n}", t.variable + 1));
            }
            if t.kind == TargetKind::VarianceShare && t.horizon != 0 {
                return bad("variance-share targets are defined on impact only (horizon 0)".into());
            }
            if let Some((lo, hi)) = t.bounds {
                if !(lo <= hi) {
                    return bad(format!("empty parameter space [{lo}, {hi}]"));
                }
            }
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> usize {
        let s = self.signs.iter().map(|s| s.horizon);
        let e = self.equalities.iter().map(|e| e.horizon);
        let t = self.targets.iter().map(|t| t.horizon);
        s.chain(e).chain(t).max().unwrap_or(0)
    }

    /// `Θ` for a target: explicit bounds intersected with the natural range
    /// and with any sign restriction imposed on the same response.
    pub fn target_bounds(&self, target: &ThetaTarget, p: usize) -> (f64, f64) {
        let (mut lo, mut hi) = target.natural_bounds();
        if let Some((a, b)) = target.bounds {
            lo = lo.max(a);
            hi = hi.min(b);
        }
        if target.kind != TargetKind::VarianceShare {
            let key = canonical(target.variable, target.horizon, target.cumulative(), p);
            for s in &self.signs {
                if canonical(s.variable, s.horizon, s.cumulative, p) == key {
                    match s.sign {
                        Sign::Positive => lo = lo.max(0.0),
                        Sign::Negative => hi = hi.min(0.0),
                    }
                }
            }
        }
        (lo, hi)
    }
}

/// Effective sphere dimension `n − z` of the restricted domain.
pub fn restricted_domain_dim(n: usize, zero_count: usize) -> Result<usize> {
    if zero_count >= n {
        return Err(Error::InvalidRestriction(format!(
            "{zero_count} zero restrictions leave no free direction for n={n}"
        )));
    }
    Ok(n - zero_count)
}

/// One coefficient row `a` of `C_hΣ_tr` (or its cumulative sum) restricted to
/// the columns that are not zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub variable: usize,
    pub horizon: usize,
    pub cumulative: bool,
    /// Columns of `q` the block multiplies.
    pub cols: Vec<usize>,
    /// Position of the first entry in `φ_q`.
    pub offset: usize,
}

/// One row of `S̃(q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowSpec {
    pub block: usize,
    pub sign: f64,
    pub equality: bool,
}

/// Restriction-derived structure of `φ_q`, independent of the data.
#[derive(Debug, Clone)]
pub struct StackLayout {
    pub n: usize,
    pub p: usize,
    pub zero_count: usize,
    pub blocks: Vec<Block>,
    /// Inequality rows first, then equality rows.
    pub rows: Vec<RowSpec>,
    pub targets: Vec<ThetaTarget>,
    pub target_bounds: Vec<(f64, f64)>,
    pub max_horizon: usize,
}

impl StackLayout {
    pub fn new(restr: &RestrictionSet, n: usize, p: usize, purpose: Purpose) -> Result<Self> {
        restr.validate(n, p, purpose)?;
        let z = restr.zero_count;
        let mut blocks: Vec<Block> = Vec::new();
        let mut index: HashMap<ResponseKey, usize> = HashMap::new();
        let mut m = 0;
        let mut block_for = |variable: usize, horizon: usize, cumulative: bool| -> usize {
            let key = canonical(variable, horizon, cumulative, p);
            *index.entry(key).or_insert_with(|| {
                let (variable, horizon, cumulative) = key;
                // impact rows of Σ_tr vanish right of the diagonal
                let last = if horizon == 0 { variable } else { n - 1 };
                let cols: Vec<usize> = (z..=last).collect();
                let width = cols.len();
                blocks.push(Block { variable, horizon, cumulative, cols, offset: m });
                m += width;
                blocks.len() - 1
            })
        };
        let mut rows = Vec::new();
        for s in &restr.signs {
            let block = block_for(s.variable, s.horizon, s.cumulative);
            rows.push(RowSpec { block, sign: s.sign.factor(), equality: false });
        }
        for e in &restr.equalities {
            let block = block_for(e.variable, e.horizon, e.cumulative);
            rows.push(RowSpec { block, sign: 1.0, equality: true });
        }
        let target_bounds = restr.targets.iter().map(|t| restr.target_bounds(t, p)).collect();
        Ok(Self {
            n,
            p,
            zero_count: z,
            blocks,
            rows,
            targets: restr.targets.clone(),
            target_bounds,
            max_horizon: restr.max_horizon(),
        })
    }

    /// `m = dim(φ_q)`.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.cols.len()).sum()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_inequalities(&self) -> usize {
        self.rows.iter().filter(|r| !r.equality).count()
    }

    /// `S̃(q)φ`.
    pub fn responses(&self, phi: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| {
                let b = &self.blocks[row.block];
                row.sign * b.cols.iter().enumerate().map(|(k, &c)| q[c] * phi[b.offset + k]).sum::<f64>()
            }),
        )
    }

    /// Every inequality row of `S̃(q)φ` is nonnegative and every equality row
    /// vanishes up to rounding.
    pub fn satisfies(&self, phi: &DVector<f64>, q: &DVector<f64>) -> bool {
        let tol = 1e-10 * (1.0 + phi.norm());
        self.responses(phi, q)
            .iter()
            .zip(&self.rows)
            .all(|(v, row)| if row.equality { v.abs() <= tol } else { *v >= 0.0 })
    }

    /// `(φ_q, [φ_θ])` at the given reduced-form parameters.
    pub fn phi<P: ReducedFormParams + ?Sized>(&self, params: &P) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        if params.dim() != self.n || params.lag_matrices().len() != self.p {
            return Err(Error::InvalidInput(format!(
                "layout built for n={}, p={}; parameters have n={}, p={}",
                self.n,
                self.p,
                params.dim(),
                params.lag_matrices().len()
            )));
        }
        let vma = params.vma(self.max_horizon);
        let sigma_tr = params.sigma_tr();
        let response_rows = ResponseRows { vma: &vma, sigma_tr };
        let mut phi_q = DVector::zeros(self.dim());
        for b in &self.blocks {
            let row = response_rows.row(b.variable, b.horizon, b.cumulative);
            for (k, &c) in b.cols.iter().enumerate() {
                phi_q[b.offset + k] = row[c];
            }
        }
        let phi_theta = self
            .targets
            .iter()
            .map(|t| match t.kind {
                TargetKind::VarianceShare => sigma_tr.row(t.variable).transpose(),
                kind => response_rows.row(t.variable, t.horizon, kind == TargetKind::CumulativeIrf),
            })
            .collect();
        Ok((phi_q, phi_theta))
    }
}

struct ResponseRows<'a> {
    vma: &'a VmaCoefficients,
    sigma_tr: &'a DMatrix<f64>,
}

impl ResponseRows<'_> {
    fn row(&self, variable: usize, horizon: usize, cumulative: bool) -> DVector<f64> {
        let c = if cumulative {
            self.vma.cumulative(horizon)
        } else {
            self.vma.get(horizon).clone()
        };
        (c.row(variable) * self.sigma_tr).transpose()
    }
}

/// Reduced-form vectors and, once bootstrapped, their covariances.
#[derive(Debug, Clone)]
pub struct TargetStack {
    pub target: ThetaTarget,
    pub phi: DVector<f64>,
    /// `Λ_θθ` (n×n).
    pub lambda: Option<DMatrix<f64>>,
    /// `Θ`.
    pub bounds: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct ReducedFormStack {
    pub layout: StackLayout,
    pub phi_q: DVector<f64>,
    pub targets: Vec<TargetStack>,
    pub lambda_qq: Option<DMatrix<f64>>,
    /// Lower Cholesky factor of `Λ_qq`.
    pub l_qq: Option<DMatrix<f64>>,
    /// `T` used in the `√T` scaling.
    pub sample_size: usize,
}

/// Rows of `S̃(q)` that survive the zero-row screen.
#[derive(Debug, Clone)]
pub struct SelectedRows {
    /// `S(q) = V(q)S̃(q)`.
    pub s: DMatrix<f64>,
    /// Indices into the rows of `S̃(q)`.
    pub kept: Vec<usize>,
    /// Leading entries of `kept` that are inequalities.
    pub n_inequalities: usize,
}

impl SelectedRows {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }
}

/// Builds `φ_q` and `φ_θ` from an estimate; covariances are left empty.
pub fn build_phi<P: ReducedFormParams + ?Sized>(
    params: &P,
    restr: &RestrictionSet,
    sample_size: usize,
) -> Result<ReducedFormStack> {
    let layout = StackLayout::new(restr, params.dim(), params.lag_matrices().len(), Purpose::Frequentist)?;
    ReducedFormStack::from_layout(layout, params, sample_size)
}

impl ReducedFormStack {
    pub fn from_layout<P: ReducedFormParams + ?Sized>(
        layout: StackLayout,
        params: &P,
        sample_size: usize,
    ) -> Result<Self> {
        let (phi_q, phis) = layout.phi(params)?;
        let targets = layout
            .targets
            .iter()
            .zip(phis)
            .zip(&layout.target_bounds)
            .map(|((t, phi), b)| TargetStack { target: *t, phi, lambda: None, bounds: *b })
            .collect();
        Ok(Self { layout, phi_q, targets, lambda_qq: None, l_qq: None, sample_size })
    }

    pub fn dim(&self) -> usize {
        self.phi_q.len()
    }

    /// `zero_row_tol = 1e-10·(1 + ‖φ_q‖)`.
    pub fn zero_row_tol(&self) -> f64 {
        1e-10 * (1.0 + self.phi_q.norm())
    }

    /// r×m matrix `S̃(q)`.
    pub fn stilde(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let rows = &self.layout.rows;
        let mut s = DMatrix::zeros(rows.len(), self.dim());
        for (j, row) in rows.iter().enumerate() {
            let b = &self.layout.blocks[row.block];
            for (k, &c) in b.cols.iter().enumerate() {
                s[(j, b.offset + k)] = row.sign * q[c];
            }
        }
        s
    }

    /// Norm of row `j` of `S̃(q)`.
    fn row_norm(&self, j: usize, q: &DVector<f64>) -> f64 {
        let b = &self.layout.blocks[self.layout.rows[j].block];
        b.cols.iter().map(|&c| q[c] * q[c]).sum::<f64>().sqrt()
    }

    /// `S(q)` and the kept row indices, dropping rows with norm below `tol`.
    pub fn s_and_v(&self, q: &DVector<f64>, tol: f64) -> SelectedRows {
        let st = self.stilde(q);
        let kept: Vec<usize> = (0..self.layout.n_rows()).filter(|&j| self.row_norm(j, q) >= tol).collect();
        let n_inequalities = kept.iter().filter(|&&j| !self.layout.rows[j].equality).count();
        SelectedRows { s: st.select_rows(kept.iter()), kept, n_inequalities }
    }

    /// `S̃(q)φ` for an arbitrary `φ` with this layout.
    pub fn responses_at(&self, phi: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
        self.layout.responses(phi, q)
    }

    /// `S̃(q)φ̂_q`.
    pub fn responses(&self, q: &DVector<f64>) -> DVector<f64> {
        self.responses_at(&self.phi_q, q)
    }

    /// Plug-in identified-set membership at `φ`.
    pub fn satisfies(&self, phi: &DVector<f64>, q: &DVector<f64>) -> bool {
        self.layout.satisfies(phi, q)
    }

    pub fn target(&self, index: usize) -> &TargetStack {
        &self.targets[index]
    }

    /// Sets `Λ̂_qq` and its Cholesky factor; fails unless positive definite.
    pub fn set_lambda_qq(&mut self, lambda: DMatrix<f64>) -> Result<()> {
        let sym = (&lambda + lambda.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        let max_eig = sym.clone().symmetric_eigenvalues().max();
        let chol = if min_eig > 1e-12 * max_eig.max(f64::MIN_POSITIVE) { sym.clone().cholesky() } else { None };
        match chol {
            Some(c) => {
                self.l_qq = Some(c.l());
                self.lambda_qq = Some(sym);
                Ok(())
            }
            None => Err(Error::RankDeficientLambda { min_eig }),
        }
    }

    /// Same stack with all data scaled by `c > 0`: `φ → cφ`, `Λ → c²Λ`.
    pub fn rescaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.phi_q *= c;
        out.lambda_qq = self.lambda_qq.as_ref().map(|l| l * (c * c));
        out.l_qq = self.l_qq.as_ref().map(|l| l * c);
        for t in &mut out.targets {
            t.phi *= c;
            t.lambda = t.lambda.as_ref().map(|l| l * (c * c));
        }
        out
    }
}

/// `θ(q)` for a target stack.
pub fn theta_value(target: &TargetStack, q: &DVector<f64>) -> f64 {
    theta_at(target.target.kind, &target.phi, q)
}

/// `θ` at an arbitrary `φ_θ`.
pub fn theta_at(kind: TargetKind, phi: &DVector<f64>, q: &DVector<f64>) -> f64 {
    let a = phi.dot(q);
    match kind {
        TargetKind::VarianceShare => {
            let denom = phi.norm_squared();
            if denom > 0.0 {
                (a * a / denom).clamp(0.0, 1.0)
            } else {
                0.0
            }
        }
        _ => a,
    }
}

/// Gradient of `θ` with respect to `φ_θ`, for the delta-method variance.
pub fn theta_gradient(kind: TargetKind, phi: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
    match kind {
        TargetKind::VarianceShare => {
            let a = phi.dot(q);
            let s = phi.norm_squared();
            if s == 0.0 {
                return DVector::zeros(phi.len());
            }
            q * (2.0 * a / s) - phi * (2.0 * a * a / (s * s))
        }
        _ => q.clone(),
    }
}

/// `θ(q)` with the unit-norm contract enforced.
pub fn theta_value_checked(target: &TargetStack, q: &DVector<f64>) -> Result<f64> {
    check_unit(q)?;
    Ok(theta_value(target, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var_core::{structural_irf, VarDgp};

    fn design1() -> VarDgp {
        VarDgp::from_cholesky(vec![], DMatrix::from_row_slice(2, 2, &[0.597, 0.0, -0.205, 0.812]))
    }

    fn pos(variable: usize, horizon: usize) -> SignRestriction {
        SignRestriction { variable, horizon, sign: Sign::Positive, cumulative: false }
    }

    fn unit(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v).normalize()
    }

    #[test]
    fn var0_stack_layout() {
        let dgp = design1();
        let stack = build_phi(&dgp, &RestrictionSet::new(vec![pos(0, 0), pos(1, 0)]), 100).unwrap();
        assert_eq!(stack.phi_q.as_slice(), &[0.597, -0.205, 0.812]);
        let q = unit(&[0.6, 0.8]);
        let expected = DMatrix::from_row_slice(2, 3, &[0.6, 0.0, 0.0, 0.0, 0.6, 0.8]);
        assert!((stack.stilde(&q) - expected).amax() < 1e-15);
    }

    #[test]
    fn negative_sign_negates_row() {
        let dgp = design1();
        let mut r = RestrictionSet::new(vec![pos(0, 0), pos(1, 0)]);
        r.signs[1].sign = Sign::Negative;
        let stack = build_phi(&dgp, &r, 100).unwrap();
        let q = unit(&[0.6, 0.8]);
        let st = stack.stilde(&q);
        assert_eq!(st[(1, 1)], -0.6);
        assert_eq!(st[(1, 2)], -0.8);
        assert_eq!(st[(0, 0)], 0.6);
    }

    #[test]
    fn experiment2_layout_is_vec_of_a1_sigma_transposed() {
        let a1 = DMatrix::from_row_slice(2, 2, &[0.873, 0.003, -0.229, 0.230]);
        let st = DMatrix::from_row_slice(2, 2, &[0.295, 0.0, -0.092, 0.795]);
        let dgp = VarDgp::from_cholesky(vec![a1.clone()], st.clone());
        let stack = build_phi(&dgp, &RestrictionSet::new(vec![pos(0, 1), pos(1, 1)]), 100).unwrap();
        let m = (&a1 * &st).transpose();
        assert_eq!(stack.dim(), 4);
        assert!((&stack.phi_q - DVector::from_column_slice(m.as_slice())).amax() < 1e-15);
    }

    #[test]
    fn rank_reduction_on_axis() {
        let stack = build_phi(&design1(), &RestrictionSet::new(vec![pos(0, 0), pos(1, 0)]), 100).unwrap();
        let tol = stack.zero_row_tol();
        let sel = stack.s_and_v(&unit(&[0.0, 1.0]), tol);
        assert_eq!(sel.kept, vec![1]);
        assert_eq!(stack.s_and_v(&unit(&[1.0, 0.0]), tol).rank(), 2);
        assert_eq!(stack.s_and_v(&unit(&[0.3, -0.7]), tol).rank(), 2);
    }

    #[test]
    fn variance_share_edges() {
        let dgp = design1();
        let r = RestrictionSet::new(vec![pos(0, 0)]).with_targets(vec![ThetaTarget {
            kind: TargetKind::VarianceShare,
            variable: 0,
            horizon: 0,
            bounds: None,
        }]);
        let stack = build_phi(&dgp, &r, 100).unwrap();
        let t = stack.target(0);
        assert!((theta_value(t, &unit(&[1.0, 0.0])) - 1.0).abs() < 1e-15);
        assert_eq!(theta_value(t, &unit(&[0.0, 1.0])), 0.0);
        assert_eq!(t.bounds, (0.0, 1.0));
    }

    #[test]
    fn irf_target_design1() {
        let r = RestrictionSet::new(vec![pos(0, 0)]).with_targets(vec![ThetaTarget::irf(0, 0)]);
        let stack = build_phi(&design1(), &r, 100).unwrap();
        assert!((theta_value(stack.target(0), &unit(&[1.0, 0.0])) - 0.597).abs() < 1e-15);
        // the sign restriction on the same response implies Θ = [0, ∞)
        assert_eq!(stack.target(0).bounds, (0.0, f64::INFINITY));
    }

    #[test]
    fn domain_dimension() {
        assert_eq!(restricted_domain_dim(4, 2).unwrap(), 2);
        assert_eq!(restricted_domain_dim(4, 0).unwrap(), 4);
        assert_eq!(restricted_domain_dim(4, 3).unwrap(), 1);
        assert!(restricted_domain_dim(4, 4).is_err());
    }

    #[test]
    fn validation_rejects_bad_sets() {
        let opposing = RestrictionSet::new(vec![
            pos(0, 1),
            SignRestriction { variable: 0, horizon: 1, sign: Sign::Negative, cumulative: false },
        ]);
        assert!(opposing.validate(2, 1, Purpose::Frequentist).is_err());
        assert!(RestrictionSet::new(vec![pos(0, 1), pos(0, 1)]).validate(2, 1, Purpose::Frequentist).is_err());
        assert!(RestrictionSet::new(vec![pos(2, 0)]).validate(2, 1, Purpose::Frequentist).is_err());
        assert!(RestrictionSet::new(vec![pos(0, 1)]).validate(2, 0, Purpose::Frequentist).is_err());
        assert!(RestrictionSet::default().validate(2, 1, Purpose::Frequentist).is_err());
        assert!(RestrictionSet::default().validate(2, 1, Purpose::Bayesian).is_ok());
        // impact response of a zero-restricted variable
        let z = RestrictionSet::new(vec![pos(0, 0)]).with_zero_count(1);
        assert!(z.validate(2, 1, Purpose::Frequentist).is_err());
        // cumulative at h=0 is the impact response
        let dup = RestrictionSet::new(vec![
            pos(0, 0),
            SignRestriction { variable: 0, horizon: 0, sign: Sign::Positive, cumulative: true },
        ]);
        assert!(dup.validate(2, 1, Purpose::Frequentist).is_err());
    }

    #[test]
    fn zero_restrictions_drop_leading_columns() {
        let a1 = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.2, 0.4, 0.1, 0.0, 0.3, 0.6]);
        let st = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.3, 0.9, 0.0, -0.2, 0.1, 0.7]);
        let dgp = VarDgp::from_cholesky(vec![a1], st);
        let r = RestrictionSet::new(vec![pos(2, 0), pos(0, 1)]).with_zero_count(1);
        let stack = build_phi(&dgp, &r, 50).unwrap();
        assert_eq!(stack.layout.blocks[0].cols, vec![1, 2]);
        assert_eq!(stack.layout.blocks[1].cols, vec![1, 2]);
        let q = unit(&[0.0, 0.6, -0.8]);
        let irf = structural_irf(&dgp, &q, 1).unwrap();
        let resp = stack.responses(&q);
        assert!((resp[0] - irf[(2, 0)]).abs() < 1e-14);
        assert!((resp[1] - irf[(0, 1)]).abs() < 1e-14);
    }

    #[test]
    fn shared_blocks_are_deduplicated() {
        let dgp = VarDgp::from_cholesky(
            vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.2, 0.3])],
            DMatrix::identity(2, 2),
        );
        let mut r = RestrictionSet::new(vec![pos(0, 1)]);
        r.equalities.push(EqualityRestriction { variable: 1, horizon: 1, cumulative: false });
        r.signs.push(SignRestriction { variable: 1, horizon: 2, sign: Sign::Negative, cumulative: true });
        let stack = build_phi(&dgp, &r, 50).unwrap();
        assert_eq!(stack.layout.rows.len(), 3);
        assert_eq!(stack.dim(), 6);
        assert!(stack.layout.rows[2].equality);
        assert_eq!(stack.layout.n_inequalities(), 2);
    }
}
