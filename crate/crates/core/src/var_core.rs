//! Reduced-form VAR estimation, moving-average recursion, Cholesky
//! orthogonalization, and Gaussian simulation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Burn-in periods discarded by [`VarDgp::simulate`].
pub const BURN_IN: usize = 100;

/// Companion spectral radius above this value counts as explosive.
pub const STABILITY_THRESHOLD: f64 = 1.0 - 1e-8;

/// Tolerance on `‖q‖ − 1` accepted by response functions.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// Observations in rows (T×n), one named column per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
}

impl TimeSeriesData {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::InvalidInput(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        Ok(Self { values, names })
    }

    /// Unnamed columns `y1..yn`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|i| format!("y{i}")).collect();
        Self::new(values, names)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `start..` as a new data set.
    pub fn tail_from(&self, start: usize) -> Self {
        let rows = self.len() - start;
        Self {
            values: self.values.rows(start, rows).into_owned(),
            names: self.names.clone(),
        }
    }

    /// Same data with every observation multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: &self.values * c,
            names: self.names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Deterministics {
    None,
    #[default]
    Intercept,
    InterceptTrend,
}

impl Deterministics {
    pub fn count(self) -> usize {
        match self {
            Deterministics::None => 0,
            Deterministics::Intercept => 1,
            Deterministics::InterceptTrend => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSpec {
    pub n: usize,
    pub p: usize,
    pub deterministics: Deterministics,
}

impl VarSpec {
    pub fn new(n: usize, p: usize, deterministics: Deterministics) -> Self {
        Self { n, p, deterministics }
    }

    /// Regressors per equation.
    pub fn regressors(&self) -> usize {
        self.deterministics.count() + self.n * self.p
    }
}

/// Access to the coefficients that determine structural responses.
pub trait ReducedFormParams {
    fn lag_matrices(&self) -> &[DMatrix<f64>];
    fn sigma_tr(&self) -> &DMatrix<f64>;

    fn dim(&self) -> usize {
        self.sigma_tr().nrows()
    }

    fn vma(&self, horizon: usize) -> VmaCoefficients {
        vma_coefficients(self.lag_matrices(), self.dim(), horizon)
    }
}

/// Equation-by-equation least squares output, before orthogonalization.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub spec: VarSpec,
    /// `A_1..A_p`, each n×n.
    pub lags: Vec<DMatrix<f64>>,
    /// n×k, columns ordered intercept then trend.
    pub deterministic: DMatrix<f64>,
    /// Stacked coefficients `B` (K×n) with `Y = X B + U`.
    pub coefficients: DMatrix<f64>,
    /// `(XᵀX)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
    pub sigma_u: DMatrix<f64>,
    /// (T−p)×n.
    pub residuals: DMatrix<f64>,
    /// Observations in the data set, `T`.
    pub sample_size: usize,
}

impl OlsFit {
    pub fn effective_sample(&self) -> usize {
        self.residuals.nrows()
    }
}

/// OLS estimate with the lower-triangular Cholesky factor of `Σ_u`.
#[derive(Debug, Clone)]
pub struct VarEstimate {
    pub ols: OlsFit,
    pub sigma_tr: DMatrix<f64>,
}

impl VarEstimate {
    pub fn spec(&self) -> VarSpec {
        self.ols.spec
    }

    pub fn sample_size(&self) -> usize {
        self.ols.sample_size
    }

    pub fn sigma_u(&self) -> &DMatrix<f64> {
        &self.ols.sigma_u
    }

    pub fn dgp(&self) -> VarDgp {
        VarDgp::from_estimate(self)
    }
}

impl ReducedFormParams for VarEstimate {
    fn lag_matrices(&self) -> &[DMatrix<f64>] {
        &self.ols.lags
    }

    fn sigma_tr(&self) -> &DMatrix<f64> {
        &self.sigma_tr
    }
}

/// `C_0..C_H` with `C_0 = I`.
#[derive(Debug, Clone)]
pub struct VmaCoefficients(pub Vec<DMatrix<f64>>);

impl VmaCoefficients {
    pub fn get(&self, h: usize) -> &DMatrix<f64> {
        &self.0[h]
    }

    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    /// `Σ_{s=0..h} C_s`.
    pub fn cumulative(&self, h: usize) -> DMatrix<f64> {
        self.0[..=h].iter().fold(DMatrix::zeros(self.0[0].nrows(), self.0[0].ncols()), |acc, c| acc + c)
    }
}

/// Regressor row layout: deterministic terms, then `y_{t-1}, …, y_{t-p}`.
fn design_matrices(data: &TimeSeriesData, spec: &VarSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let t_total = data.len();
    let n = spec.n;
    let p = spec.p;
    let rows = t_total - p;
    let k = spec.deterministics.count();
    let mut x = DMatrix::zeros(rows, spec.regressors());
    let y = data.values.rows(p, rows).into_owned();
    for r in 0..rows {
        let t = r + p;
        if k >= 1 {
            x[(r, 0)] = 1.0;
        }
        if k >= 2 {
            x[(r, 1)] = (t + 1) as f64;
        }
        for lag in 1..=p {
            for j in 0..n {
                x[(r, k + (lag - 1) * n + j)] = data.values[(t - lag, j)];
            }
        }
    }
    (y, x)
}

/// Least squares with a rank check; no orthogonalization.
pub fn ols_fit(data: &TimeSeriesData, spec: &VarSpec) -> Result<OlsFit> {
    let n = spec.n;
    if n == 0 || data.dim() != n {
        return Err(Error::InvalidInput(format!(
            "spec has n={} but data has {} columns",
            n,
            data.dim()
        )));
    }
    let k = spec.deterministics.count();
    let big_k = spec.regressors();
    let t = data.len();
    if t <= n * spec.p + k || t <= spec.p + k {
        return Err(Error::InvalidInput(format!(
            "T={t} too short for n={n}, p={}, {k} deterministic terms",
            spec.p
        )));
    }
    let (y, x) = design_matrices(data, spec);
    let rows = y.nrows();

    let (coefficients, xtx_inv) = if big_k == 0 {
        (DMatrix::zeros(0, n), DMatrix::zeros(0, 0))
    } else {
        let svd = x.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let tol = smax * (rows.max(big_k) as f64) * f64::EPSILON * 16.0;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < big_k || smax == 0.0 {
            return Err(Error::SingularDesign { rank, cols: big_k });
        }
        let xtx = x.transpose() * &x;
        let chol = xtx.cholesky().ok_or(Error::SingularDesign { rank, cols: big_k })?;
        let xtx_inv = chol.inverse();
        let qr = x.clone().qr();
        let qty = qr.q().transpose() * &y;
        let b = qr
            .r()
            .solve_upper_triangular(&qty)
            .ok_or(Error::SingularDesign { rank, cols: big_k })?;
        (b, xtx_inv)
    };

    let residuals = if big_k == 0 { y.clone() } else { &y - &x * &coefficients };
    let divisor = rows as isize - k as isize;
    if divisor <= 0 {
        return Err(Error::InvalidInput("no residual degrees of freedom".into()));
    }
    let mut sigma_u = residuals.transpose() * &residuals / divisor as f64;
    sigma_u = (&sigma_u + sigma_u.transpose()) * 0.5;

    let deterministic = if k == 0 {
        DMatrix::zeros(n, 0)
    } else {
        coefficients.rows(0, k).transpose()
    };
    let lags = (0..spec.p)
        .map(|l| coefficients.rows(k + l * n, n).transpose())
        .collect();

    Ok(OlsFit {
        spec: *spec,
        lags,
        deterministic,
        coefficients,
        xtx_inv,
        sigma_u,
        residuals,
        sample_size: t,
    })
}

/// Lower-triangular Cholesky factor with positive diagonal. Fails unless the
/// smallest eigenvalue exceeds `floor`.
pub fn cholesky_lower(sigma: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig_min = sym.clone().symmetric_eigenvalues().min();
    if !(eig_min > floor) {
        return Err(Error::DegenerateCovariance);
    }
    let chol = sym.cholesky().ok_or(Error::DegenerateCovariance)?;
    Ok(chol.l())
}

/// OLS plus Cholesky orthogonalization.
pub fn estimate_ols(data: &TimeSeriesData, spec: &VarSpec) -> Result<VarEstimate> {
    let ols = ols_fit(data, spec)?;
    let sigma_tr = cholesky_lower(&ols.sigma_u, covariance_floor(data))?;
    Ok(VarEstimate { ols, sigma_tr })
}

// Eigenvalues of Σ_u below this are rounding noise: either tiny relative to
// the largest series variance or at the level of squared roundoff in the data.
fn covariance_floor(data: &TimeSeriesData) -> f64 {
    let t = data.len() as f64;
    let roundoff = 1e3 * f64::EPSILON * data.values.amax();
    let var_max = (0..data.dim())
        .map(|j| {
            let col = data.values.column(j);
            let mean = col.sum() / t;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t
        })
        .fold(0.0, f64::max);
    (1e-12 * var_max).max(roundoff * roundoff)
}

/// `C_h = Σ_{j=1..min(h,p)} A_j C_{h−j}` for `h = 0..=horizon`.
pub fn vma_coefficients(lags: &[DMatrix<f64>], n: usize, horizon: usize) -> VmaCoefficients {
    let mut c: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    c.push(DMatrix::identity(n, n));
    for h in 1..=horizon {
        let mut ch = DMatrix::zeros(n, n);
        for (j, a) in lags.iter().enumerate().take(h) {
            ch += a * &c[h - 1 - j];
        }
        c.push(ch);
    }
    VmaCoefficients(c)
}

/// Checks `‖q‖ = 1` within [`UNIT_NORM_TOL`].
pub fn check_unit(q: &DVector<f64>) -> Result<()> {
    let norm = q.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidInput(format!("q must have unit norm, got {norm}")));
    }
    Ok(())
}

/// n×(H+1) responses to the shock `q`; column `h` is `C_h Σ_tr q`.
pub fn structural_irf<P: ReducedFormParams + ?Sized>(
    params: &P,
    q: &DVector<f64>,
    horizon: usize,
) -> Result<DMatrix<f64>> {
    if q.len() != params.dim() {
        return Err(Error::InvalidInput(format!(
            "q has length {}, model has {} variables",
            q.len(),
            params.dim()
        )));
    }
    check_unit(q)?;
    let vma = params.vma(horizon);
    let impact = params.sigma_tr() * q;
    let mut out = DMatrix::zeros(params.dim(), horizon + 1);
    for h in 0..=horizon {
        out.set_column(h, &(vma.get(h) * &impact));
    }
    Ok(out)
}

/// np×np companion matrix.
pub fn companion_matrix(lags: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let p = lags.len();
    let mut comp = DMatrix::zeros(n * p, n * p);
    for (j, a) in lags.iter().enumerate() {
        comp.view_mut((0, j * n), (n, n)).copy_from(a);
    }
    for j in 1..p {
        comp.view_mut((j * n, (j - 1) * n), (n, n)).fill_with_identity();
    }
    comp
}

/// Eigenvalues of the companion matrix as `(re, im)` pairs.
pub fn companion_eigenvalues(lags: &[DMatrix<f64>], n: usize) -> Vec<(f64, f64)> {
    if lags.is_empty() {
        return Vec::new();
    }
    companion_matrix(lags, n)
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

pub fn spectral_radius(lags: &[DMatrix<f64>], n: usize) -> f64 {
    companion_eigenvalues(lags, n)
        .iter()
        .map(|(re, im)| re.hypot(*im))
        .fold(0.0, f64::max)
}

/// Gaussian VAR data-generating process.
#[derive(Debug, Clone)]
pub struct VarDgp {
    pub lags: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    pub trend: DVector<f64>,
    pub sigma_u: DMatrix<f64>,
    pub sigma_tr: DMatrix<f64>,
}

impl VarDgp {
    pub fn new(lags: Vec<DMatrix<f64>>, intercept: DVector<f64>, sigma_u: DMatrix<f64>) -> Result<Self> {
        let n = sigma_u.nrows();
        let sigma_tr = cholesky_lower(&sigma_u, 1e-12 * sigma_u.diagonal().max())?;
        Ok(Self {
            lags,
            intercept,
            trend: DVector::zeros(n),
            sigma_u,
            sigma_tr,
        })
    }

    /// Zero-mean DGP parameterized by its Cholesky factor.
    pub fn from_cholesky(lags: Vec<DMatrix<f64>>, sigma_tr: DMatrix<f64>) -> Self {
        let n = sigma_tr.nrows();
        Self {
            lags,
            intercept: DVector::zeros(n),
            trend: DVector::zeros(n),
            sigma_u: &sigma_tr * sigma_tr.transpose(),
            sigma_tr,
        }
    }

    pub fn from_estimate(est: &VarEstimate) -> Self {
        let n = est.spec().n;
        let det = &est.ols.deterministic;
        let intercept = if det.ncols() >= 1 { det.column(0).into_owned() } else { DVector::zeros(n) };
        let trend = if det.ncols() >= 2 { det.column(1).into_owned() } else { DVector::zeros(n) };
        Self {
            lags: est.ols.lags.clone(),
            intercept,
            trend,
            sigma_u: est.ols.sigma_u.clone(),
            sigma_tr: est.sigma_tr.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma_u.nrows()
    }

    pub fn order(&self) -> usize {
        self.lags.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.lags, self.dim())
    }

    /// `(I − Σ A_j)^{-1} c`, or zero when the lag polynomial is singular at one.
    pub fn unconditional_mean(&self) -> DVector<f64> {
        let n = self.dim();
        let mut m = DMatrix::identity(n, n);
        for a in &self.lags {
            m -= a;
        }
        m.lu().solve(&self.intercept).unwrap_or_else(|| DVector::zeros(n))
    }

    /// `T` observations after [`BURN_IN`] discarded periods; the `p` pre-sample
    /// values sit at the unconditional mean. Explosive DGPs are rejected unless
    /// `allow_explosive` is set.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        t: usize,
        rng: &mut R,
        allow_explosive: bool,
    ) -> Result<TimeSeriesData> {
        let n = self.dim();
        let p = self.order();
        if !allow_explosive {
            let rho = self.spectral_radius();
            if rho >= STABILITY_THRESHOLD {
                return Err(Error::Unstable(rho));
            }
        }
        let total = p + BURN_IN + t;
        let mean = self.unconditional_mean();
        let mut y = DMatrix::zeros(total, n);
        for s in 0..p {
            y.set_row(s, &mean.transpose());
        }
        let mut z = DVector::zeros(n);
        for s in p..total {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            // time index 1..T over the retained sample
            let time = s as f64 - (p + BURN_IN) as f64 + 1.0;
            let mut row = &self.intercept + &self.trend * time + &self.sigma_tr * &z;
            for (j, a) in self.lags.iter().enumerate() {
                let prev = y.row(s - 1 - j).transpose();
                row += a * prev;
            }
            y.set_row(s, &row.transpose());
        }
        TimeSeriesData::from_matrix(y.rows(p + BURN_IN, t).into_owned())
    }
}

impl ReducedFormParams for VarDgp {
    fn lag_matrices(&self) -> &[DMatrix<f64>] {
        &self.lags
    }

    fn sigma_tr(&self) -> &DMatrix<f64> {
        &self.sigma_tr
    }
}

/// Information criteria for one lag order.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LagCriterion {
    pub p: usize,
    pub aic: f64,
    pub bic: f64,
}

/// AIC and BIC for `p = 0..=max_p` on the common sample that drops the first
/// `max_p` observations.
pub fn lag_order_table(
    data: &TimeSeriesData,
    deterministics: Deterministics,
    max_p: usize,
) -> Result<Vec<LagCriterion>> {
    let n = data.dim();
    (0..=max_p)
        .map(|p| {
            let sub = data.tail_from(max_p - p);
            let spec = VarSpec::new(n, p, deterministics);
            let fit = ols_fit(&sub, &spec)?;
            let t_eff = fit.effective_sample() as f64;
            let sigma_ml = fit.residuals.transpose() * &fit.residuals / t_eff;
            let logdet = sigma_ml
                .cholesky()
                .map(|c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
                .ok_or(Error::DegenerateCovariance)?;
            let params = (n * spec.regressors()) as f64;
            Ok(LagCriterion {
                p,
                aic: logdet + 2.0 * params / t_eff,
                bic: logdet + t_eff.ln() * params / t_eff,
            })
        })
        .collect()
}
