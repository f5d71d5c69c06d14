//! Acceptance sampler for the posterior under the flat-in-`B`,
//! `|Σ|^{-(n+1)/2}` prior, and pointwise credible bands.
//!
//! Each proposal draws `Σ ~ IW(UᵀU, T−p)`, then `B | Σ ~ MN(B̂, Σ ⊗ (XᵀX)⁻¹)`,
//! then `q` uniform on the restricted sphere, and keeps the triple when every
//! sign restriction holds. Proposals come in fixed-size batches with one RNG
//! stream per batch, so the accepted sequence does not depend on threading.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence_sets::Interval;
use crate::restrictions::{theta_at, Purpose, RestrictionSet, StackLayout, TargetKind};
use crate::var_core::{ols_fit, OlsFit, TimeSeriesData, VarDgp, VarSpec};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    /// Accepted draws wanted.
    pub n_draws: usize,
    pub seed: u64,
    /// Proposals per RNG stream.
    pub batch: usize,
    pub max_proposals: usize,
    /// Abort if the acceptance rate is below `min_rate` after `probe` proposals.
    pub min_rate: f64,
    pub probe: usize,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self { n_draws: 50_000, seed: 0, batch: 1000, max_proposals: 10_000_000, min_rate: 1e-4, probe: 100_000 }
    }
}

type Draw = (Vec<DMatrix<f64>>, DMatrix<f64>, DMatrix<f64>);

#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    /// `A_1..A_p`.
    pub lags: Vec<DMatrix<f64>>,
    pub sigma_u: DMatrix<f64>,
    pub q: DVector<f64>,
    /// `θ` for each target of the restriction set.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub draws: Vec<PosteriorDraw>,
    pub proposals: usize,
    pub targets: Vec<(TargetKind, usize, usize)>,
}

impl PosteriorSample {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.draws.len() as f64 / self.proposals as f64
        }
    }
}

/// Conjugate pieces of the posterior, fixed across proposals.
struct Posterior {
    spec: VarSpec,
    b_hat: DMatrix<f64>,
    /// Cholesky factor of `(XᵀX)⁻¹`.
    p_chol: DMatrix<f64>,
    /// Cholesky factor of `(UᵀU)⁻¹`.
    s_inv_chol: DMatrix<f64>,
    df: f64,
}

impl Posterior {
    fn new(fit: &OlsFit) -> Result<Self> {
        let n = fit.spec.n;
        let df = fit.effective_sample() as f64;
        if df < n as f64 {
            return Err(Error::InvalidInput("too few observations for the inverse-Wishart posterior".into()));
        }
        let utu = fit.residuals.transpose() * &fit.residuals;
        let s_inv = utu.cholesky().ok_or(Error::DegenerateCovariance)?.inverse();
        let s_inv_chol = s_inv.cholesky().ok_or(Error::DegenerateCovariance)?.l();
        let p_chol = if fit.xtx_inv.nrows() == 0 {
            DMatrix::zeros(0, 0)
        } else {
            fit.xtx_inv.clone().cholesky().ok_or(Error::SingularDesign { rank: 0, cols: fit.xtx_inv.nrows() })?.l()
        };
        Ok(Self { spec: fit.spec, b_hat: fit.coefficients.clone(), p_chol, s_inv_chol, df })
    }

    /// Bartlett draw of `W ~ Wishart((UᵀU)⁻¹, df)`, returned as `Σ = W⁻¹`.
    fn draw_sigma(&self, r: &mut ChaCha8Rng) -> Option<DMatrix<f64>> {
        let n = self.spec.n;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let chi = ChiSquared::new(self.df - i as f64).ok()?;
            a[(i, i)] = chi.sample(r).sqrt();
            for j in 0..i {
                a[(i, j)] = r.sample(StandardNormal);
            }
        }
        let la = &self.s_inv_chol * a;
        let w = &la * la.transpose();
        let sigma = w.cholesky()?.inverse();
        Some((&sigma + sigma.transpose()) * 0.5)
    }

    /// `(A_1..A_p, Σ, chol(Σ))`.
    fn draw(&self, r: &mut ChaCha8Rng) -> Option<Draw> {
        let sigma = self.draw_sigma(r)?;
        let c = sigma.clone().cholesky()?.l();
        let (k, n) = self.b_hat.shape();
        let b = if k == 0 {
            self.b_hat.clone()
        } else {
            let z = DMatrix::from_fn(k, n, |_, _| r.sample(StandardNormal));
            &self.b_hat + &self.p_chol * z * c.transpose()
        };
        let det = self.spec.deterministics.count();
        let lags = (0..self.spec.p).map(|l| b.rows(det + l * n, n).transpose()).collect();
        Some((lags, sigma, c))
    }
}

fn uniform_q(n: usize, z: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let mut q = DVector::<f64>::zeros(n);
        for v in q.rows_mut(z, n - z).iter_mut() {
            *v = r.sample::<f64, _>(StandardNormal);
        }
        let norm = q.norm();
        if norm > 1e-300 {
            return q / norm;
        }
    }
}

fn run_batch(post: &Posterior, layout: &StackLayout, seed: u64, index: usize, size: usize) -> Result<Vec<PosteriorDraw>> {
    let mut r = rng::stream(seed, rng::tag::POSTERIOR, index as u64);
    let n = post.spec.n;
    let mut out = Vec::new();
    for _ in 0..size {
        let Some((lags, sigma, chol)) = post.draw(&mut r) else { continue };
        let q = uniform_q(n, layout.zero_count, &mut r);
        let dgp = VarDgp::from_cholesky(lags, chol);
        let (phi_q, phis) = layout.phi(&dgp)?;
        if layout.satisfies(&phi_q, &q) {
            let theta = layout.targets.iter().zip(&phis).map(|(t, phi)| theta_at(t.kind, phi, &q)).collect();
            out.push(PosteriorDraw { lags: dgp.lags, sigma_u: sigma, q, theta });
        }
    }
    Ok(out)
}

/// Accepted posterior draws until `n_draws` are collected.
pub fn posterior_sample(
    data: &TimeSeriesData,
    spec: &VarSpec,
    restr: &RestrictionSet,
    cfg: &BayesConfig,
) -> Result<PosteriorSample> {
    let fit = ols_fit(data, spec)?;
    let layout = StackLayout::new(restr, spec.n, spec.p, Purpose::Bayesian)?;
    let post = Posterior::new(&fit)?;
    let batch = cfg.batch.max(1);
    let wave = rayon::current_num_threads().max(1) * 4;
    let mut draws = Vec::with_capacity(cfg.n_draws);
    let mut proposals = 0usize;
    let mut next = 0usize;
    while draws.len() < cfg.n_draws {
        if proposals >= cfg.max_proposals {
            return Err(Error::LowAcceptance { accepted: draws.len(), attempts: proposals });
        }
        let batches: Vec<usize> = (next..next + wave).collect();
        next += wave;
        let results: Vec<Result<Vec<PosteriorDraw>>> =
            batches.par_iter().map(|&b| run_batch(&post, &layout, cfg.seed, b, batch)).collect();
        for res in results {
            let accepted = res?;
            proposals += batch;
            for d in accepted {
                if draws.len() < cfg.n_draws {
                    draws.push(d);
                }
            }
            if draws.len() >= cfg.n_draws {
                break;
            }
            if proposals >= cfg.probe && (draws.len() as f64) < cfg.min_rate * proposals as f64 {
                return Err(Error::LowAcceptance { accepted: draws.len(), attempts: proposals });
            }
        }
    }
    log::info!(
        "posterior sampler: {} accepted of {} proposals ({:.4})",
        draws.len(),
        proposals,
        draws.len() as f64 / proposals as f64
    );
    let targets = layout.targets.iter().map(|t| (t.kind, t.variable, t.horizon)).collect();
    Ok(PosteriorSample { draws, proposals, targets })
}

/// Type-7 (linear interpolation) sample quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed `level` credible interval of target `target`.
pub fn credible_band(sample: &PosteriorSample, target: usize, level: f64) -> Result<Interval> {
    const MIN_DRAWS: usize = 100;
    if sample.draws.len() < MIN_DRAWS {
        return Err(Error::TooFewDraws { have: sample.draws.len(), need: MIN_DRAWS });
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidInput(format!("credible level {level} outside (0, 1]")));
    }
    let mut v: Vec<f64> = sample.draws.iter().map(|d| d.theta[target]).collect();
    v.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval::new(quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restrictions::{Sign, SignRestriction, ThetaTarget};
    use crate::var_core::{estimate_ols, Deterministics};

    fn design1_data(t: usize) -> TimeSeriesData {
        let dgp = VarDgp::from_cholesky(vec![], DMatrix::from_row_slice(2, 2, &[0.597, 0.0, -0.205, 0.812]));
        dgp.simulate(t, &mut rng::stream(21, rng::tag::DATA, 0), false).unwrap()
    }

    fn spec0() -> VarSpec {
        VarSpec::new(2, 0, Deterministics::Intercept)
    }

    #[test]
    fn vacuous_restrictions_accept_everything() {
        let data = design1_data(200);
        let r = RestrictionSet::default().with_targets(vec![ThetaTarget::irf(0, 0)]);
        let cfg = BayesConfig { n_draws: 500, batch: 100, ..Default::default() };
        let s = posterior_sample(&data, &spec0(), &r, &cfg).unwrap();
        assert_eq!(s.acceptance_rate(), 1.0);
    }

    #[test]
    fn contradictory_restrictions_abort() {
        // impact ≥ 0 and cumulative-through-1 ≤ 0 with A ≈ 0.9 I forces opposite
        // signs on nearly proportional responses; a tiny set survives
        let dgp = VarDgp::from_cholesky(vec![DMatrix::identity(2, 2) * 0.9], DMatrix::identity(2, 2));
        let data = dgp.simulate(5000, &mut rng::stream(2, rng::tag::DATA, 0), false).unwrap();
        let sr = |variable, horizon, sign| SignRestriction { variable, horizon, sign, cumulative: false };
        let r = RestrictionSet::new(vec![
            sr(0, 0, Sign::Positive),
            sr(0, 1, Sign::Negative),
            sr(1, 0, Sign::Positive),
            sr(1, 1, Sign::Negative),
        ]);
        let cfg = BayesConfig { n_draws: 100, batch: 1000, probe: 20_000, ..Default::default() };
        let res = posterior_sample(&data, &VarSpec::new(2, 1, Deterministics::Intercept), &r, &cfg);
        assert!(matches!(res, Err(Error::LowAcceptance { .. })), "{res:?}");
    }

    #[test]
    fn accepted_draws_satisfy_restrictions() {
        let data = design1_data(300);
        let sr = |variable| SignRestriction { variable, horizon: 0, sign: Sign::Positive, cumulative: false };
        let r = RestrictionSet::new(vec![sr(0), sr(1)]).with_targets(vec![ThetaTarget::irf(0, 0)]);
        let cfg = BayesConfig { n_draws: 400, batch: 200, ..Default::default() };
        let s = posterior_sample(&data, &spec0(), &r, &cfg).unwrap();
        let layout = StackLayout::new(&r, 2, 0, Purpose::Bayesian).unwrap();
        for d in &s.draws {
            let chol = d.sigma_u.clone().cholesky().unwrap().l();
            let (phi, _) = layout.phi(&VarDgp::from_cholesky(d.lags.clone(), chol)).unwrap();
            assert!(layout.satisfies(&phi, &d.q));
            assert!(d.theta[0] >= 0.0);
        }
        let b90 = credible_band(&s, 0, 0.90).unwrap();
        let b95 = credible_band(&s, 0, 0.95).unwrap();
        assert!(b90.within(&b95, 0.0));
    }

    #[test]
    fn posterior_mean_of_sigma_near_estimate() {
        let data = design1_data(5000);
        let r = RestrictionSet::default();
        let cfg = BayesConfig { n_draws: 2000, batch: 250, ..Default::default() };
        let s = posterior_sample(&data, &spec0(), &r, &cfg).unwrap();
        let est = estimate_ols(&data, &spec0()).unwrap();
        let nd = s.draws.len() as f64;
        let mean = s.draws.iter().fold(DMatrix::zeros(2, 2), |a, d| a + &d.sigma_u) / nd;
        let var = s.draws.iter().fold(DMatrix::zeros(2, 2), |a, d| {
            let e = &d.sigma_u - &mean;
            a + e.component_mul(&e)
        }) / (nd - 1.0);
        for i in 0..2 {
            for j in 0..2 {
                let se = (var[(i, j)] / nd).sqrt();
                assert!((mean[(i, j)] - est.sigma_u()[(i, j)]).abs() < 3.0 * se + 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn band_edge_cases() {
        let mk = |vals: &[f64]| PosteriorSample {
            draws: vals
                .iter()
                .map(|&v| PosteriorDraw {
                    lags: vec![],
                    sigma_u: DMatrix::identity(1, 1),
                    q: DVector::from_element(1, 1.0),
                    theta: vec![v],
                })
                .collect(),
            proposals: vals.len(),
            targets: vec![(TargetKind::Irf, 0, 0)],
        };
        let vals: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let full = credible_band(&mk(&vals), 0, 1.0).unwrap();
        let (mn, mx) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert_eq!((full.lo, full.hi), (mn, mx));
        let c = credible_band(&mk(&[0.3; 150]), 0, 0.9).unwrap();
        assert_eq!((c.lo, c.hi), (0.3, 0.3));
        assert!(matches!(credible_band(&mk(&[0.3; 20]), 0, 0.9), Err(Error::TooFewDraws { .. })));
    }
}
