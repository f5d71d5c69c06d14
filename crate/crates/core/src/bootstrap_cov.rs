//! Parametric bootstrap for `Λ_qq` and `Λ_θθ`.
//!
//! Replication `b` simulates `T` observations from the estimated Gaussian VAR,
//! re-estimates it, and rebuilds `φ̂*` with the same layout. The covariance is
//! `(1/n_Λ) Σ_b T(φ̂*_b − φ̂)(φ̂*_b − φ̂)ᵀ`, centred at the point estimate.
//! A replication whose design is singular is redrawn from the next stream
//! reserved for it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::restrictions::{ReducedFormStack, StackLayout};
use crate::var_core::{estimate_ols, VarEstimate};
use crate::{rng, Error, Result};

/// Redraws allowed per replication.
const MAX_TRIES: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_lambda: usize,
    pub seed: u64,
    /// Simulate from explosive estimates instead of failing.
    pub allow_explosive: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_lambda: 1000, seed: 0, allow_explosive: false }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapCovariance {
    pub lambda_qq: DMatrix<f64>,
    /// One `Λ_θθ` per target, in layout order.
    pub lambda_theta: Vec<DMatrix<f64>>,
    /// Replications that had to be redrawn.
    pub redraws: usize,
}

type Replicate = (DVector<f64>, Vec<DVector<f64>>);

fn replicate(est: &VarEstimate, layout: &StackLayout, cfg: &BootstrapConfig, b: usize) -> Result<(Replicate, usize)> {
    let dgp = est.dgp();
    let spec = est.spec();
    let t = est.sample_size();
    for k in 0..MAX_TRIES {
        let mut r = rng::stream(cfg.seed, rng::tag::BOOTSTRAP, b as u64 + k * cfg.n_lambda as u64);
        let data = dgp.simulate(t, &mut r, cfg.allow_explosive)?;
        match estimate_ols(&data, &spec) {
            Ok(star) => return Ok((layout.phi(&star)?, k as usize)),
            Err(Error::SingularDesign { .. } | Error::DegenerateCovariance) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::BootstrapExhausted { accepted: 0, attempts: MAX_TRIES as usize })
}

/// Bootstrap covariances of `φ̂_q` and every `φ̂_θ`.
pub fn bootstrap_lambda(
    est: &VarEstimate,
    stack: &ReducedFormStack,
    cfg: &BootstrapConfig,
) -> Result<BootstrapCovariance> {
    let m = stack.dim();
    if cfg.n_lambda < m + 1 {
        return Err(Error::InvalidInput(format!(
            "n_Λ = {} replications cannot give a full-rank {m}×{m} covariance",
            cfg.n_lambda
        )));
    }
    let results: Vec<Result<(Replicate, usize)>> =
        (0..cfg.n_lambda).into_par_iter().map(|b| replicate(est, &stack.layout, cfg, b)).collect();

    let t = stack.sample_size as f64;
    let scale = t / cfg.n_lambda as f64;
    let mut lambda_qq = DMatrix::zeros(m, m);
    let mut lambda_theta: Vec<DMatrix<f64>> =
        stack.targets.iter().map(|ts| DMatrix::zeros(ts.phi.len(), ts.phi.len())).collect();
    let mut redraws = 0;
    for (accepted, res) in results.into_iter().enumerate() {
        let ((phi_q, phis), tries) = match res {
            Ok(v) => v,
            Err(Error::BootstrapExhausted { .. }) => {
                return Err(Error::BootstrapExhausted {
                    accepted,
                    attempts: accepted + redraws + MAX_TRIES as usize,
                })
            }
            Err(e) => return Err(e),
        };
        redraws += tries;
        let d = phi_q - &stack.phi_q;
        lambda_qq.ger(scale, &d, &d, 1.0);
        for ((lam, phi), ts) in lambda_theta.iter_mut().zip(phis).zip(&stack.targets) {
            let d = phi - &ts.phi;
            lam.ger(scale, &d, &d, 1.0);
        }
    }
    if redraws > 0 {
        log::info!("bootstrap redrew {redraws} replications with singular designs");
    }
    Ok(BootstrapCovariance { lambda_qq, lambda_theta, redraws })
}

impl ReducedFormStack {
    /// Installs bootstrap covariances; fails if `Λ̂_qq` is not positive definite.
    pub fn attach(&mut self, cov: BootstrapCovariance) -> Result<()> {
        self.set_lambda_qq(cov.lambda_qq)?;
        for (ts, lam) in self.targets.iter_mut().zip(cov.lambda_theta) {
            ts.lambda = Some(lam);
        }
        Ok(())
    }
}

/// Bootstraps and attaches the covariances in one step.
pub fn bootstrap_into(est: &VarEstimate, stack: &mut ReducedFormStack, cfg: &BootstrapConfig) -> Result<usize> {
    let cov = bootstrap_lambda(est, stack, cfg)?;
    let redraws = cov.redraws;
    stack.attach(cov)?;
    Ok(redraws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restrictions::{build_phi, RestrictionSet, Sign, SignRestriction, ThetaTarget};
    use crate::var_core::{Deterministics, VarDgp, VarSpec};

    fn design1_stack(t: usize, seed: u64) -> (VarEstimate, ReducedFormStack) {
        let dgp = VarDgp::from_cholesky(vec![], DMatrix::from_row_slice(2, 2, &[0.597, 0.0, -0.205, 0.812]));
        let data = dgp.simulate(t, &mut rng::stream(seed, rng::tag::DATA, 0), false).unwrap();
        let est = estimate_ols(&data, &VarSpec::new(2, 0, Deterministics::Intercept)).unwrap();
        let restr = RestrictionSet::new(vec![
            SignRestriction { variable: 0, horizon: 0, sign: Sign::Positive, cumulative: false },
            SignRestriction { variable: 1, horizon: 0, sign: Sign::Positive, cumulative: false },
        ])
        .with_targets(vec![ThetaTarget::irf(0, 0)]);
        let stack = build_phi(&est, &restr, t).unwrap();
        (est, stack)
    }

    #[test]
    fn deterministic_given_seed() {
        let (est, stack) = design1_stack(100, 1);
        let cfg = BootstrapConfig { n_lambda: 50, seed: 4, ..Default::default() };
        let a = bootstrap_lambda(&est, &stack, &cfg).unwrap();
        let b = bootstrap_lambda(&est, &stack, &cfg).unwrap();
        assert_eq!(a.lambda_qq, b.lambda_qq);
        assert_eq!(a.lambda_theta, b.lambda_theta);
    }

    #[test]
    fn scalar_cholesky_delta_method() {
        // √T(σ̂ − σ) → N(0, σ²/2) for Gaussian data
        let sigma: f64 = 1.7;
        let dgp = VarDgp::from_cholesky(vec![], DMatrix::from_element(1, 1, sigma));
        let t = 2000;
        let data = dgp.simulate(t, &mut rng::stream(2, rng::tag::DATA, 0), false).unwrap();
        let est = estimate_ols(&data, &VarSpec::new(1, 0, Deterministics::Intercept)).unwrap();
        let restr = RestrictionSet::new(vec![SignRestriction {
            variable: 0,
            horizon: 0,
            sign: Sign::Positive,
            cumulative: false,
        }]);
        let stack = build_phi(&est, &restr, t).unwrap();
        let cov = bootstrap_lambda(&est, &stack, &BootstrapConfig { n_lambda: 4000, seed: 3, ..Default::default() })
            .unwrap();
        let s2 = est.sigma_u()[(0, 0)];
        assert!((cov.lambda_qq[(0, 0)] / (s2 / 2.0) - 1.0).abs() < 0.08, "{}", cov.lambda_qq[(0, 0)]);
    }

    #[test]
    fn design1_lambda_is_well_conditioned() {
        let (est, mut stack) = design1_stack(100, 7);
        let cfg = BootstrapConfig { n_lambda: 1000, seed: 1, ..Default::default() };
        bootstrap_into(&est, &mut stack, &cfg).unwrap();
        let lam = stack.lambda_qq.as_ref().unwrap();
        let eig = lam.clone().symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
        assert!(eig.max() / eig.min() < 1e6);
        let l = stack.l_qq.as_ref().unwrap();
        assert!((l * l.transpose() - lam).norm() / lam.norm() < 1e-10);
        assert!(stack.targets[0].lambda.is_some());
    }

    #[test]
    fn too_few_replications() {
        let (est, stack) = design1_stack(100, 1);
        let cfg = BootstrapConfig { n_lambda: 3, seed: 0, ..Default::default() };
        assert!(matches!(bootstrap_lambda(&est, &stack, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn roughly_scale_free_in_t() {
        let cfg = BootstrapConfig { n_lambda: 400, seed: 9, ..Default::default() };
        let (e1, s1) = design1_stack(400, 11);
        let (e2, s2) = design1_stack(800, 11);
        let a = bootstrap_lambda(&e1, &s1, &cfg).unwrap().lambda_qq;
        let b = bootstrap_lambda(&e2, &s2, &cfg).unwrap().lambda_qq;
        assert!((&a - &b).norm() / a.norm() < 0.2);
    }
}
