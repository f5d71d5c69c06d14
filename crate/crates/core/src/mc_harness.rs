//! Monte Carlo designs and coverage experiments.
//!
//! A replication simulates a sample, estimates the VAR, bootstraps `Λ̂`, builds
//! `CS^q` on the design's grid and the Bonferroni sets for every target, then
//! scores them at the least favourable points of the population identified
//! sets: the lower angular endpoint of `F^q` and both endpoints of `F^θ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bootstrap_cov::{bootstrap_into, BootstrapConfig};
use crate::confidence_sets::{bands, cs_q, evaluate_point, CsqConfig, Interval};
use crate::moment_inequality::{CriticalValueConfig, WeightScheme};
use crate::restrictions::{
    build_phi, theta_at, Purpose, RestrictionSet, Sign, SignRestriction, StackLayout, TargetKind, ThetaTarget,
};
use crate::sphere::{polar_grid_2d, sample_uniform, QGrid};
use crate::var_core::{estimate_ols, Deterministics, VarDgp, VarSpec};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignId {
    D1,
    D2,
    D3,
    D4,
    Exp3,
}

impl DesignId {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "d1" => Some(Self::D1),
            "2" | "d2" => Some(Self::D2),
            "3" | "d3" => Some(Self::D3),
            "4" | "d4" => Some(Self::D4),
            "exp3" | "e3" => Some(Self::Exp3),
            _ => None,
        }
    }
}

/// Which horizons carry the bivariate sign restrictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizons {
    /// Both responses non-negative at `h` only; `θ` is the first response at `h`.
    Single(usize),
    /// Both responses non-negative at `0..=H`; `θ` is the first response on impact.
    UpTo(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    /// `n_Q` angles on `(lo, hi]`.
    Polar { lo: f64, hi: f64, n_q: usize },
    /// `n_Q` uniform points, redrawn per replication.
    Uniform { n_q: usize },
}

#[derive(Debug, Clone)]
pub struct McDesign {
    pub id: DesignId,
    pub label: String,
    pub dgp: VarDgp,
    pub spec: VarSpec,
    pub restrictions: RestrictionSet,
    pub grid: GridKind,
}

fn nonneg(variable: usize, horizon: usize) -> SignRestriction {
    SignRestriction { variable, horizon, sign: Sign::Positive, cumulative: false }
}

fn bivariate_tr(s11: f64, s21: f64, s22: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[s11, 0.0, s21, s22])
}

impl McDesign {
    /// VAR(0) with both impact responses non-negative; `θ` the impact response
    /// of the first variable.
    pub fn design1() -> Self {
        let restrictions = RestrictionSet::new(vec![nonneg(0, 0), nonneg(1, 0)])
            .with_targets(vec![ThetaTarget::irf(0, 0)]);
        Self {
            id: DesignId::D1,
            label: "design1".into(),
            dgp: VarDgp::from_cholesky(vec![], bivariate_tr(0.597, -0.205, 0.812)),
            spec: VarSpec::new(2, 0, Deterministics::Intercept),
            restrictions,
            grid: GridKind::Polar { lo: -PI / 2.0, hi: PI / 2.0, n_q: 315 },
        }
    }

    /// Bivariate VAR(1) designs 2 to 4.
    pub fn bivariate(id: DesignId, horizons: Horizons) -> Result<Self> {
        let (tr, a) = match id {
            DesignId::D2 => (bivariate_tr(0.295, -0.092, 0.795), [0.873, 0.003, -0.229, 0.230]),
            DesignId::D3 => (bivariate_tr(0.283, -0.081, 0.817), [0.806, 0.032, -0.278, 0.985]),
            DesignId::D4 => (bivariate_tr(0.210, -0.043, 0.542), [0.450, 0.014, 0.060, 0.953]),
            _ => return Err(Error::InvalidInput(format!("{id:?} is not a bivariate VAR(1) design"))),
        };
        let (signs, target, suffix) = match horizons {
            Horizons::Single(h) => (vec![nonneg(0, h), nonneg(1, h)], ThetaTarget::irf(0, h), format!("h{h}")),
            Horizons::UpTo(hmax) => (
                (0..=hmax).flat_map(|h| [nonneg(0, h), nonneg(1, h)]).collect(),
                ThetaTarget::irf(0, 0),
                format!("h0-{hmax}"),
            ),
        };
        let n = match id {
            DesignId::D2 => 2,
            DesignId::D3 => 3,
            _ => 4,
        };
        Ok(Self {
            id,
            label: format!("design{n}-{suffix}"),
            dgp: VarDgp::from_cholesky(vec![DMatrix::from_row_slice(2, 2, &a)], tr),
            spec: VarSpec::new(2, 1, Deterministics::Intercept),
            restrictions: RestrictionSet::new(signs).with_targets(vec![target]),
            grid: GridKind::Polar { lo: -PI, hi: PI, n_q: 629 },
        })
    }

    /// Four-variable VAR(2): output, inflation, interest rate, real money.
    /// Shock 1 lowers inflation, raises the rate and lowers money at `h = 0, 1`;
    /// targets are the output and inflation responses at `h = 0..=23`.
    pub fn exp3() -> Result<Self> {
        // entered as A_jᵀ row by row; A_j is the transpose
        let a1t = [
            1.001, -0.100, 0.302, -0.085, //
            0.065, 0.585, 0.089, -0.055, //
            0.126, 0.284, 1.072, -0.073, //
            0.233, 0.141, 0.056, 1.522,
        ];
        let a2t = [
            -0.080, 0.119, -0.269, 0.078, //
            -0.056, 0.262, 0.065, 0.013, //
            -0.223, -0.222, -0.178, 0.070, //
            -0.230, -0.097, -0.069, -0.538,
        ];
        let sigma = [
            0.542, -0.124, 0.199, 0.095, //
            -0.124, 1.164, 0.129, -0.369, //
            0.199, 0.129, 0.912, -0.263, //
            0.095, -0.369, -0.263, 0.549,
        ];
        let lags = vec![
            DMatrix::from_row_slice(4, 4, &a1t).transpose(),
            DMatrix::from_row_slice(4, 4, &a2t).transpose(),
        ];
        let dgp = VarDgp::new(
            lags,
            DVector::from_vec(vec![0.626, 0.175, 0.064, 0.204]),
            DMatrix::from_row_slice(4, 4, &sigma),
        )?;
        let sr = |variable, horizon, sign| SignRestriction { variable, horizon, sign, cumulative: false };
        let signs = (0..=1)
            .flat_map(|h| [sr(1, h, Sign::Negative), sr(2, h, Sign::Positive), sr(3, h, Sign::Negative)])
            .collect();
        let targets = (0..2).flat_map(|v| (0..24).map(move |h| ThetaTarget::irf(v, h))).collect();
        Ok(Self {
            id: DesignId::Exp3,
            label: "exp3".into(),
            dgp,
            spec: VarSpec::new(4, 2, Deterministics::Intercept),
            restrictions: RestrictionSet::new(signs).with_targets(targets),
            grid: GridKind::Uniform { n_q: 20_000 },
        })
    }

    pub fn registered(id: DesignId) -> Result<Self> {
        match id {
            DesignId::D1 => Ok(Self::design1()),
            DesignId::Exp3 => Self::exp3(),
            _ => Self::bivariate(id, Horizons::Single(1)),
        }
    }

    pub fn with_grid_size(mut self, n_q: usize) -> Self {
        self.grid = match self.grid {
            GridKind::Polar { lo, hi, .. } => GridKind::Polar { lo, hi, n_q },
            GridKind::Uniform { .. } => GridKind::Uniform { n_q },
        };
        self
    }

    fn layout(&self) -> Result<StackLayout> {
        StackLayout::new(&self.restrictions, self.spec.n, self.spec.p, Purpose::Frequentist)
    }

    fn grid_for(&self, seed: u64, rep: usize) -> Result<QGrid> {
        match self.grid {
            GridKind::Polar { lo, hi, n_q } => polar_grid_2d(n_q, (lo, hi)),
            GridKind::Uniform { n_q } => {
                sample_uniform(self.spec.n, n_q, &mut rng::stream(seed, rng::tag::GRID, rep as u64 + 1))
            }
        }
    }
}

/// Arc `{start + s : 0 ≤ s ≤ length}` on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arc {
    /// Angle in `(−π, π]`.
    pub start: f64,
    pub length: f64,
}

impl Arc {
    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn contains(&self, angle: f64) -> bool {
        let d = (angle - self.start).rem_euclid(2.0 * PI);
        d <= self.length + 1e-12
    }

    fn intersect_half_circle(self, centre: f64) -> Option<Arc> {
        // half circle [centre − π/2, centre + π/2]
        let d = (centre - PI / 2.0 - self.start).rem_euclid(2.0 * PI);
        if d <= self.length {
            Some(Arc { start: wrap(self.start + d), length: (self.length - d).min(PI) })
        } else if d > PI {
            Some(Arc { start: self.start, length: self.length.min(d - PI) })
        } else {
            None
        }
    }
}

fn wrap(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

fn unit(angle: f64) -> DVector<f64> {
    DVector::from_vec(vec![angle.cos(), angle.sin()])
}

/// Population identified sets of a design.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationSets {
    /// Exact arc for bivariate designs; `None` for grid-based designs.
    pub fq: Option<Arc>,
    /// One interval per target; `None` when the set is empty.
    pub ftheta: Vec<Option<Interval>>,
    /// Population `φ_q`.
    #[serde(skip)]
    pub phi_q: DVector<f64>,
}

impl PopulationSets {
    pub fn fq_arc_over_pi(&self) -> Option<f64> {
        self.fq.map(|a| a.length / PI)
    }

    /// Lower angular endpoint of `F^q` as a unit vector.
    pub fn fq_lower(&self) -> Option<DVector<f64>> {
        self.fq.map(|a| unit(a.start))
    }
}

/// Closed-form sets for the bivariate designs, dense uniform grid for the rest.
pub fn population_sets(design: &McDesign) -> Result<PopulationSets> {
    population_sets_with(design, 200_000)
}

pub fn population_sets_with(design: &McDesign, grid_points: usize) -> Result<PopulationSets> {
    let layout = design.layout()?;
    let (phi_q, phis) = layout.phi(&design.dgp)?;
    if design.spec.n == 2 && layout.zero_count == 0 && layout.n_inequalities() == layout.n_rows() {
        let e = [unit(0.0), unit(PI / 2.0)];
        let r = [layout.responses(&phi_q, &e[0]), layout.responses(&phi_q, &e[1])];
        // each row a_jᵀq ≥ 0 keeps the half circle centred on a_j; arcs stay ≤ π
        let mut arc: Option<Option<Arc>> = None;
        for (&a, &b) in r[0].iter().zip(r[1].iter()) {
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let centre = b.atan2(a);
            arc = Some(match arc {
                None => Some(Arc { start: wrap(centre - PI / 2.0), length: PI }),
                Some(prev) => prev.and_then(|arc| arc.intersect_half_circle(centre)),
            });
        }
        let arc = arc.unwrap_or(Some(Arc { start: -PI, length: 2.0 * PI }));
        let ftheta = layout
            .targets
            .iter()
            .zip(&phis)
            .map(|(t, phi)| {
                arc.map(|arc| {
                    // θ is linear or a squared ratio in q: interior extremes sit
                    // on or orthogonal to φ_θ
                    let psi = phi[1].atan2(phi[0]);
                    let mut cands = vec![arc.start, arc.end()];
                    cands.extend([psi, psi + PI, psi + PI / 2.0, psi - PI / 2.0].into_iter().filter(|&c| arc.contains(c)));
                    cands.iter().map(|&c| Interval::point(theta_at(t.kind, phi, &unit(c)))).fold(
                        Interval::new(f64::INFINITY, f64::NEG_INFINITY),
                        |acc, p| Interval::new(acc.lo.min(p.lo), acc.hi.max(p.hi)),
                    )
                })
            })
            .collect();
        return Ok(PopulationSets { fq: arc.map(|a| Arc { start: wrap(a.start), ..a }), ftheta, phi_q });
    }
    let grid = sample_uniform(design.spec.n, grid_points, &mut rng::stream(0, rng::tag::GRID, u64::MAX))?;
    let mut ftheta: Vec<Option<Interval>> = vec![None; phis.len()];
    for q in grid.points.iter().filter(|q| layout.satisfies(&phi_q, q)) {
        for ((slot, t), phi) in ftheta.iter_mut().zip(&layout.targets).zip(&phis) {
            let v = theta_at(t.kind, phi, q);
            *slot = Some(match slot {
                Some(iv) => Interval::new(iv.lo.min(v), iv.hi.max(v)),
                None => Interval::point(v),
            });
        }
    }
    Ok(PopulationSets { fq: None, ftheta, phi_q })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub t: usize,
    pub n_sim: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub n_lambda: usize,
    pub n_z: usize,
    pub seed: u64,
    pub scheme: WeightScheme,
    /// Uniform points for grid-based population sets.
    pub population_grid: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            t: 100,
            n_sim: 500,
            alpha1: 0.05,
            alpha2: 0.05,
            n_lambda: 1000,
            n_z: 500,
            seed: 0,
            scheme: WeightScheme::Identity,
            population_grid: 200_000,
        }
    }
}

/// Empirical rate with its Monte Carlo standard error `√(p(1−p)/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub rate: f64,
    pub se: f64,
    pub n: usize,
}

impl Coverage {
    pub fn from_hits(hits: usize, n: usize) -> Self {
        if n == 0 {
            return Self { rate: f64::NAN, se: f64::NAN, n };
        }
        let rate = hits as f64 / n as f64;
        Self { rate, se: (rate * (1.0 - rate) / n as f64).sqrt(), n }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetResult {
    pub kind: TargetKind,
    pub variable: usize,
    pub horizon: usize,
    pub population: Option<Interval>,
    /// Coverage of the lower and upper population endpoints.
    pub coverage_lo: Option<Coverage>,
    pub coverage_hi: Option<Coverage>,
    /// Averages over replications with a non-empty `CS^θ`.
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub design: String,
    pub config: McConfig,
    pub n_q: usize,
    pub population_fq_over_pi: Option<f64>,
    /// `CS^q` coverage of the lower endpoint of `F^q` (bivariate designs).
    pub csq_coverage: Option<Coverage>,
    pub csq_length_over_pi: Option<f64>,
    /// Reduced-form Wald ellipsoid coverage of the population `φ_q`.
    pub phi_coverage: Coverage,
    /// Inequalities selected as binding at the lower endpoint of `F^q`,
    /// averaged over replications (bivariate designs).
    pub mean_binding: Option<f64>,
    /// Binding inequalities per point of `CS^q`, averaged over replications.
    pub mean_binding_csq: f64,
    /// Replications whose `CS^q` was empty; they count as misses.
    pub empty_csq: usize,
    pub targets: Vec<TargetResult>,
}

impl McResult {
    /// `CS^θ` coverage of the upper endpoint of the first target.
    pub fn theta_coverage(&self) -> Option<Coverage> {
        self.targets.first().and_then(|t| t.coverage_hi)
    }

    pub fn theta_length(&self) -> f64 {
        self.targets.first().map_or(f64::NAN, |t| t.mean_length)
    }
}

struct Replication {
    csq_hit: Option<bool>,
    csq_arc: Option<f64>,
    phi_hit: bool,
    boundary_binding: Option<usize>,
    binding: f64,
    empty: bool,
    /// Per target: `CS^θ` and whether it covers the lower/upper endpoint.
    cs: Vec<(Option<Interval>, bool, bool)>,
}

fn replicate(design: &McDesign, pop: &PopulationSets, cfg: &McConfig, chi2: f64, rep: usize) -> Result<Replication> {
    let data = design.dgp.simulate(cfg.t, &mut rng::stream(cfg.seed, rng::tag::DATA, rep as u64), false)?;
    let est = estimate_ols(&data, &design.spec)?;
    let mut stack = build_phi(&est, &design.restrictions, cfg.t)?;
    let boot = BootstrapConfig {
        n_lambda: cfg.n_lambda,
        seed: rng::child_seed(cfg.seed, rng::tag::BOOTSTRAP, rep as u64),
        allow_explosive: true,
    };
    bootstrap_into(&est, &mut stack, &boot)?;

    let csq_cfg = CsqConfig {
        scheme: cfg.scheme,
        critical: CriticalValueConfig {
            alpha1: cfg.alpha1,
            n_z: cfg.n_z,
            seed: rng::child_seed(cfg.seed, rng::tag::CRITICAL, rep as u64),
            share_draws: true,
            cap_binding: None,
        },
    };
    let grid = design.grid_for(cfg.seed, rep)?;
    let res = cs_q(&stack, &grid, &csq_cfg)?;
    let boundary = match pop.fq_lower() {
        Some(q) => {
            let panel = csq_cfg.critical.panel(stack.dim(), 0);
            Some(evaluate_point(&stack, &q, &csq_cfg, &panel)?)
        }
        None => None,
    };

    let l = stack.l_qq.as_ref().ok_or(Error::MissingCovariance)?;
    let diff = (&stack.phi_q - &pop.phi_q) * (cfg.t as f64).sqrt();
    let w = l.solve_lower_triangular(&diff).ok_or(Error::NotPositiveDefinite)?;
    let phi_hit = w.norm_squared() <= chi2;

    let entries = bands(&stack, &res, cfg.alpha2)?;
    let cs = entries
        .iter()
        .zip(&pop.ftheta)
        .map(|(e, f)| match (e.cs, f) {
            (Some(cs), Some(f)) => (Some(cs), cs.contains(f.lo), cs.contains(f.hi)),
            (cs, _) => (cs, false, false),
        })
        .collect();
    Ok(Replication {
        csq_hit: boundary.as_ref().map(|b| b.in_csq),
        csq_arc: res.csq_arc_over_pi(),
        phi_hit,
        boundary_binding: boundary.map(|b| b.binding),
        binding: res.mean_binding_in_csq(),
        empty: res.csq_is_empty(),
        cs,
    })
}

/// Runs `n_sim` replications of a design; deterministic given `cfg.seed`.
pub fn run_experiment(design: &McDesign, cfg: &McConfig) -> Result<McResult> {
    let pop = population_sets_with(design, cfg.population_grid)?;
    run_with_population(design, &pop, cfg)
}

/// As [`run_experiment`] with precomputed population sets.
pub fn run_with_population(design: &McDesign, pop: &PopulationSets, cfg: &McConfig) -> Result<McResult> {
    if cfg.n_sim == 0 {
        return Err(Error::InvalidInput("n_sim must be positive".into()));
    }
    let alpha = cfg.alpha1 + cfg.alpha2;
    if !(cfg.alpha2 > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("α₁ + α₂ = {alpha} outside (0, 1)")));
    }
    let m = pop.phi_q.len();
    let chi2 = ChiSquared::new(m as f64).map_err(|e| Error::InvalidInput(e.to_string()))?.inverse_cdf(1.0 - alpha);
    let reps: Vec<Replication> =
        (0..cfg.n_sim).into_par_iter().map(|r| replicate(design, pop, cfg, chi2, r)).collect::<Result<_>>()?;

    let n = reps.len();
    let count = |f: &dyn Fn(&Replication) -> bool| reps.iter().filter(|r| f(r)).count();
    let csq_coverage = pop.fq.map(|_| Coverage::from_hits(count(&|r| r.csq_hit == Some(true)), n));
    let arcs: Vec<f64> = reps.iter().filter(|r| !r.empty).filter_map(|r| r.csq_arc).collect();
    let csq_length_over_pi = (!arcs.is_empty()).then(|| arcs.iter().sum::<f64>() / arcs.len() as f64);
    let targets = design
        .restrictions
        .targets
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let popset = pop.ftheta[j];
            let sets: Vec<Interval> = reps.iter().filter_map(|r| r.cs[j].0).collect();
            let k = sets.len().max(1) as f64;
            let (mut lo, mut hi, mut len) = (0.0, 0.0, 0.0);
            for s in &sets {
                lo += s.lo;
                hi += s.hi;
                len += s.length();
            }
            let nan_if_empty = |v: f64| if sets.is_empty() { f64::NAN } else { v / k };
            TargetResult {
                kind: t.kind,
                variable: t.variable,
                horizon: t.horizon,
                population: popset,
                coverage_lo: popset.map(|_| Coverage::from_hits(count(&|r| r.cs[j].1), n)),
                coverage_hi: popset.map(|_| Coverage::from_hits(count(&|r| r.cs[j].2), n)),
                mean_lo: nan_if_empty(lo),
                mean_hi: nan_if_empty(hi),
                mean_length: nan_if_empty(len),
            }
        })
        .collect();
    let n_q = match design.grid {
        GridKind::Polar { n_q, .. } | GridKind::Uniform { n_q } => n_q,
    };
    Ok(McResult {
        design: design.label.clone(),
        config: *cfg,
        n_q,
        population_fq_over_pi: pop.fq_arc_over_pi(),
        csq_coverage,
        csq_length_over_pi,
        phi_coverage: Coverage::from_hits(count(&|r| r.phi_hit), n),
        mean_binding: pop
            .fq
            .map(|_| reps.iter().filter_map(|r| r.boundary_binding).sum::<usize>() as f64 / n as f64),
        mean_binding_csq: reps.iter().map(|r| r.binding).sum::<f64>() / n as f64,
        empty_csq: count(&|r| r.empty),
        targets,
    })
}

/// How the sweep moves `(α₁, α₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepMode {
    /// `α₁` varies with `α₁ + α₂ = total`.
    FixTotal { total: f64, alpha1: Vec<f64> },
    /// `α₂` varies with `α₁` fixed.
    FixAlpha1 { alpha1: f64, alpha2: Vec<f64> },
}

impl SweepMode {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        match self {
            SweepMode::FixTotal { total, alpha1 } => alpha1.iter().map(|&a| (a, total - a)).collect(),
            SweepMode::FixAlpha1 { alpha1, alpha2 } => alpha2.iter().map(|&a| (*alpha1, a)).collect(),
        }
    }
}

/// One experiment per `(α₁, α₂)` pair; every pair reuses the same seed, so
/// the pairs see identical samples and bootstrap draws.
pub fn alpha_sweep(design: &McDesign, base: &McConfig, mode: &SweepMode) -> Result<Vec<McResult>> {
    let pop = population_sets_with(design, base.population_grid)?;
    mode.pairs()
        .into_iter()
        .map(|(a1, a2)| run_with_population(design, &pop, &McConfig { alpha1: a1, alpha2: a2, ..*base }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design1_population_sets() {
        let pop = population_sets(&McDesign::design1()).unwrap();
        let f = pop.ftheta[0].unwrap();
        // θ_u = σ₁₁ cos(atan(−σ₂₁/σ₂₂))
        let phi_l = (0.205f64 / 0.812).atan();
        assert!(f.lo.abs() < 1e-12);
        assert!((f.hi - 0.597 * phi_l.cos()).abs() < 1e-12);
        let arc = pop.fq.unwrap();
        assert!((arc.start - phi_l).abs() < 1e-12);
        assert!((arc.length - (PI / 2.0 - phi_l)).abs() < 1e-12);
    }

    #[test]
    fn bivariate_sets_match_endpoint_formula() {
        // endpoints solve q₁² = 1/(1 + (φ₁/φ₂)²) and q₁² = 1/(1 + (φ₃/φ₄)²)
        let d = McDesign::bivariate(DesignId::D2, Horizons::Single(1)).unwrap();
        let pop = population_sets(&d).unwrap();
        let phi = &pop.phi_q;
        let arc = pop.fq.unwrap();
        let (q_l, q_r) = (unit(arc.end()), unit(arc.start));
        for (q, a, b) in [(q_l, phi[0], phi[1]), (q_r, phi[2], phi[3])] {
            assert!((q[0] * q[0] - 1.0 / (1.0 + (a / b).powi(2))).abs() < 1e-10);
            assert!((a * q[0] + b * q[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn arc_intersection_against_grid() {
        let grid = polar_grid_2d(100_000, (-PI, PI)).unwrap();
        for (d, h) in [(DesignId::D2, Horizons::UpTo(4)), (DesignId::D3, Horizons::UpTo(2)), (DesignId::D4, Horizons::Single(1))] {
            let design = McDesign::bivariate(d, h).unwrap();
            let pop = population_sets(&design).unwrap();
            let layout = design.layout().unwrap();
            let inside = grid.points.iter().filter(|q| layout.satisfies(&pop.phi_q, q)).count();
            let len = inside as f64 * 2.0 * PI / 100_000.0;
            assert!((len - pop.fq.unwrap().length).abs() < 1e-3, "{d:?}");
        }
    }

    #[test]
    fn exp3_dgp_is_stationary() {
        let d = McDesign::exp3().unwrap();
        let rho = d.dgp.spectral_radius();
        assert!(rho < 1.0 && rho > 0.9, "{rho}");
        let pop = population_sets_with(&d, 20_000).unwrap();
        assert!(pop.ftheta.iter().all(|f| f.is_some()));
        // inflation responses on impact are restricted non-positive
        assert!(pop.ftheta[24].unwrap().hi <= 0.0);
    }

    #[test]
    fn smoke_single_replication() {
        let cfg = McConfig { n_sim: 1, n_lambda: 100, n_z: 200, ..Default::default() };
        let r = run_experiment(&McDesign::design1(), &cfg).unwrap();
        assert_eq!(r.phi_coverage.n, 1);
        assert!(r.csq_coverage.is_some());
        assert!(r.csq_length_over_pi.is_some() || r.empty_csq == 1);
        assert_eq!(r.targets.len(), 1);
    }

    #[test]
    fn deterministic_and_sweep_reduces() {
        let d = McDesign::bivariate(DesignId::D2, Horizons::Single(1)).unwrap().with_grid_size(157);
        let cfg = McConfig { n_sim: 4, n_lambda: 100, n_z: 200, seed: 3, ..Default::default() };
        let a = run_experiment(&d, &cfg).unwrap();
        let b = run_experiment(&d, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let sweep = alpha_sweep(&d, &cfg, &SweepMode::FixAlpha1 { alpha1: 0.05, alpha2: vec![0.05, 0.15] }).unwrap();
        assert_eq!(serde_json::to_string(&sweep[0]).unwrap(), serde_json::to_string(&a).unwrap());
        // larger α₂ shrinks every Wald interval, hence every union
        assert!(sweep[1].targets[0].mean_length <= sweep[0].targets[0].mean_length + 1e-12);
    }
}
