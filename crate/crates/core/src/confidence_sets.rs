//! `F̂^q`, `CS^q`, plug-in sets `F̂^θ`, Wald sets given `q`, and the
//! Bonferroni union `CS^θ`.
//!
//! All sets are evaluated on a grid, so `F̂^θ` and `CS^θ` are inner
//! approximations whose accuracy is controlled by the grid size.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::moment_inequality::{critical_value, objective_g, CriticalValueConfig, DrawPanel, WeightScheme};
use crate::normal;
use crate::restrictions::{theta_at, theta_gradient, theta_value, ReducedFormStack, TargetKind};
use crate::sphere::QGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `self ⊆ other` up to `tol`.
    pub fn within(&self, other: &Interval, tol: f64) -> bool {
        self.lo >= other.lo - tol && self.hi <= other.hi + tol
    }

    /// Intersection; `None` when empty.
    pub fn intersect(&self, bounds: (f64, f64)) -> Option<Interval> {
        let lo = self.lo.max(bounds.0);
        let hi = self.hi.min(bounds.1);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Smallest interval containing `a` (if any) and `b`.
    pub fn hull(a: Option<Interval>, b: Interval) -> Interval {
        match a {
            None => b,
            Some(a) => Interval { lo: a.lo.min(b.lo), hi: a.hi.max(b.hi) },
        }
    }
}

/// Hausdorff distance between two compact intervals.
pub fn hausdorff(a: &Interval, b: &Interval) -> f64 {
    (a.lo - b.lo).abs().max((a.hi - b.hi).abs())
}

/// Evaluation of the level set at one `q`.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub q: Vec<f64>,
    pub g: f64,
    pub critical_value: f64,
    pub in_fhat: bool,
    pub in_csq: bool,
    pub binding: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct QGridResult {
    pub points: Vec<GridPoint>,
    pub n_fhat: usize,
    pub n_csq: usize,
    /// Angular spacing when the grid is polar.
    pub spacing: Option<f64>,
}

impl QGridResult {
    pub fn csq_is_empty(&self) -> bool {
        self.n_csq == 0
    }

    /// Arc length of `CS^q` on a polar grid, as a multiple of π.
    pub fn csq_arc_over_pi(&self) -> Option<f64> {
        self.spacing.map(|d| self.n_csq as f64 * d / std::f64::consts::PI)
    }

    pub fn fhat_arc_over_pi(&self) -> Option<f64> {
        self.spacing.map(|d| self.n_fhat as f64 * d / std::f64::consts::PI)
    }

    /// Mean `r̂₁` over the grid points in `CS^q`.
    pub fn mean_binding_in_csq(&self) -> f64 {
        let (s, c) = self.points.iter().filter(|p| p.in_csq).fold((0usize, 0usize), |(s, c), p| (s + p.binding, c + 1));
        if c == 0 {
            0.0
        } else {
            s as f64 / c as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CsqConfig {
    pub scheme: WeightScheme,
    pub critical: CriticalValueConfig,
}

/// `G(q)`, `c^{α₁}(q)` and memberships at a single `q`.
pub fn evaluate_point(
    stack: &ReducedFormStack,
    q: &DVector<f64>,
    cfg: &CsqConfig,
    panel: &DrawPanel,
) -> Result<GridPoint> {
    let (g, diag) = objective_g(stack, q, cfg.scheme)?;
    let in_fhat = stack.satisfies(&stack.phi_q, q);
    let c = critical_value(&diag, cfg.scheme, &cfg.critical, panel)?;
    Ok(GridPoint {
        q: q.iter().copied().collect(),
        g,
        critical_value: c,
        in_fhat,
        in_csq: in_fhat || g <= c,
        binding: diag.r1,
        rank: diag.rank,
    })
}

/// Level set `{q : G(q) ≤ c^{α₁}(q)} ∪ F̂^q` over the grid. An empty result
/// signals restrictions at odds with the estimated reduced form.
pub fn cs_q(stack: &ReducedFormStack, grid: &QGrid, cfg: &CsqConfig) -> Result<QGridResult> {
    cfg.critical.validate()?;
    let m = stack.dim();
    let shared = cfg.critical.share_draws.then(|| cfg.critical.panel(m, 0));
    let points: Vec<GridPoint> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(j, q)| match &shared {
            Some(panel) => evaluate_point(stack, q, cfg, panel),
            None => evaluate_point(stack, q, cfg, &cfg.critical.panel(m, j)),
        })
        .collect::<Result<_>>()?;
    let n_fhat = points.iter().filter(|p| p.in_fhat).count();
    let n_csq = points.iter().filter(|p| p.in_csq).count();
    if n_csq == 0 {
        log::warn!("CS^q is empty: the sign restrictions appear inconsistent with the estimated reduced form");
    }
    Ok(QGridResult { points, n_fhat, n_csq, spacing: grid.spacing() })
}

/// `[min θ(q), max θ(q)]` over grid points in `F̂^q`.
pub fn estimated_identified_set_theta(
    stack: &ReducedFormStack,
    result: &QGridResult,
    target: usize,
) -> Option<Interval> {
    let ts = stack.target(target);
    result.points.iter().filter(|p| p.in_fhat).fold(None, |acc, p| {
        let v = theta_value(ts, &DVector::from_column_slice(&p.q));
        Some(Interval::hull(acc, Interval::point(v)))
    })
}

/// Wald interval at one `q`, before and after intersecting with `Θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldInterval {
    pub raw: Interval,
    pub truncated: Option<Interval>,
}

fn wald_core(kind: TargetKind, phi: &DVector<f64>, lambda: &nalgebra::DMatrix<f64>, t: f64, q: &DVector<f64>, z: f64) -> Interval {
    let centre = theta_at(kind, phi, q);
    let grad = theta_gradient(kind, phi, q);
    let var = grad.dot(&(lambda * &grad)).max(0.0) / t;
    let half = z * var.sqrt();
    Interval::new(centre - half, centre + half)
}

/// `θ̂(q) ± z_{α₂/2}·σ̂(q)` with `σ̂² = ∇ᵀΛ̂_θθ∇ / T` (`∇ = q` for responses).
pub fn wald_theta(stack: &ReducedFormStack, target: usize, q: &DVector<f64>, alpha2: f64) -> Result<WaldInterval> {
    if !(alpha2 > 0.0 && alpha2 < 1.0) {
        return Err(Error::InvalidInput(format!("α₂ = {alpha2} outside (0, 1)")));
    }
    let ts = stack.target(target);
    let lambda = ts.lambda.as_ref().ok_or(Error::MissingCovariance)?;
    let raw = wald_core(ts.target.kind, &ts.phi, lambda, stack.sample_size as f64, q, normal::two_sided_critical(alpha2));
    Ok(WaldInterval { raw, truncated: raw.intersect(ts.bounds) })
}

/// `Θ ∩ [min lower, max upper]`; `None` when there are no intervals or the
/// hull misses `Θ`.
pub fn bonferroni_union<I: IntoIterator<Item = Interval>>(intervals: I, bounds: (f64, f64)) -> Option<Interval> {
    intervals.into_iter().fold(None, |acc, iv| Some(Interval::hull(acc, iv)))?.intersect(bounds)
}

/// Plug-in set and Bonferroni interval for one target.
#[derive(Debug, Clone, Serialize)]
pub struct BandEntry {
    pub kind: TargetKind,
    pub variable: usize,
    pub horizon: usize,
    pub fhat: Option<Interval>,
    pub cs: Option<Interval>,
}

/// `CS^θ` for one target; empty when `CS^q` is empty.
pub fn bonferroni_theta(stack: &ReducedFormStack, result: &QGridResult, target: usize, alpha2: f64) -> Result<BandEntry> {
    if !(alpha2 > 0.0 && alpha2 < 1.0) {
        return Err(Error::InvalidInput(format!("α₂ = {alpha2} outside (0, 1)")));
    }
    let ts = stack.target(target);
    let lambda = ts.lambda.as_ref().ok_or(Error::MissingCovariance)?;
    let z = normal::two_sided_critical(alpha2);
    let t = stack.sample_size as f64;
    let walds = result
        .points
        .iter()
        .filter(|p| p.in_csq)
        .map(|p| wald_core(ts.target.kind, &ts.phi, lambda, t, &DVector::from_column_slice(&p.q), z));
    Ok(BandEntry {
        kind: ts.target.kind,
        variable: ts.target.variable,
        horizon: ts.target.horizon,
        fhat: estimated_identified_set_theta(stack, result, target),
        cs: bonferroni_union(walds, ts.bounds),
    })
}

/// Bands for every target of the stack, reusing one `CS^q`.
pub fn bands(stack: &ReducedFormStack, result: &QGridResult, alpha2: f64) -> Result<Vec<BandEntry>> {
    (0..stack.targets.len())
        .into_par_iter()
        .map(|j| bonferroni_theta(stack, result, j, alpha2))
        .collect()
}

/// Impulse-response band of one variable, ordered by horizon.
pub fn irf_band(stack: &ReducedFormStack, result: &QGridResult, variable: usize, alpha2: f64) -> Result<Vec<BandEntry>> {
    let mut idx: Vec<usize> = (0..stack.targets.len())
        .filter(|&j| {
            let t = stack.targets[j].target;
            t.variable == variable && t.kind == TargetKind::Irf
        })
        .collect();
    idx.sort_by_key(|&j| stack.targets[j].target.horizon);
    idx.into_iter().map(|j| bonferroni_theta(stack, result, j, alpha2)).collect()
}
